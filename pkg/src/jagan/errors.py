"""Exception types shared across the toolkit."""


class JaganError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(JaganError):
    """Tensor or mask shapes disagree with the expected layout."""


class DetectionOutsideFrame(JaganError):
    """A face box has empty intersection with its frame."""


class DimensionMismatch(JaganError):
    """Statistics or embeddings of different dimensionality were combined."""


class NonPSD(JaganError):
    """A covariance matrix has eigenvalues below the clamping threshold."""


class DegenerateMedian(JaganError):
    """The denominator median of an identity-invariance ratio is zero."""


class GradientUnavailable(JaganError):
    """A gradient-based penalty was requested in a no-gradient context."""


class DatasetEmpty(JaganError):
    """A trainer was handed a dataset with no usable samples."""


class SequenceTooShort(JaganError):
    """A frame sequence has fewer than the required usable frames."""


class NonFiniteLoss(JaganError):
    """Training hit a NaN/Inf loss; carries the last finite checkpoint."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class CheckpointError(JaganError):
    """A checkpoint file is missing, truncated, or has a bad header."""


class CheckpointModeMismatch(JaganError):
    """An image-mode checkpoint was used for video work or vice versa."""


class NoFaceDetected(JaganError):
    """No detection was returned for a frame that required one."""


class UsageError(JaganError):
    """Bad command line arguments."""
