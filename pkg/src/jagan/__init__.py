"""Face anonymization for images and videos.

Detected faces are blacked out and replaced with generated ones: a
two-stage inpainting GAN fills each masked face square from its visual
context, and in video mode conditions every frame on its two predecessors
so the invented identity stays stable through a sequence.  Submodules:

``preprocess``  box geometry, context crops, masks, paste-back
``nets``        generators and discriminators
``losses``      adversarial, feature-matching, discounted-L1, R1 terms
``trainer``     image and video optimization loops, checkpoints
``inference``   anonymization with burn-in warm-up
``metrics``     FID/FVD kernel and the identity-invariance score
``curation``    IoU tracking, dHash scene-cut filtering, crop emission
``cli``         the ``jagan`` command
"""

__version__ = "0.1.0"

from .errors import JaganError

__all__ = ["JaganError", "__version__"]
