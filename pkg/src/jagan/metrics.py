"""Distribution and identity metrics.

Fréchet distances (FID over per-image features, FVD over per-clip features)
take a pluggable feature extractor so tests can swap the heavyweight
pretrained backbones for a deterministic random projection.

Identity invariance (IdI) compares how far face embeddings drift between
consecutive frames in real versus anonymized footage: the ratio of the two
median squared L2 distances.  1.0 means generated faces hold identity as
steadily as real ones; below 1.0 means they drift more.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateMedian, DimensionMismatch, NoFaceDetected, NonPSD

log = logging.getLogger(__name__)

_PSD_TOLERANCE = -1e-8


@dataclass(frozen=True)
class GaussianStats:
    """First and second moments of a feature cloud, plus its sample count."""

    mean: np.ndarray
    cov: np.ndarray
    n: int = 0

    @classmethod
    def fit(cls, features: np.ndarray) -> "GaussianStats":
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2:
            raise DimensionMismatch(f"features must be NxD, got shape {feats.shape}")
        if feats.shape[0] < 2:
            raise DimensionMismatch("need at least 2 samples to estimate covariance")
        mean = feats.mean(axis=0)
        cov = np.cov(feats, rowvar=False, ddof=1)
        cov = np.atleast_2d(cov)
        return cls(mean, cov, feats.shape[0])


def _sqrt_psd_trace(a: np.ndarray, b: np.ndarray) -> float:
    """tr((a b)^(1/2)) for symmetric PSD a, b, via the symmetrized product.

    Eigenvalues of sqrt(a) b sqrt(a) equal those of a b but the former is
    symmetric, so eigh applies.  Tiny negative eigenvalues (above -1e-8)
    are clamped to zero; anything more negative raises NonPSD.
    """
    ra = _sqrt_sym(a)
    inner = ra @ b @ ra
    inner = (inner + inner.T) / 2.0
    eig = np.linalg.eigvalsh(inner)
    if eig.min() < _PSD_TOLERANCE * max(1.0, abs(eig.max())):
        raise NonPSD(f"product matrix eigenvalue {eig.min():g} below tolerance")
    return float(np.sqrt(np.clip(eig, 0.0, None)).sum())


def _sqrt_sym(a: np.ndarray) -> np.ndarray:
    a = (a + a.T) / 2.0
    vals, vecs = np.linalg.eigh(a)
    if vals.min() < _PSD_TOLERANCE * max(1.0, abs(vals.max())):
        raise NonPSD(f"covariance eigenvalue {vals.min():g} below tolerance")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(s1: GaussianStats, s2: GaussianStats) -> float:
    """||mu1-mu2||^2 + tr(C1 + C2 - 2 (C1 C2)^(1/2)), clamped at zero."""
    if s1.mean.shape != s2.mean.shape:
        raise DimensionMismatch(
            f"feature dims differ: {s1.mean.shape} vs {s2.mean.shape}")
    diff = s1.mean - s2.mean
    val = float(diff @ diff) + float(np.trace(s1.cov) + np.trace(s2.cov))
    val -= 2.0 * _sqrt_psd_trace(s1.cov, s2.cov)
    return max(val, 0.0)


def fid(real_features: np.ndarray, gen_features: np.ndarray) -> float:
    return frechet_distance(GaussianStats.fit(real_features),
                            GaussianStats.fit(gen_features))


def fvd(real_clip_features: np.ndarray, gen_clip_features: np.ndarray) -> float:
    return frechet_distance(GaussianStats.fit(real_clip_features),
                            GaussianStats.fit(gen_clip_features))


class RandomProjectionExtractor:
    """Deterministic stand-in for a pretrained feature backbone.

    Projects flattened images through a fixed Gaussian matrix drawn from
    ``seed``; one matrix is kept per input size.  Linear, so shifting a
    batch of images shifts its features in an exactly predictable way,
    which the metric tests exploit.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._matrices: dict[int, np.ndarray] = {}

    def _matrix(self, flat_size: int) -> np.ndarray:
        mat = self._matrices.get(flat_size)
        if mat is None:
            rng = np.random.default_rng(self.seed + flat_size)
            mat = rng.standard_normal((flat_size, self.dim)) / np.sqrt(flat_size)
            self._matrices[flat_size] = mat
        return mat

    def __call__(self, images) -> np.ndarray:
        batch = np.asarray(images, dtype=np.float64)
        flat = batch.reshape(batch.shape[0], -1)
        return flat @ self._matrix(flat.shape[1])


class RandomProjectionVideoExtractor(RandomProjectionExtractor):
    """Per-clip features: mean of the frame projections over time."""

    def __call__(self, clips) -> np.ndarray:
        feats = []
        for clip in clips:
            clip = np.asarray(clip, dtype=np.float64)
            flat = clip.reshape(clip.shape[0], -1)
            feats.append((flat @ self._matrix(flat.shape[1])).mean(axis=0))
        return np.stack(feats)


# ---------------------------------------------------------------------------
# Identity invariance

@dataclass
class EmbeddingSequence:
    """Unit-norm face embeddings for consecutive frames of one track."""

    sequence_id: str
    embeddings: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.embeddings, dtype=np.float64)
        if e.ndim != 2:
            raise DimensionMismatch(f"embeddings must be TxD, got {e.shape}")
        norms = np.linalg.norm(e, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError(
                f"embeddings must be unit-norm (|n-1| max {abs(norms - 1).max():g})")
        self.embeddings = e


def pairwise_sq_l2(seq: EmbeddingSequence) -> np.ndarray:
    """Squared L2 distance between each consecutive embedding pair."""
    diffs = np.diff(seq.embeddings, axis=0)
    return (diffs ** 2).sum(axis=1)


@dataclass
class IdiResult:
    real_median: float
    gen_median: float
    idi: float
    per_offset_real: list = field(default_factory=list)
    per_offset_gen: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"real_median": self.real_median,
                "gen_median": self.gen_median,
                "idi": self.idi}


def idi_score(real_distances: np.ndarray, gen_distances: np.ndarray) -> IdiResult:
    """Ratio of median consecutive-frame embedding drifts, real over generated.

    Distances are pooled across sequences before taking medians.  A zero
    generated median (constant embeddings) has no meaningful ratio and
    raises DegenerateMedian.
    """
    real = np.asarray(real_distances, dtype=np.float64).ravel()
    gen = np.asarray(gen_distances, dtype=np.float64).ravel()
    if real.size == 0 or gen.size == 0:
        raise DegenerateMedian("no consecutive-frame distances to pool")
    rm = float(np.median(real))
    gm = float(np.median(gen))
    if gm == 0.0:
        raise DegenerateMedian("generated median distance is zero")
    return IdiResult(rm, gm, rm / gm)


def format_idi(value: float) -> str:
    """Two-decimal display with round-half-even, e.g. 0.421... -> '0.42'."""
    return f"{round(value, 2):.2f}"


def _aggregate(real_maps: list, gen_maps: list) -> IdiResult:
    """Score from per-video {transition index: distance} maps.

    Distances are pooled across videos for the medians; the per-offset
    median series (one median per transition index, across videos) is kept
    alongside for drift-profile plots.
    """
    real_pool = np.array([d for m in real_maps for d in m.values()])
    gen_pool = np.array([d for m in gen_maps for d in m.values()])
    result = idi_score(real_pool, gen_pool)
    result.per_offset_real = _per_offset_medians(real_maps)
    result.per_offset_gen = _per_offset_medians(gen_maps)
    return result


def _per_offset_medians(maps: list) -> list:
    indices = sorted({i for m in maps for i in m})
    return [float(np.median([m[i] for m in maps if i in m])) for i in indices]


def idi_from_sequences(real_seqs: list, gen_seqs: list) -> IdiResult:
    """Score precomputed embedding sequences (every frame present)."""
    real_maps = [dict(enumerate(pairwise_sq_l2(s))) for s in real_seqs]
    gen_maps = [dict(enumerate(pairwise_sq_l2(s))) for s in gen_seqs]
    return _aggregate(real_maps, gen_maps)


def _video_distances(videos: list, detector, embedder) -> list:
    """Per-video {transition index: squared drift} with detection gaps skipped.

    ``detector(frame)`` returns face boxes (empty or NoFaceDetected on
    failure); ``embedder(frame, box)`` returns a unit-norm vector.  A frame
    with no detection drops both transitions it participates in, and the
    skip is logged.
    """
    all_maps = []
    for vi, frames in enumerate(videos):
        embeddings = []
        for fi, frame in enumerate(frames):
            try:
                boxes = detector(frame)
            except NoFaceDetected:
                boxes = []
            if not boxes:
                log.warning("idi: no face in video %d frame %d, skipping", vi, fi)
                embeddings.append(None)
                continue
            embeddings.append(np.asarray(embedder(frame, boxes[0]), dtype=np.float64))
        dists = {}
        for i in range(len(embeddings) - 1):
            a, b = embeddings[i], embeddings[i + 1]
            if a is not None and b is not None:
                dists[i] = float(((b - a) ** 2).sum())
        all_maps.append(dists)
    return all_maps


def idi_pipeline(real_videos: list, generated_videos: list,
                 detector, embedder) -> IdiResult:
    """Full identity-invariance evaluation over raw frame sequences.

    Runs detection and embedding per frame through the supplied providers,
    pools consecutive-frame squared drifts for both sets, and returns the
    medians, their ratio, and the per-offset median series.
    """
    return _aggregate(_video_distances(real_videos, detector, embedder),
                      _video_distances(generated_videos, detector, embedder))


def embeddings_from_json(path) -> list[EmbeddingSequence]:
    """Load ``[{"sequence_id": ..., "embeddings": [[...], ...]}, ...]``."""
    with open(Path(path)) as fh:
        records = json.load(fh)
    if isinstance(records, dict):
        records = [records]
    return [EmbeddingSequence(str(r.get("sequence_id", i)), np.asarray(r["embeddings"]))
            for i, r in enumerate(records)]
