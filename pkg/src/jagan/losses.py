"""Training losses.

Adversarial terms use the least-squares objective.  Reconstruction is L1
weighted by a spatial discount that decays exponentially with the Chebyshev
distance to the nearest known pixel, so the generator is trusted more the
deeper it is inside the hole.  Feature matching compares discriminator
activations between real and fake, and R1 penalizes the discriminator's
gradient on real samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

from .errors import GradientUnavailable, ShapeMismatch


@dataclass
class LossWeights:
    w_adv: float = 1.0
    w_fm: float = 10.0
    w_rec_coarse: float = 10.0
    w_rec_fine: float = 10.0
    w_r1: float = 10.0
    w_video_adv: float = 1.0
    w_video_fm: float = 10.0
    gamma_discount: float = 0.99


def _score_maps(disc_out):
    """Score maps (last tensor per scale) from multi-scale disc output."""
    return [feats[-1] for feats in disc_out]


def lsgan_d(real_out, fake_out) -> torch.Tensor:
    """Discriminator loss: 1/2 E[(D(x)-1)^2] + 1/2 E[D(G(z))^2], mean over scales."""
    terms = []
    for r, f in zip(_score_maps(real_out), _score_maps(fake_out)):
        terms.append(0.5 * ((r - 1.0) ** 2).mean() + 0.5 * (f ** 2).mean())
    return torch.stack(terms).mean()


def lsgan_g(fake_out) -> torch.Tensor:
    """Generator loss: 1/2 E[(D(G(z))-1)^2], mean over scales."""
    terms = [0.5 * ((f - 1.0) ** 2).mean() for f in _score_maps(fake_out)]
    return torch.stack(terms).mean()


def feature_matching(real_out, fake_out) -> torch.Tensor:
    """Mean L1 distance between real and fake activations.

    Every layer of every per-scale discriminator contributes one mean-L1
    term (score maps included); the result is their average.  Real features
    should already be detached by the caller; this function does not cut
    the graph itself.
    """
    terms = []
    for real_feats, fake_feats in zip(real_out, fake_out):
        for r, f in zip(real_feats, fake_feats):
            terms.append((f - r).abs().mean())
    if not terms:
        raise ShapeMismatch("discriminator produced no feature layers")
    return torch.stack(terms).mean()


def discount_weights(anon_mask: np.ndarray, gamma: float = 0.99) -> np.ndarray:
    """Per-pixel reconstruction weights: gamma**d inside the mask, 0 outside.

    d is the Chebyshev (chessboard) distance to the nearest pixel outside
    the anonymization mask, so the hole boundary gets gamma^1 and weights
    decay inward.  Unmasked pixels are ground-truth context, not
    reconstruction targets, hence weight 0.  Pixels beyond the crop edge
    count as known: the mask is zero-padded by one pixel before the
    distance transform, so a fully masked crop still decays from its rim.
    """
    m = np.asarray(anon_mask)
    if m.ndim != 2:
        raise ShapeMismatch(f"anon_mask must be 2-D, got shape {m.shape}")
    padded = np.zeros((m.shape[0] + 2, m.shape[1] + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = m
    dist = ndimage.distance_transform_cdt(padded, metric="chessboard")
    d = dist[1:-1, 1:-1].astype(np.float64)
    weights = np.power(np.float64(gamma), d)
    weights[m == 0] = 0.0
    return weights.astype(np.float32)


def discounted_l1(output: torch.Tensor, target: torch.Tensor,
                  weights: torch.Tensor) -> torch.Tensor:
    """Weighted mean absolute error; weights broadcast over channels.

    Returns 0 when the weights are all zero (nothing to reconstruct).
    """
    if output.shape != target.shape:
        raise ShapeMismatch(f"output {tuple(output.shape)} vs target {tuple(target.shape)}")
    if weights.dim() == output.dim() - 1:
        weights = weights.unsqueeze(-3)
    err = (output - target).abs() * weights
    denom = weights.expand_as(err).sum()
    if denom.item() == 0.0:
        return output.sum() * 0.0
    return err.sum() / denom


def r1_penalty(scores: list, real_inputs: list, weight: float = 10.0) -> torch.Tensor:
    """R1 regularizer: weight * 1/2 * E[||grad_x D(x)||^2] on real samples.

    ``scores`` are the discriminator score maps, ``real_inputs`` the leaf
    tensors they were computed from (requires_grad must already be set).
    Raises GradientUnavailable when autograd cannot reach the inputs.
    """
    flat = [s.sum() for s in scores]
    total = torch.stack(flat).sum()
    if not total.requires_grad:
        raise GradientUnavailable("scores are detached from the graph")
    grads = torch.autograd.grad(total, real_inputs, create_graph=True,
                                allow_unused=True)
    if all(g is None for g in grads):
        raise GradientUnavailable("no gradient path from scores to real inputs")
    penalty = 0.0
    n = 0
    for g in grads:
        if g is None:
            continue
        penalty = penalty + (g ** 2).reshape(g.shape[0], -1).sum(dim=1).mean()
        n += 1
    return weight * 0.5 * penalty


def detach_features(disc_out):
    """Detach every tensor in a multi-scale discriminator output."""
    return [[t.detach() for t in feats] for feats in disc_out]
