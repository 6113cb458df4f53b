import numpy as np
import pytest
import torch

from jagan.nets import NetConfig, build_models

torch.set_num_threads(2)


def gradient_frame(h, w, seed=0):
    """Smooth deterministic test frame in [-1, 1], quantized to 8-bit steps."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    base = np.stack([
        yy / max(h - 1, 1),
        xx / max(w - 1, 1),
        (yy + xx) / max(h + w - 2, 1),
    ], axis=-1)
    noise = rng.normal(0, 0.05, size=base.shape).astype(np.float32)
    px = np.clip((base + noise) * 255.0, 0, 255).astype(np.uint8)
    return (px.astype(np.float32) / np.float32(127.5)) - np.float32(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_image_bundle():
    torch.manual_seed(0)
    return build_models(NetConfig(resolution=32))


@pytest.fixture(scope="session")
def tiny_video_bundle():
    torch.manual_seed(0)
    return build_models(NetConfig(resolution=32, video_mode=True))


def small_net_config(resolution=16, video=False, **overrides):
    """Shrunk NetConfig so optimizer-loop tests stay fast on CPU."""
    channels = tuple(min(8 << i, 32) for i in range((resolution).bit_length() - 2))
    params = dict(resolution=resolution, video_mode=video,
                  coarse_channels=channels + (48,), fine_base_width=8,
                  n_residual_blocks=1, n_image_disc_scales=2)
    params.update(overrides)
    return NetConfig(**params)


def small_bundle(seed=0, **kwargs):
    torch.manual_seed(seed)
    return build_models(small_net_config(**kwargs))


def synthetic_crop_batch(n, resolution, seed=0):
    """Conditioning volumes + targets shaped like real extracted face crops."""
    rng = np.random.default_rng(seed)
    inputs = np.zeros((n, 5, resolution, resolution), dtype=np.float32)
    targets = np.zeros((n, 3, resolution, resolution), dtype=np.float32)
    q = resolution // 4
    for i in range(n):
        target = gradient_frame(resolution, resolution, seed=seed + 101 * i)
        crop = target.copy()
        crop[q:3 * q, q:3 * q] = -1.0
        inputs[i, :3] = crop.transpose(2, 0, 1)
        inputs[i, 4, q:3 * q, q:3 * q] = 1.0
        targets[i] = target.transpose(2, 0, 1)
    return inputs, targets
