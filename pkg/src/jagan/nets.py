"""Generator and discriminator architectures.

The generator is two-stage: a U-Net (4x4 stride-2 convs down to a 1000-wide
1x1 bottleneck, transposed convs back up with copy-and-concat skips) emits a
coarse face at half resolution, then a residual-block refinement network
(7x7 ingress, two stride-2 downsamplings, nine residual blocks, upsample+conv
back up, 7x7 egress) sharpens the composite at full resolution.  Both end in
tanh.

Image discriminators are PatchGANs replicated over three spatial scales with
per-layer features exposed for feature matching.  The video discriminator is
a bank of such multi-scale discriminators, one per temporal stride, each
looking at a triple of frames (t0, t0-s, t0-2s) plus their anonymization
masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeMismatch

CONDITION_CHANNELS = 5       # crop RGB + border mask + anon mask
VIDEO_CONDITION_CHANNELS = 11  # two past RGB frames in front of the above
TIME_SCALES = (1, 3, 9)


BOTTLENECK_WIDTH = 1000


@dataclass(frozen=True)
class NetConfig:
    """Hyperparameters shared by every network in one model.

    ``resolution`` must be a power of two ≥ 16 so the U-Net encoder can
    reach a 1x1 bottleneck (nominally 128 or 256; tests run smaller).
    ``coarse_channels`` overrides the encoder widths; empty means the
    default geometric ramp 64, 128, 256, 512, ... capped at 512, ending in
    the 1000-wide bottleneck.  ``n_time_scales`` counts the video
    discriminator's temporal strides 1, 3, 9, ...
    """

    resolution: int = 256
    video_mode: bool = False
    coarse_channels: tuple = ()
    fine_base_width: int = 64
    n_residual_blocks: int = 9
    n_image_disc_scales: int = 3
    n_time_scales: int = 3

    def __post_init__(self):
        r = self.resolution
        if r < 16 or (r & (r - 1)) != 0:
            raise ValueError(f"resolution must be a power of two >= 16, got {r}")
        if self.coarse_channels and len(self.coarse_channels) != self.depth:
            raise ValueError(
                f"coarse_channels needs {self.depth} entries for resolution "
                f"{r}, got {len(self.coarse_channels)}")

    @property
    def depth(self) -> int:
        return self.resolution.bit_length() - 1

    @property
    def condition_channels(self) -> int:
        return VIDEO_CONDITION_CHANNELS if self.video_mode else CONDITION_CHANNELS

    @property
    def time_scales(self) -> tuple:
        return tuple(3 ** i for i in range(self.n_time_scales))

    def encoder_widths(self) -> list[int]:
        if self.coarse_channels:
            return list(self.coarse_channels)
        widths = [min(64 << i, 512) for i in range(self.depth - 1)]
        return widths + [BOTTLENECK_WIDTH]


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)


class CoarseGenerator(nn.Module):
    """U-Net emitting a 3-channel face estimate at half input resolution.

    Encoder: 4x4 stride-2 convolutions with BatchNorm (skipped on the first
    layer and at the 1x1 bottleneck) and LeakyReLU.  Decoder: 4x4 stride-2
    transposed convolutions with BatchNorm and ReLU, each input concatenated
    with the matching encoder feature.  The decoder stops one level short of
    the input size, so a ``resolution`` input yields ``resolution / 2``.
    """

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        widths = cfg.encoder_widths()
        k = cfg.depth

        downs = []
        in_ch = cfg.condition_channels
        for i, out_ch in enumerate(widths):
            block = [nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1)]
            if 0 < i < k - 1:
                block.append(nn.BatchNorm2d(out_ch))
            block.append(nn.LeakyReLU(0.2, inplace=True))
            downs.append(nn.Sequential(*block))
            in_ch = out_ch
        self.downs = nn.ModuleList(downs)

        ups = []
        for i in range(k - 2, -1, -1):
            in_ch = widths[k - 1] if i == k - 2 else 2 * widths[i + 1]
            ups.append(nn.Sequential(
                nn.ConvTranspose2d(in_ch, widths[i], 4, stride=2, padding=1),
                nn.BatchNorm2d(widths[i]),
                nn.ReLU(inplace=True),
            ))
        self.ups = nn.ModuleList(ups)
        self.head = nn.Conv2d(2 * widths[0], 3, 3, padding=1)
        init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.cfg.condition_channels:
            raise ShapeMismatch(
                f"expected {self.cfg.condition_channels} input channels, "
                f"got {x.shape[1]}")
        if x.shape[2] != self.cfg.resolution or x.shape[3] != self.cfg.resolution:
            raise ShapeMismatch(
                f"expected {self.cfg.resolution}x{self.cfg.resolution} input, "
                f"got {tuple(x.shape[2:])}")
        skips = []
        for down in self.downs:
            x = down(x)
            skips.append(x)
        x = skips[-1]
        for j, up in enumerate(self.ups):
            x = up(x)
            x = torch.cat([x, skips[len(skips) - 2 - j]], dim=1)
        return torch.tanh(self.head(x))


class ResidualBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(width, width, 3),
            nn.InstanceNorm2d(width),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(width, width, 3),
            nn.InstanceNorm2d(width),
        )

    def forward(self, x):
        return x + self.body(x)


class FineGenerator(nn.Module):
    """Full-resolution refinement over the coarse composite.

    Always conditioned on 5 channels (composite RGB + the two masks), even
    in video mode: temporal context enters through the coarse stage only.
    """

    def __init__(self, cfg: NetConfig):
        super().__init__()
        w = cfg.fine_base_width
        layers = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(CONDITION_CHANNELS, w, 7),
            nn.InstanceNorm2d(w),
            nn.ReLU(inplace=True),
        ]
        for _ in range(2):
            layers += [
                nn.Conv2d(w, 2 * w, 3, stride=2, padding=1),
                nn.InstanceNorm2d(2 * w),
                nn.ReLU(inplace=True),
            ]
            w *= 2
        layers += [ResidualBlock(w) for _ in range(cfg.n_residual_blocks)]
        for _ in range(2):
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(w, w // 2, 3, padding=1),
                nn.InstanceNorm2d(w // 2),
                nn.ReLU(inplace=True),
            ]
            w //= 2
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(w, 3, 7), nn.Tanh()]
        self.body = nn.Sequential(*layers)
        init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != CONDITION_CHANNELS:
            raise ShapeMismatch(f"expected {CONDITION_CHANNELS} channels, got {x.shape[1]}")
        return self.body(x)


class PatchDiscriminator(nn.Module):
    """70x70-receptive-field PatchGAN returning per-layer features.

    ``forward`` yields [feat1, feat2, feat3, feat4, score]; the score map is
    unbounded (least-squares objective, no sigmoid).
    """

    def __init__(self, in_channels: int, base_width: int = 64):
        super().__init__()
        w = base_width
        kw, padw = 4, 2
        self.blocks = nn.ModuleList([
            nn.Sequential(
                nn.Conv2d(in_channels, w, kw, stride=2, padding=padw),
                nn.LeakyReLU(0.2, inplace=True)),
            nn.Sequential(
                nn.Conv2d(w, 2 * w, kw, stride=2, padding=padw),
                nn.InstanceNorm2d(2 * w),
                nn.LeakyReLU(0.2, inplace=True)),
            nn.Sequential(
                nn.Conv2d(2 * w, 4 * w, kw, stride=2, padding=padw),
                nn.InstanceNorm2d(4 * w),
                nn.LeakyReLU(0.2, inplace=True)),
            nn.Sequential(
                nn.Conv2d(4 * w, 8 * w, kw, stride=1, padding=padw),
                nn.InstanceNorm2d(8 * w),
                nn.LeakyReLU(0.2, inplace=True)),
        ])
        self.score = nn.Conv2d(8 * w, 1, kw, stride=1, padding=padw)
        init_weights(self)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for block in self.blocks:
            x = block(x)
            feats.append(x)
        feats.append(self.score(x))
        return feats


class MultiScaleDiscriminator(nn.Module):
    """Identical PatchGANs applied at progressively halved resolutions.

    Returns one feature list per scale, finest first.  Scale s sees the
    input average-pooled s times (kernel 3, stride 2, as in pix2pixHD).
    """

    def __init__(self, in_channels: int, n_scales: int = 3, base_width: int = 64):
        super().__init__()
        self.scales = nn.ModuleList(
            [PatchDiscriminator(in_channels, base_width) for _ in range(n_scales)])

    def forward(self, x: torch.Tensor) -> list[list[torch.Tensor]]:
        outputs = []
        for disc in self.scales:
            outputs.append(disc(x))
            x = F.avg_pool2d(x, 3, stride=2, padding=1, count_include_pad=False)
        return outputs


class ImageDiscriminator(MultiScaleDiscriminator):
    """Multi-scale discriminator over [image(3), border(1), anon(1)]."""

    def __init__(self, cfg: NetConfig):
        super().__init__(CONDITION_CHANNELS, cfg.n_image_disc_scales)

    def forward(self, image, border_mask, anon_mask):
        return super().forward(torch.cat([image, border_mask, anon_mask], dim=1))


def temporal_sample_sets(t0: int, n_prior: int,
                         time_scales: tuple = TIME_SCALES) -> list[tuple[int, tuple[int, int, int]]]:
    """Frame triples a video discriminator may inspect at time ``t0``.

    For stride s the triple is (t0, t0-s, t0-2s); it exists only when
    ``n_prior`` (frames available before t0) covers the span 2s.  Returns
    [(stride, triple), ...] in increasing stride order.
    """
    sets = []
    for s in time_scales:
        if n_prior >= 2 * s:
            sets.append((s, (t0, t0 - s, t0 - 2 * s)))
    return sets


class VideoDiscriminator(nn.Module):
    """One multi-scale discriminator per temporal stride, independent weights.

    Each sees 12 channels: three RGB frames of a triple plus their three
    anonymization masks.  ``forward`` takes the stride so gradients reach
    only that stride's bank.
    """

    FRAME_TRIPLE_CHANNELS = 12

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.time_scales = tuple(cfg.time_scales)
        self.banks = nn.ModuleDict({
            str(s): MultiScaleDiscriminator(self.FRAME_TRIPLE_CHANNELS,
                                            cfg.n_image_disc_scales)
            for s in self.time_scales
        })

    def forward(self, stride: int, frames: torch.Tensor,
                anon_masks: torch.Tensor) -> list[list[torch.Tensor]]:
        if frames.shape[1] != 9 or anon_masks.shape[1] != 3:
            raise ShapeMismatch(
                f"want 9 frame channels + 3 mask channels, got "
                f"{frames.shape[1]} + {anon_masks.shape[1]}")
        return self.banks[str(stride)](torch.cat([frames, anon_masks], dim=1))


@dataclass
class ModelBundle:
    """Everything trainable for one mode, built from a single NetConfig."""

    config: NetConfig
    coarse: CoarseGenerator
    fine: FineGenerator
    image_disc: ImageDiscriminator
    video_disc: VideoDiscriminator = None

    def generator_parameters(self):
        yield from self.coarse.parameters()
        yield from self.fine.parameters()

    def discriminator_parameters(self):
        yield from self.image_disc.parameters()
        if self.video_disc is not None:
            yield from self.video_disc.parameters()

    def train(self):
        for net in self._nets():
            net.train()

    def eval(self):
        for net in self._nets():
            net.eval()

    def _nets(self):
        nets = [self.coarse, self.fine, self.image_disc]
        if self.video_disc is not None:
            nets.append(self.video_disc)
        return nets

    def state_dicts(self) -> dict:
        out = {"coarse": self.coarse.state_dict(),
               "fine": self.fine.state_dict(),
               "image_disc": self.image_disc.state_dict()}
        if self.video_disc is not None:
            out["video_disc"] = self.video_disc.state_dict()
        return out

    def load_state_dicts(self, states: dict) -> None:
        self.coarse.load_state_dict(states["coarse"])
        self.fine.load_state_dict(states["fine"])
        self.image_disc.load_state_dict(states["image_disc"])
        if self.video_disc is not None:
            self.video_disc.load_state_dict(states["video_disc"])


def build_models(cfg: NetConfig) -> ModelBundle:
    return ModelBundle(
        config=cfg,
        coarse=CoarseGenerator(cfg),
        fine=FineGenerator(cfg),
        image_disc=ImageDiscriminator(cfg),
        video_disc=VideoDiscriminator(cfg) if cfg.video_mode else None,
    )
