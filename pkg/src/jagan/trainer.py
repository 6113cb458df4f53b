"""Optimization loops for the image and video models.

Image training alternates discriminator and generator updates with separate
learning rates (two time-scale update rule, discriminator faster).  Video
training runs one joint step per batch: the generator is unrolled over a
window, recycling its own detached outputs as past-frame conditioning, and
both adversaries (per-frame image discriminator, temporal-pyramid video
discriminator) are updated together with the generator from the same
parameter snapshot.

Checkpoints are a magic header followed by a torch-serialized payload that
carries model, optimizer and RNG state, so a resumed run reproduces the
interrupted one bit for bit.
"""

from __future__ import annotations

import copy
import io
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import CheckpointError, NonFiniteLoss, SequenceTooShort, ShapeMismatch
from .losses import (LossWeights, detach_features, discount_weights,
                     discounted_l1, feature_matching, lsgan_d, lsgan_g,
                     r1_penalty)
from .metrics import (RandomProjectionExtractor, RandomProjectionVideoExtractor,
                      fid, fvd)
from .nets import ModelBundle, NetConfig, build_models, temporal_sample_sets
from .preprocess import (BoundingBox, assemble_generator_input,
                         extract_context_with_target)

CHECKPOINT_MAGIC = b"JAGANCKPT1"


@dataclass
class TrainConfig:
    mode: str = "image"
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    adam_betas: tuple = (0.5, 0.999)
    batch_size: int = 8
    max_steps: int = 1000
    eval_interval: int = 100
    stagnation_evals: int = 20
    unroll_len: int = 8
    seed: int = 0
    eval_batch_cap: int = 64
    snapshot_every: int = 1


@dataclass
class TrainingExample:
    """One face crop for image training: conditioning volume plus target."""

    inputs: np.ndarray   # (5, H, W) float32
    target: np.ndarray   # (3, H, W) float32


@dataclass
class VideoExample:
    """One curated track: per-frame conditioning volumes plus targets."""

    inputs: np.ndarray   # (T, 5, H, W) float32
    targets: np.ndarray  # (T, 3, H, W) float32

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass
class GeneratorOutput:
    coarse: torch.Tensor           # (B, 3, H/2, W/2)
    coarse_up: torch.Tensor        # (B, 3, H, W)
    composite_coarse: torch.Tensor
    fine: torch.Tensor
    composite_fine: torch.Tensor


def split_condition(x: torch.Tensor):
    """Last five channels of a conditioning volume: crop, border, anon."""
    if x.shape[1] < 5:
        raise ShapeMismatch(f"conditioning volume needs >= 5 channels, got {x.shape[1]}")
    return x[:, -5:-2], x[:, -2:-1], x[:, -1:]


def two_stage_step(bundle: ModelBundle, x: torch.Tensor) -> GeneratorOutput:
    """Run coarse then fine stage and composite into the masked crop.

    The coarse output (half resolution) is bilinearly upsampled, pasted
    into the hole, and handed to the fine stage with the masks re-attached;
    the fine output is composited the same way, so pixels outside the
    anonymization mask always equal the conditioning crop.
    """
    crop, border, anon = split_condition(x)
    coarse = bundle.coarse(x)
    coarse_up = F.interpolate(coarse, scale_factor=2, mode="bilinear",
                              align_corners=False)
    composite_coarse = crop * (1.0 - anon) + coarse_up * anon
    fine = bundle.fine(torch.cat([composite_coarse, border, anon], dim=1))
    composite_fine = crop * (1.0 - anon) + fine * anon
    return GeneratorOutput(coarse, coarse_up, composite_coarse, fine, composite_fine)


def unroll_generator(bundle: ModelBundle, inputs: torch.Tensor,
                     past_init: tuple = None) -> list[GeneratorOutput]:
    """Unroll the video generator over (B, T, 5, H, W) conditioning volumes.

    Past-frame slots start as zero tensors (or ``past_init``); each emitted
    composite is detached before being recycled, so gradients stay within a
    frame while the conditioning still carries temporal context forward.
    """
    b, t, _, h, w = inputs.shape
    if past_init is None:
        past1 = torch.zeros(b, 3, h, w, dtype=inputs.dtype)
        past2 = torch.zeros(b, 3, h, w, dtype=inputs.dtype)
    else:
        past2, past1 = past_init
    outputs = []
    for i in range(t):
        x = torch.cat([past2, past1, inputs[:, i]], dim=1)
        out = two_stage_step(bundle, x)
        outputs.append(out)
        past2 = past1
        past1 = out.composite_fine.detach()
    return outputs


def image_examples_from_sequences(sequences, resolution: int) -> list[TrainingExample]:
    """Flatten loaded frame sequences into per-face image training examples."""
    examples = []
    for seq in sequences:
        for i, (frame, boxes) in enumerate(zip(seq.frames, seq.boxes)):
            for box in boxes:
                ctx, target = extract_context_with_target(
                    frame, BoundingBox(*box), resolution, frame_id=(seq.sequence_id, i))
                examples.append(TrainingExample(
                    assemble_generator_input(ctx),
                    np.ascontiguousarray(target.transpose(2, 0, 1))))
    return examples


def video_examples_from_sequences(sequences, resolution: int,
                                  min_frames: int = 3) -> list[VideoExample]:
    """Turn curated tracks (one box per frame) into video training examples.

    Sequences shorter than ``min_frames`` or with a box-less frame are
    skipped: the unroll needs an unbroken track.
    """
    examples = []
    for seq in sequences:
        if len(seq) < min_frames or any(not b for b in seq.boxes):
            continue
        ins, tgts = [], []
        for i, (frame, boxes) in enumerate(zip(seq.frames, seq.boxes)):
            ctx, target = extract_context_with_target(
                frame, BoundingBox(*boxes[0]), resolution, frame_id=(seq.sequence_id, i))
            ins.append(assemble_generator_input(ctx))
            tgts.append(target.transpose(2, 0, 1))
        examples.append(VideoExample(np.stack(ins), np.stack(tgts)))
    return examples


# ---------------------------------------------------------------------------
# Checkpoints

@dataclass
class Checkpoint:
    step: int
    net_config: NetConfig
    train_config: TrainConfig
    model_state: dict
    optimizer_state: dict
    rng_state: dict
    best_metric: float = None
    evals_since_best: int = 0

    def save(self, path) -> Path:
        payload = {
            "step": self.step,
            "net_config": asdict(self.net_config),
            "train_config": asdict(self.train_config),
            "model_state": self.model_state,
            "optimizer_state": self.optimizer_state,
            "rng_state": self.rng_state,
            "best_metric": self.best_metric,
            "evals_since_best": self.evals_since_best,
        }
        buf = io.BytesIO()
        torch.save(payload, buf)
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(CHECKPOINT_MAGIC + buf.getvalue())
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        data = Path(path).read_bytes()
        if not data.startswith(CHECKPOINT_MAGIC):
            raise CheckpointError(f"{path} lacks the {CHECKPOINT_MAGIC!r} header")
        try:
            payload = torch.load(io.BytesIO(data[len(CHECKPOINT_MAGIC):]),
                                 weights_only=False)
        except Exception as exc:
            raise CheckpointError(f"cannot deserialize {path}: {exc}") from exc
        net_cfg = dict(payload["net_config"])
        net_cfg["coarse_channels"] = tuple(net_cfg["coarse_channels"])
        train_cfg = dict(payload["train_config"])
        train_cfg["adam_betas"] = tuple(train_cfg["adam_betas"])
        return cls(
            step=payload["step"],
            net_config=NetConfig(**net_cfg),
            train_config=TrainConfig(**train_cfg),
            model_state=payload["model_state"],
            optimizer_state=payload["optimizer_state"],
            rng_state=payload["rng_state"],
            best_metric=payload.get("best_metric"),
            evals_since_best=payload.get("evals_since_best", 0),
        )


# ---------------------------------------------------------------------------
# Shared trainer machinery

def _weights_for_masks(anon_masks: np.ndarray, gamma: float):
    """Reconstruction weights for a batch of anonymization masks.

    Returns (fine, coarse): spatially discounted weights at full resolution
    for the fine stage, and the plain half-resolution mask (uniform weight
    over the hole) for the coarse stage, which is not discounted.
    """
    fine, coarse = [], []
    for m in anon_masks:
        fine.append(discount_weights(m, gamma))
        coarse.append(m[::2, ::2].astype(np.float32))
    return (torch.from_numpy(np.stack(fine)[:, None]),
            torch.from_numpy(np.stack(coarse)[:, None]))


class _TrainerBase:
    def __init__(self, bundle: ModelBundle, config: TrainConfig, train_data,
                 val_data=None, out_dir=None, weights: LossWeights = None,
                 eval_extractor=None, on_step=None):
        if not train_data:
            raise ValueError("train_data is empty")
        self.bundle = bundle
        self.config = config
        self.train_data = train_data
        self.val_data = val_data
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        self.weights = weights or LossWeights()
        self.eval_extractor = eval_extractor
        self.on_step = on_step
        self.rng = np.random.default_rng(config.seed)
        self.step = 0
        self.best_metric = None
        self.evals_since_best = 0
        self.history: list[dict] = []
        self.eval_history: list[tuple[int, float]] = []
        self.opt_g = torch.optim.Adam(bundle.generator_parameters(),
                                      lr=config.lr_g, betas=config.adam_betas)
        self.opt_d = torch.optim.Adam(bundle.discriminator_parameters(),
                                      lr=config.lr_d, betas=config.adam_betas)
        self._last_finite: Checkpoint = None

    # -- checkpoint plumbing

    def snapshot(self) -> Checkpoint:
        return Checkpoint(
            step=self.step,
            net_config=self.bundle.config,
            train_config=self.config,
            model_state=copy.deepcopy(self.bundle.state_dicts()),
            optimizer_state={"g": copy.deepcopy(self.opt_g.state_dict()),
                             "d": copy.deepcopy(self.opt_d.state_dict())},
            rng_state={"numpy": self.rng.bit_generator.state,
                       "torch": torch.get_rng_state()},
            best_metric=self.best_metric,
            evals_since_best=self.evals_since_best,
        )

    def save(self, path) -> Path:
        return self.snapshot().save(path)

    def restore(self, ckpt: Checkpoint) -> None:
        self.step = ckpt.step
        self.bundle.load_state_dicts(ckpt.model_state)
        self.opt_g.load_state_dict(ckpt.optimizer_state["g"])
        self.opt_d.load_state_dict(ckpt.optimizer_state["d"])
        self.rng.bit_generator.state = ckpt.rng_state["numpy"]
        torch.set_rng_state(ckpt.rng_state["torch"])
        self.best_metric = ckpt.best_metric
        self.evals_since_best = ckpt.evals_since_best

    @classmethod
    def from_checkpoint(cls, path, train_data, config=None, **kwargs):
        """Rebuild a trainer from a saved checkpoint.

        ``config`` replaces the stored train settings (e.g. to extend
        ``max_steps``); leaving it None resumes the original run exactly.
        """
        ckpt = Checkpoint.load(path)
        torch.manual_seed(0)  # bundle init is overwritten by restore below
        bundle = build_models(ckpt.net_config)
        trainer = cls(bundle, config or ckpt.train_config, train_data, **kwargs)
        trainer.restore(ckpt)
        return trainer

    # -- loop

    def train(self) -> list[dict]:
        """Run until max_steps or stagnation; returns the per-step history."""
        try:
            while self.step < self.config.max_steps:
                losses = self._train_step()
                self.step += 1
                record = {"step": self.step, **losses}
                if not all(np.isfinite(v) for v in losses.values()):
                    raise NonFiniteLoss(
                        f"non-finite loss at step {self.step}: {losses}",
                        checkpoint=self._last_finite)
                if self.config.snapshot_every and \
                        self.step % self.config.snapshot_every == 0:
                    self._last_finite = self.snapshot()
                if self._maybe_eval(record):
                    self.history.append(record)
                    break
                self.history.append(record)
                if self.on_step is not None:
                    self.on_step(self, record)
        except KeyboardInterrupt:
            if self.out_dir is not None:
                self.save(self.out_dir / "last.ckpt")
            raise
        if self.out_dir is not None:
            self.save(self.out_dir / "last.ckpt")
        return self.history

    def _maybe_eval(self, record: dict) -> bool:
        """Evaluate on the held-out set; True means stop (stagnation)."""
        if self.val_data is None or self.config.eval_interval <= 0:
            return False
        if self.step % self.config.eval_interval != 0:
            return False
        metric = self.evaluate()
        record["eval"] = metric
        self.eval_history.append((self.step, metric))
        if self.best_metric is None or metric < self.best_metric:
            self.best_metric = metric
            self.evals_since_best = 0
            if self.out_dir is not None:
                self.save(self.out_dir / "best.ckpt")
        else:
            self.evals_since_best += 1
        return self.evals_since_best >= self.config.stagnation_evals

    def _train_step(self) -> dict:
        raise NotImplementedError

    def evaluate(self) -> float:
        raise NotImplementedError


class ImageTrainer(_TrainerBase):
    """Alternating per-step image GAN optimization.

    Each step: sample a batch, update the multi-scale discriminator on its
    least-squares objective plus the R1 penalty, then update the generator
    on adversarial + feature-matching + spatially discounted reconstruction
    terms (coarse at half resolution, fine composite at full).
    """

    def _sample_batch(self):
        n = len(self.train_data)
        idx = self.rng.choice(n, size=self.config.batch_size,
                              replace=n < self.config.batch_size)
        examples = [self.train_data[i] for i in idx]
        x = torch.from_numpy(np.stack([e.inputs for e in examples]))
        target = torch.from_numpy(np.stack([e.target for e in examples]))
        anon = np.stack([e.inputs[-1] for e in examples]).astype(np.uint8)
        w_fine, w_coarse = _weights_for_masks(anon, self.weights.gamma_discount)
        return x, target, w_fine, w_coarse

    def _train_step(self) -> dict:
        w = self.weights
        x, target, w_fine, w_coarse = self._sample_batch()
        _, border, anon = split_condition(x)
        gen = two_stage_step(self.bundle, x)
        target_half = F.avg_pool2d(target, 2)

        # discriminator update
        real_leaf = target.clone().requires_grad_(True)
        d_real = self.bundle.image_disc(real_leaf, border, anon)
        d_fake = self.bundle.image_disc(gen.composite_fine.detach(), border, anon)
        loss_d_adv = lsgan_d(d_real, d_fake)
        loss_r1 = r1_penalty([f[-1] for f in d_real], [real_leaf], w.w_r1)
        self.opt_d.zero_grad()
        (loss_d_adv + loss_r1).backward()
        self.opt_d.step()

        # generator update against the fresh discriminator
        with torch.no_grad():
            d_real_ref = self.bundle.image_disc(target, border, anon)
        d_fake_g = self.bundle.image_disc(gen.composite_fine, border, anon)
        loss_adv = w.w_adv * lsgan_g(d_fake_g)
        loss_fm = w.w_fm * feature_matching(detach_features(d_real_ref), d_fake_g)
        loss_rec_c = w.w_rec_coarse * discounted_l1(gen.coarse, target_half, w_coarse)
        loss_rec_f = w.w_rec_fine * discounted_l1(gen.composite_fine, target, w_fine)
        loss_g = loss_adv + loss_fm + loss_rec_c + loss_rec_f
        self.opt_g.zero_grad()
        loss_g.backward()
        self.opt_g.step()

        return {"d_adv": loss_d_adv.item(), "d_r1": loss_r1.item(),
                "g_adv": loss_adv.item(), "g_fm": loss_fm.item(),
                "g_rec_coarse": loss_rec_c.item(), "g_rec_fine": loss_rec_f.item(),
                "g_total": loss_g.item()}

    def evaluate(self) -> float:
        """FID between held-out targets and their anonymized composites."""
        extractor = self.eval_extractor or RandomProjectionExtractor(
            seed=self.config.seed)
        data = self.val_data[:self.config.eval_batch_cap]
        self.bundle.eval()
        outs, reals = [], []
        with torch.no_grad():
            for i in range(0, len(data), self.config.batch_size):
                chunk = data[i:i + self.config.batch_size]
                x = torch.from_numpy(np.stack([e.inputs for e in chunk]))
                gen = two_stage_step(self.bundle, x)
                outs.append(gen.composite_fine.numpy())
                reals.append(np.stack([e.target for e in chunk]))
        self.bundle.train()
        return fid(extractor(np.concatenate(reals)), extractor(np.concatenate(outs)))


class VideoTrainer(_TrainerBase):
    """Joint-step video GAN optimization over unrolled windows.

    The generator is unrolled for ``unroll_len`` frames per sample (past
    slots recycled, detached).  One batch feeds a single joint update:
    image-discriminator terms averaged over frames, video-discriminator
    terms for every temporal stride active at the window's last frame, and
    both optimizers step from the same parameter snapshot (the
    discriminator's parameters are frozen while the generator's gradients
    are computed, so neither update leaks into the other).
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self.bundle.video_disc is None:
            raise ValueError("video training needs a video_mode NetConfig")
        for ex in self.train_data:
            if len(ex) < 3:
                raise SequenceTooShort(
                    f"video training needs >= 3 frames, got {len(ex)}")

    def _sample_windows(self):
        n = len(self.train_data)
        idx = self.rng.choice(n, size=self.config.batch_size,
                              replace=n < self.config.batch_size)
        chosen = [self.train_data[i] for i in idx]
        win = min(self.config.unroll_len, min(len(e) for e in chosen))
        if win < 3:
            raise SequenceTooShort(f"window of {win} frames cannot form a triple")
        inputs, targets = [], []
        for ex in chosen:
            start = int(self.rng.integers(0, len(ex) - win + 1))
            inputs.append(ex.inputs[start:start + win])
            targets.append(ex.targets[start:start + win])
        return (torch.from_numpy(np.stack(inputs)),
                torch.from_numpy(np.stack(targets)))

    def _triple(self, frames: list, masks: torch.Tensor, triple, t0: int):
        """Stack a (t0, t0-s, t0-2s) triple into 9 frame + 3 mask channels."""
        base = t0 - (len(frames) - 1)  # window position of absolute time 0
        rel = [ti - base for ti in triple]
        stack = torch.cat([frames[r] for r in rel], dim=1)
        mstack = torch.cat([masks[:, r] for r in rel], dim=1)
        return stack, mstack

    def _train_step(self) -> dict:
        w = self.weights
        inputs, targets = self._sample_windows()
        b, t, _, h, wd = inputs.shape
        anon_np = inputs[:, :, -1].numpy().astype(np.uint8)
        outs = unroll_generator(self.bundle, inputs)
        borders = inputs[:, :, -2:-1]
        anons = inputs[:, :, -1:]

        t0 = t - 1
        sample_sets = temporal_sample_sets(t0, n_prior=t - 1,
                                           time_scales=self.bundle.config.time_scales)
        fake_frames = [o.composite_fine for o in outs]
        real_frames = [targets[:, i] for i in range(t)]

        # --- discriminator objective (fakes detached)
        d_terms = []
        frame_reals_d = []
        for i in range(t):
            real_leaf = real_frames[i].clone().requires_grad_(i == t0)
            frame_reals_d.append(real_leaf)
            d_real = self.bundle.image_disc(real_leaf, borders[:, i], anons[:, i])
            d_fake = self.bundle.image_disc(fake_frames[i].detach(),
                                            borders[:, i], anons[:, i])
            d_terms.append(lsgan_d(d_real, d_fake))
            if i == t0:
                loss_r1 = r1_penalty([f[-1] for f in d_real], [real_leaf], w.w_r1)
        loss_d_img = torch.stack(d_terms).mean()

        v_terms = []
        loss_r1_video = torch.zeros(())
        for stride, triple in sample_sets:
            real_stack, mask_stack = self._triple(real_frames, anons, triple, t0)
            fake_stack, _ = self._triple([f.detach() for f in fake_frames],
                                         anons, triple, t0)
            real_leaf = real_stack.clone().requires_grad_(True)
            v_real = self.bundle.video_disc(stride, real_leaf, mask_stack)
            v_fake = self.bundle.video_disc(stride, fake_stack, mask_stack)
            v_terms.append(lsgan_d(v_real, v_fake))
            loss_r1_video = loss_r1_video + r1_penalty(
                [f[-1] for f in v_real], [real_leaf], w.w_r1)
        loss_d_vid = torch.stack(v_terms).mean() if v_terms else torch.zeros(())

        loss_d = loss_d_img + loss_d_vid + loss_r1 + loss_r1_video
        self.opt_d.zero_grad()
        self.opt_g.zero_grad()
        loss_d.backward()

        # --- generator objective at the same discriminator parameters
        for p in self.bundle.discriminator_parameters():
            p.requires_grad_(False)
        adv_terms, fm_terms, rec_terms = [], [], []
        for i in range(t):
            with torch.no_grad():
                d_real_ref = self.bundle.image_disc(real_frames[i],
                                                    borders[:, i], anons[:, i])
            d_fake_g = self.bundle.image_disc(fake_frames[i],
                                              borders[:, i], anons[:, i])
            adv_terms.append(lsgan_g(d_fake_g))
            fm_terms.append(feature_matching(detach_features(d_real_ref), d_fake_g))
            w_fine, w_coarse = _weights_for_masks(anon_np[:, i], w.gamma_discount)
            target_half = F.avg_pool2d(real_frames[i], 2)
            rec_terms.append(
                w.w_rec_coarse * discounted_l1(outs[i].coarse, target_half, w_coarse)
                + w.w_rec_fine * discounted_l1(fake_frames[i], real_frames[i], w_fine))
        loss_g = (w.w_adv * torch.stack(adv_terms).mean()
                  + w.w_fm * torch.stack(fm_terms).mean()
                  + torch.stack(rec_terms).mean())

        v_adv, v_fm = [], []
        for stride, triple in sample_sets:
            real_stack, mask_stack = self._triple(real_frames, anons, triple, t0)
            fake_stack, _ = self._triple(fake_frames, anons, triple, t0)
            with torch.no_grad():
                v_real_ref = self.bundle.video_disc(stride, real_stack, mask_stack)
            v_fake_g = self.bundle.video_disc(stride, fake_stack, mask_stack)
            v_adv.append(lsgan_g(v_fake_g))
            v_fm.append(feature_matching(detach_features(v_real_ref), v_fake_g))
        if v_adv:
            loss_g = (loss_g + w.w_video_adv * torch.stack(v_adv).mean()
                      + w.w_video_fm * torch.stack(v_fm).mean())
        loss_g.backward()
        for p in self.bundle.discriminator_parameters():
            p.requires_grad_(True)

        self.opt_d.step()
        self.opt_g.step()

        return {"d_total": loss_d.item(), "d_img": loss_d_img.item(),
                "d_vid": loss_d_vid.item(), "d_r1": (loss_r1 + loss_r1_video).item(),
                "g_rec": torch.stack(rec_terms).mean().item(),
                "g_total": loss_g.item()}

    def evaluate(self) -> float:
        """FVD between held-out clips and their anonymized versions."""
        extractor = self.eval_extractor or RandomProjectionVideoExtractor(
            seed=self.config.seed)
        data = self.val_data[:self.config.eval_batch_cap]
        self.bundle.eval()
        real_clips, gen_clips = [], []
        with torch.no_grad():
            for ex in data:
                win = min(self.config.unroll_len, len(ex))
                inputs = torch.from_numpy(ex.inputs[:win])[None]
                outs = unroll_generator(self.bundle, inputs)
                gen_clips.append(np.stack([o.composite_fine[0].numpy() for o in outs]))
                real_clips.append(ex.targets[:win])
        self.bundle.train()
        return fvd(extractor(real_clips), extractor(gen_clips))
