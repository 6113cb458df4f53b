"""Anonymization at inference time.

Image mode runs each detected face through the two-stage generator once.
Video mode conditions every frame on the previous two generated faces; the
first frame has no history, so the generator is warmed up by repeatedly
anonymizing the first frame's context and recycling the outputs into the
past slots (burn-in) before any frame is emitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import CheckpointModeMismatch, NoFaceDetected
from .nets import build_models
from .preprocess import (FaceContext, assemble_generator_input, extract_context,
                         paste_back)
from .trainer import Checkpoint, GeneratorOutput, two_stage_step


@dataclass(frozen=True)
class BurnInConfig:
    """Warm-up schedule for the video generator's empty past slots."""

    n_frames: int = 6
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and self.n_frames < 2:
            raise ValueError("burn-in needs at least 2 passes to fill both past slots")


class AnonymizerModel:
    """A trained generator pair ready for inference.

    ``generator_calls`` counts forward passes (burn-in included) and
    ``input_hook``, when set, receives each conditioning volume just before
    the generator sees it; both exist so tests can audit what the model was
    shown.
    """

    def __init__(self, bundle, input_hook=None):
        self.bundle = bundle
        self.bundle.eval()
        self.input_hook = input_hook
        self.generator_calls = 0

    @property
    def video_mode(self) -> bool:
        return self.bundle.config.video_mode

    @property
    def resolution(self) -> int:
        return self.bundle.config.resolution

    @classmethod
    def from_checkpoint(cls, path, expect_video: bool = None,
                        input_hook=None) -> "AnonymizerModel":
        ckpt = Checkpoint.load(path)
        if expect_video is not None and ckpt.net_config.video_mode != expect_video:
            have = "video" if ckpt.net_config.video_mode else "image"
            want = "video" if expect_video else "image"
            raise CheckpointModeMismatch(f"checkpoint is {have}-mode, need {want}")
        torch.manual_seed(0)  # init values are overwritten by the load below
        bundle = build_models(ckpt.net_config)
        bundle.load_state_dicts(ckpt.model_state)
        return cls(bundle, input_hook=input_hook)

    def _generate(self, x: torch.Tensor) -> GeneratorOutput:
        if self.input_hook is not None:
            self.input_hook(x.detach().clone())
        self.generator_calls += 1
        with torch.no_grad():
            return two_stage_step(self.bundle, x)

    # -- image mode

    def anonymize_crop(self, ctx: FaceContext) -> np.ndarray:
        """Generated composite (H x W x 3) for one conditioning crop."""
        if self.video_mode:
            raise CheckpointModeMismatch("video-mode model cannot run per-image")
        x = torch.from_numpy(assemble_generator_input(ctx))[None]
        out = self._generate(x)
        return out.composite_fine[0].numpy().transpose(1, 2, 0)

    def anonymize_image(self, frame: np.ndarray, boxes: list) -> np.ndarray:
        """Replace every detected face in a frame.

        All contexts are extracted from the original frame (overlapping
        faces see unmodified surroundings), then pasted back one by one.
        A frame with no boxes is returned unchanged.
        """
        if not boxes:
            return frame.copy()
        contexts = [extract_context(frame, box, self.resolution) for box in boxes]
        out = frame
        for ctx in contexts:
            out = paste_back(out, ctx, self.anonymize_crop(ctx))
        return out

    # -- video mode

    def burn_in(self, first_input: torch.Tensor,
                schedule: BurnInConfig) -> tuple[torch.Tensor, torch.Tensor]:
        """Warm the past slots on the first frame's context.

        Starts from zero tensors and repeats ``n_frames`` generator passes,
        each recycling its composite into the newest past slot.  Returns
        (past2, past1), the two most recent composites.
        """
        b, _, h, w = first_input.shape
        past2 = torch.zeros(b, 3, h, w, dtype=first_input.dtype)
        past1 = torch.zeros_like(past2)
        if not schedule.enabled:
            return past2, past1
        for _ in range(schedule.n_frames):
            out = self._generate(torch.cat([past2, past1, first_input], dim=1))
            past2 = past1
            past1 = out.composite_fine
        return past2, past1

    def anonymize_crop_sequence(self, inputs: np.ndarray,
                                schedule: BurnInConfig = BurnInConfig()) -> np.ndarray:
        """Anonymize a (T, 5, H, W) conditioning sequence, returning (T, 3, H, W).

        Burn-in runs on frame 0's context, then frames are generated in
        order, each conditioned on the previous two composites.
        """
        if not self.video_mode:
            raise CheckpointModeMismatch("image-mode model has no temporal slots")
        seq = torch.from_numpy(np.asarray(inputs, dtype=np.float32))
        past2, past1 = self.burn_in(seq[0:1], schedule)
        outs = []
        for t in range(seq.shape[0]):
            out = self._generate(torch.cat([past2, past1, seq[t:t + 1]], dim=1))
            outs.append(out.composite_fine[0].numpy())
            past2 = past1
            past1 = out.composite_fine
        return np.stack(outs)

    def anonymize_video(self, frames: list, per_frame_boxes: list,
                        schedule: BurnInConfig = BurnInConfig()) -> list:
        """Anonymize one tracked face through a full-frame sequence.

        Each frame must carry exactly one box (curated tracks have one face
        per sequence).  Contexts are extracted per frame, generated
        serially with temporal conditioning, and pasted back.
        """
        if len(frames) != len(per_frame_boxes):
            raise ValueError("frames and box lists differ in length")
        contexts = []
        for i, (frame, boxes) in enumerate(zip(frames, per_frame_boxes)):
            if not boxes:
                raise NoFaceDetected(f"frame {i} has no face box")
            contexts.append(extract_context(frame, boxes[0], self.resolution,
                                            frame_id=i))
        inputs = np.stack([assemble_generator_input(c) for c in contexts])
        composites = self.anonymize_crop_sequence(inputs, schedule)
        return [paste_back(frame, ctx, comp.transpose(1, 2, 0))
                for frame, ctx, comp in zip(frames, contexts, composites)]
