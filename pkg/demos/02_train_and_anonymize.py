"""Train a tiny image model for a few steps, then anonymize a frame with it.

Everything runs on CPU in under a minute; the output is not pretty at this
scale, the point is the full loop: data -> trainer -> checkpoint -> model.

Run with: python3 demos/02_train_and_anonymize.py
"""

import tempfile
from pathlib import Path

import numpy as np
import torch

from jagan.frameio import FrameSequence, write_frame
from jagan.inference import AnonymizerModel
from jagan.nets import NetConfig, build_models
from jagan.preprocess import BoundingBox
from jagan.trainer import (ImageTrainer, TrainConfig,
                           image_examples_from_sequences)


def ramp_frame(h, w, seed):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    chans = [rng.uniform(-0.7, 0.7) * yy / h + rng.uniform(-0.7, 0.7) * xx / w
             + rng.uniform(-0.2, 0.2) for _ in range(3)]
    return np.clip(np.stack(chans, axis=-1), -1, 1).astype(np.float32)


# Two short synthetic "clips" with one detected face each.  The builder
# extracts a context crop per (frame, box) pair and pairs it with the
# unmasked target for reconstruction.
sequences = [
    FrameSequence(f"clip{s}",
                  [ramp_frame(48, 48, seed=10 * s + i) for i in range(6)],
                  [[[12 + i, 14, 30 + i, 32]] for i in range(6)])
    for s in range(2)
]
examples = image_examples_from_sequences(sequences, resolution=16)
print(f"{len(examples)} training examples from {len(sequences)} clips")

cfg = NetConfig(resolution=16, coarse_channels=(8, 16, 32, 48),
                fine_base_width=8, n_residual_blocks=1, n_image_disc_scales=2)
torch.manual_seed(0)
trainer = ImageTrainer(build_models(cfg),
                       TrainConfig(batch_size=4, max_steps=30, eval_interval=0),
                       examples)
history = trainer.train()
print(f"step  1: {history[0]['g_rec_fine']:.3f} fine reconstruction")
print(f"step 30: {history[-1]['g_rec_fine']:.3f} fine reconstruction")

out_dir = Path(tempfile.mkdtemp(prefix="jagan_demo_"))
ckpt = trainer.save(out_dir / "demo.ckpt")

model = AnonymizerModel.from_checkpoint(ckpt)
frame = ramp_frame(64, 64, seed=99)
result = model.anonymize_image(frame, [BoundingBox(20, 22, 40, 42)])
changed = np.any(result != frame, axis=-1)
print(f"\nanonymized {int(changed.sum())} pixels inside the face box")
write_frame(out_dir / "before.png", frame)
write_frame(out_dir / "after.png", result)
print(f"wrote {out_dir}/before.png and after.png")
