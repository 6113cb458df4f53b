"""Dataset curation: IoU tracking, scene-cut filtering, crop emission.

Run with: python3 demos/05_curation.py
"""

import tempfile
from pathlib import Path

import numpy as np

from jagan.curation import dhash, filter_sequences, hamming, iou, write_dataset
from jagan.preprocess import BoundingBox


def scene(h=72, w=96, flip=False, seed=3):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    img = np.stack([0.8 * xx / w - 0.3, 0.6 * yy / h - 0.2,
                    rng.uniform(-0.2, 0.2) * np.ones_like(yy)], axis=-1)
    img = np.clip(img, -1, 1).astype(np.float32)
    return -img if flip else img


print(f"iou of half-overlapping boxes: "
      f"{iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10)):.4f}")

a, b = scene(), scene(flip=True)
print(f"dhash distance same scene: {hamming(dhash(a), dhash(a))}")
print(f"dhash distance inverted:   {hamming(dhash(a), dhash(b))} of 64\n")

# A 35-frame clip where one face pans slowly across the image.  The tracker
# associates detections frame to frame; 30+ frame tracks survive.
frames = [scene()] * 35
dets = [[(20 + i, 18, 44 + i, 42)] for i in range(35)]
kept = filter_sequences(frames, dets, resolution=64)
print(f"35-frame pan: kept {len(kept)} sequence(s) of "
      f"{[len(s.frames) for s in kept]} frames")

# The same clip with a hard cut in the middle is rejected outright even
# though the boxes still track, because consecutive dhashes jump.
cut_frames = [scene() if i < 18 else scene(flip=True) for i in range(35)]
print(f"with a cut at frame 18: kept {len(filter_sequences(cut_frames, dets, resolution=64))}")

# Too-short tracks never make it out either.
print(f"only 29 frames: kept "
      f"{len(filter_sequences(frames[:29], dets[:29], resolution=64))}")

out = Path(tempfile.mkdtemp(prefix="jagan_demo_")) / "dataset"
manifest_dir = write_dataset(kept, out, split="train")
print(f"\nwrote dataset split to {manifest_dir}")
print((manifest_dir / "manifest.json").read_text())
