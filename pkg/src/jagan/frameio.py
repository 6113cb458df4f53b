"""Frame and sequence I/O.

8-bit PNG pixels map to model space by ``v = pixel / 127.5 - 1`` and back
by ``pixel = round((v + 1) * 127.5)`` clipped to [0, 255], so a save/load
round trip is lossless on any image that came from 8-bit data.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetEmpty

FRAME_PATTERN = "frame_%05d.png"
_FRAME_RE = re.compile(r"frame_(\d+)\.png$")


def to_model_range(pixels: np.ndarray) -> np.ndarray:
    """uint8 [0, 255] -> float32 [-1, 1]."""
    return (np.asarray(pixels, dtype=np.float32) / np.float32(127.5)) - np.float32(1.0)


def to_pixel_range(values: np.ndarray) -> np.ndarray:
    """float32 [-1, 1] -> uint8 [0, 255], rounding half away from zero."""
    scaled = (np.asarray(values, dtype=np.float32) + 1.0) * 127.5
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def read_frame(path) -> np.ndarray:
    with Image.open(path) as img:
        return to_model_range(np.asarray(img.convert("RGB")))


def write_frame(path, frame: np.ndarray) -> None:
    Image.fromarray(to_pixel_range(frame), mode="RGB").save(path)


@dataclass
class FrameSequence:
    """An ordered run of frames with per-frame face boxes.

    ``boxes[i]`` is the list of [x0, y0, x1, y1] detections for frame i
    (possibly empty).  Frames are H x W x 3 float32 in [-1, 1].
    """

    sequence_id: str
    frames: list = field(default_factory=list)
    boxes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)


def load_sequence(seq_dir) -> FrameSequence:
    """Read one ``<sequence_id>/`` directory: numbered PNGs plus boxes.json."""
    seq_dir = Path(seq_dir)
    numbered = []
    for p in seq_dir.iterdir():
        m = _FRAME_RE.search(p.name)
        if m:
            numbered.append((int(m.group(1)), p))
    if not numbered:
        raise DatasetEmpty(f"no frame_*.png files in {seq_dir}")
    numbered.sort()
    frames = [read_frame(p) for _, p in numbered]

    boxes = [[] for _ in frames]
    sidecar = seq_dir / "boxes.json"
    if sidecar.exists():
        with open(sidecar) as fh:
            records = json.load(fh)
        if isinstance(records, dict):
            records = [records]
        index = {n: i for i, (n, _) in enumerate(numbered)}
        for rec in records:
            i = index.get(int(rec["frame"]))
            if i is not None:
                boxes[i] = [list(map(int, b)) for b in rec["boxes"]]
    return FrameSequence(seq_dir.name, frames, boxes)


def save_sequence(seq: FrameSequence, out_dir) -> Path:
    """Write frames as frame_%05d.png plus a boxes.json sidecar."""
    out_dir = Path(out_dir) / seq.sequence_id
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        write_frame(out_dir / (FRAME_PATTERN % i), frame)
    records = [{"frame": i, "boxes": seq.boxes[i]} for i in range(len(seq))]
    with open(out_dir / "boxes.json", "w") as fh:
        json.dump(records, fh, indent=1)
    return out_dir


def load_split(split_dir) -> list[FrameSequence]:
    """Load every sequence directory under ``<dataset>/<split>/``."""
    split_dir = Path(split_dir)
    if not split_dir.is_dir():
        raise DatasetEmpty(f"{split_dir} is not a directory")
    seqs = []
    for child in sorted(split_dir.iterdir()):
        if child.is_dir():
            seqs.append(load_sequence(child))
    if not seqs:
        raise DatasetEmpty(f"no sequence directories under {split_dir}")
    return seqs
