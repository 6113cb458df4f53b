"""Training-data curation: tracking, deduplication, crop emission.

Raw footage becomes training sequences in three passes: greedy IoU tracking
links per-frame detections into face tracks, tracks shorter than 30 frames
are dropped, and any track whose source frames contain a scene cut (64-bit
difference hash jumping by more than 10 bits between consecutive frames) is
rejected outright.  Surviving tracks are written as 256px context crops
with the face box remapped into crop coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frameio import FrameSequence, save_sequence
from .preprocess import (BoundingBox, context_square, crop_with_padding,
                         resize_bilinear, square_box)

MIN_TRACK_FRAMES = 30
MAX_HAMMING = 10
CROP_RESOLUTION = 256
IOU_THRESHOLD = 0.5


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two half-open boxes; exact rationals in
    float, no epsilon (disjoint boxes give exactly 0.0)."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area() + b.area() - inter)


@dataclass
class Track:
    """One face followed through consecutive frames (no gaps)."""

    track_id: int
    start_frame: int
    boxes: list = field(default_factory=list)
    finished: bool = False

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def state(self) -> str:
        return "finished" if self.finished else "active"

    @property
    def last_box(self) -> BoundingBox:
        return self.boxes[-1]


def track_step(tracks: list, detections: list, sigma_iou: float = IOU_THRESHOLD,
               frame: int = 0) -> list:
    """Advance all tracks by one frame of detections, greedily by best IoU.

    Every (active track, detection) pair with IoU >= sigma_iou is ranked by
    descending IoU (ties broken by track age, then detection order) and
    matched greedily; each detection extends at most one track.  Unmatched
    active tracks finish; unmatched detections open new tracks starting at
    ``frame``.  Returns the full track list (finished ones included).
    """
    active = [t for t in tracks if not t.finished]
    pairs = []
    for ti, track in enumerate(active):
        for di, det in enumerate(detections):
            v = iou(track.last_box, det)
            if v >= sigma_iou:
                pairs.append((-v, ti, di))
    pairs.sort()
    used_tracks, used_dets = set(), set()
    for _, ti, di in pairs:
        if ti in used_tracks or di in used_dets:
            continue
        active[ti].boxes.append(detections[di])
        used_tracks.add(ti)
        used_dets.add(di)
    for ti, track in enumerate(active):
        if ti not in used_tracks:
            track.finished = True
    next_id = max((t.track_id for t in tracks), default=-1) + 1
    out = list(tracks)
    for di, det in enumerate(detections):
        if di not in used_dets:
            out.append(Track(next_id, frame, [det]))
            next_id += 1
    return out


def track_sequence(per_frame_boxes: list, sigma_iou: float = IOU_THRESHOLD) -> list:
    """Run track_step over a whole clip; all tracks come back finished."""
    tracks: list[Track] = []
    for frame, dets in enumerate(per_frame_boxes):
        boxes = [d if isinstance(d, BoundingBox) else BoundingBox(*map(int, d))
                 for d in dets]
        tracks = track_step(tracks, boxes, sigma_iou, frame)
    for t in tracks:
        t.finished = True
    return tracks


# ---------------------------------------------------------------------------
# Difference hash

def _luma(frame: np.ndarray) -> np.ndarray:
    """Rec.601 luma quantized to integer gray levels from a [-1, 1] RGB frame.

    Quantizing before the area reduction keeps flat inputs flat: averages of
    an integer-valued constant land exactly on that integer, so the later
    rounding step cannot flip between adjacent cells.
    """
    px = (np.asarray(frame, dtype=np.float64) + 1.0) * 127.5
    return np.rint(px[..., 0] * 0.299 + px[..., 1] * 0.587 + px[..., 2] * 0.114)


def _area_reduce(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact fractional-area average pooling to out_h x out_w (float64)."""
    h, w = img.shape

    def weights(n_in, n_out):
        # overlap length of input cell j with output cell i, both on [0, n_in)
        edges = np.arange(n_out + 1, dtype=np.float64) * (n_in / n_out)
        mat = np.zeros((n_out, n_in))
        for i in range(n_out):
            lo, hi = edges[i], edges[i + 1]
            j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
            for j in range(j0, min(j1, n_in)):
                mat[i, j] = min(hi, j + 1) - max(lo, j)
        return mat / (n_in / n_out)

    return weights(h, out_h) @ img @ weights(w, out_w).T


def dhash(frame: np.ndarray) -> int:
    """64-bit difference hash of a [-1, 1] RGB frame.

    Integer-level luma is area-averaged to 9 wide x 8 tall and re-quantized
    with round-half-even; bit (r, c) is 1 iff pixel (r, c) < pixel (r, c+1),
    packed row-major, most significant bit first.
    """
    small = np.rint(_area_reduce(_luma(frame), 8, 9))
    bits = small[:, :-1] < small[:, 1:]
    value = 0
    for bit in bits.ravel():
        value = (value << 1) | int(bit)
    return value


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def has_scene_cut(frames: list, start: int, length: int,
                  max_hamming: int = MAX_HAMMING) -> bool:
    """True when any consecutive pair in frames[start:start+length] jumps."""
    hashes = [dhash(frames[i]) for i in range(start, start + length)]
    return any(hamming(a, b) > max_hamming for a, b in zip(hashes, hashes[1:]))


# ---------------------------------------------------------------------------
# Crop emission

def _map_box_into_crop(box: BoundingBox, region: BoundingBox, scale: float) -> list:
    return [int(round((box.x0 - region.x0) * scale)),
            int(round((box.y0 - region.y0) * scale)),
            int(round((box.x1 - region.x0) * scale)),
            int(round((box.y1 - region.y0) * scale))]


def emit_track_crops(frames: list, track: Track,
                     resolution: int = CROP_RESOLUTION) -> FrameSequence:
    """Cut a track's context squares into a fixed-size crop sequence.

    Each frame's crop covers the 3x context square around the squared face
    box (black padding past the image edge), rescaled to ``resolution``;
    the squared box is remapped into crop coordinates and stored per frame.
    """
    seq = FrameSequence(sequence_id=f"track{track.track_id:04d}")
    for offset, box in enumerate(track.boxes):
        frame = frames[track.start_frame + offset]
        sq = square_box(box)
        region = context_square(sq)
        crop, _ = crop_with_padding(frame, region)
        seq.frames.append(resize_bilinear(crop, resolution, resolution))
        scale = resolution / region.side
        seq.boxes.append([_map_box_into_crop(sq, region, scale)])
    return seq


def filter_sequences(video_frames: list, detections: list,
                     sigma_iou: float = IOU_THRESHOLD,
                     min_len: int = MIN_TRACK_FRAMES,
                     max_hamming: int = MAX_HAMMING,
                     resolution: int = CROP_RESOLUTION) -> list:
    """Curate one clip into training sequences.

    Tracks the per-frame detections, keeps tracks spanning at least
    ``min_len`` frames, rejects any track whose source-frame span contains
    a consecutive pair with Hamming distance above ``max_hamming`` (scene
    cut), and emits the survivors as crop sequences.  An empty result is
    fine.
    """
    tracks = track_sequence(detections, sigma_iou)
    emitted = []
    for track in tracks:
        if len(track) < min_len:
            continue
        if has_scene_cut(video_frames, track.start_frame, len(track), max_hamming):
            continue
        emitted.append(emit_track_crops(video_frames, track, resolution))
    for i, seq in enumerate(emitted):
        seq.sequence_id = f"seq{i:05d}"
    return emitted


def write_dataset(sequences: list, out_dir, split: str = "train") -> Path:
    """Write crop sequences under ``<out_dir>/<split>/`` plus a manifest."""
    split_dir = Path(out_dir) / split
    split_dir.mkdir(parents=True, exist_ok=True)
    total_faces = 0
    for seq in sequences:
        save_sequence(seq, split_dir)
        total_faces += sum(len(b) for b in seq.boxes)
    manifest = {
        "split": split,
        "sequences": len(sequences),
        "initial_frames": len(sequences),
        "total_frames": sum(len(s) for s in sequences),
        "total_faces": total_faces,
        "crop_resolution": CROP_RESOLUTION if not sequences else sequences[0].frames[0].shape[0],
    }
    with open(split_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return split_dir
