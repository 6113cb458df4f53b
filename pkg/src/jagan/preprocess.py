"""Face-region geometry: squared boxes, context crops, masks, paste-back.

All images are H x W x 3 float32 arrays in [-1, 1] (see `jagan.frameio` for
the 8-bit mapping).  Boxes are half-open pixel rectangles.  Every function
here is pure, so the pipeline can run in any number of workers.

Resampling conventions (shared with the brute-force test oracles):

* bilinear, half-pixel centers: ``src = (dst + 0.5) * src_size / out_size - 0.5``
  clamped to the valid range, with float32 arithmetic for the interpolation
  itself so vectorized and per-pixel evaluation agree bit for bit;
* nearest neighbour for masks: ``src = floor((dst + 0.5) * src_size / out_size)``
  clamped, which keeps masks strictly binary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DetectionOutsideFrame, ShapeMismatch

PAD_VALUE = np.float32(-1.0)  # black in the [-1, 1] convention
CONTEXT_FACTOR = 3  # context square side = 3 x squared face box side


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle, half-open: [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box {self.as_tuple()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def side(self) -> int:
        if self.width != self.height:
            raise ValueError("box is not square")
        return self.width

    def area(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def intersects_frame(self, frame_h: int, frame_w: int) -> bool:
        return self.x0 < frame_w and self.x1 > 0 and self.y0 < frame_h and self.y1 > 0


@dataclass(frozen=True)
class Provenance:
    """Where a crop came from: source frame id and geometry in source coords."""

    frame_id: object
    box: BoundingBox
    square: BoundingBox
    context: BoundingBox
    frame_size: tuple[int, int]  # (h, w)


@dataclass
class FaceContext:
    """Generator conditioning unit: masked square crop plus its two masks.

    ``crop`` is S x S x 3 float32 in [-1, 1] with the anonymization region
    blacked out; ``border_mask`` marks pixels synthesized by out-of-image
    padding; ``anon_mask`` marks the squared face box.  Both masks are
    uint8 {0, 1} at the same S x S resolution.
    """

    crop: np.ndarray
    border_mask: np.ndarray
    anon_mask: np.ndarray
    provenance: Provenance = field(repr=False, default=None)

    @property
    def resolution(self) -> int:
        return self.crop.shape[0]


def square_box(box: BoundingBox) -> BoundingBox:
    """Shrink the longer edge symmetrically so the box becomes square.

    The side is min(width, height); the reduction is centered on the longer
    axis, with half-pixel ties floored (broken toward the lower coordinate).
    Idempotent on squares.
    """
    side = min(box.width, box.height)
    if box.width > side:
        x0 = (box.x0 + box.x1 - side) // 2
        return BoundingBox(x0, box.y0, x0 + side, box.y1)
    if box.height > side:
        y0 = (box.y0 + box.y1 - side) // 2
        return BoundingBox(box.x0, y0, box.x1, y0 + side)
    return box


def context_square(square: BoundingBox) -> BoundingBox:
    """Concentric square with triple the side; may extend past the image."""
    s = square.side
    return BoundingBox(square.x0 - s, square.y0 - s, square.x1 + s, square.y1 + s)


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers; float32 interpolation."""
    img = np.asarray(image, dtype=np.float32)
    h, w = img.shape[:2]
    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    sy = np.clip(sy, 0.0, h - 1.0)
    sx = np.clip(sx, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (sy - y0).astype(np.float32)
    wx = (sx - x0).astype(np.float32)
    if img.ndim == 3:
        wy = wy[:, None, None]
        wx = wx[None, :, None]
        ga = img[np.ix_(y0, x0)]
        gb = img[np.ix_(y0, x1)]
        gc = img[np.ix_(y1, x0)]
        gd = img[np.ix_(y1, x1)]
    else:
        wy = wy[:, None]
        wx = wx[None, :]
        ga = img[np.ix_(y0, x0)]
        gb = img[np.ix_(y0, x1)]
        gc = img[np.ix_(y1, x0)]
        gd = img[np.ix_(y1, x1)]
    one = np.float32(1.0)
    top = ga * (one - wx) + gb * wx
    bot = gc * (one - wx) + gd * wx
    return top * (one - wy) + bot * wy


def resize_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resize with half-pixel centers (for binary masks)."""
    m = np.asarray(mask)
    h, w = m.shape[:2]
    sy = np.floor((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h)).astype(np.int64)
    sx = np.floor((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w)).astype(np.int64)
    sy = np.clip(sy, 0, h - 1)
    sx = np.clip(sx, 0, w - 1)
    return m[np.ix_(sy, sx)]


def crop_with_padding(frame: np.ndarray, region: BoundingBox,
                      fill: float = PAD_VALUE) -> tuple[np.ndarray, np.ndarray]:
    """Cut ``region`` out of ``frame``, filling out-of-image parts.

    Returns (crop, pad_mask) where pad_mask is uint8 {0, 1}, 1 exactly on
    synthesized pixels.
    """
    h, w = frame.shape[:2]
    rh, rw = region.height, region.width
    crop = np.full((rh, rw, 3), np.float32(fill), dtype=np.float32)
    pad = np.ones((rh, rw), dtype=np.uint8)
    ix0, iy0 = max(region.x0, 0), max(region.y0, 0)
    ix1, iy1 = min(region.x1, w), min(region.y1, h)
    if ix0 < ix1 and iy0 < iy1:
        dy, dx = iy0 - region.y0, ix0 - region.x0
        crop[dy:dy + (iy1 - iy0), dx:dx + (ix1 - ix0)] = frame[iy0:iy1, ix0:ix1]
        pad[dy:dy + (iy1 - iy0), dx:dx + (ix1 - ix0)] = 0
    return crop, pad


def _extract(frame: np.ndarray, box: BoundingBox, resolution: int,
             frame_id: object) -> tuple[FaceContext, np.ndarray]:
    h, w = frame.shape[:2]
    if not box.intersects_frame(h, w):
        raise DetectionOutsideFrame(f"box {box.as_tuple()} outside {h}x{w} frame")
    sq = square_box(box)
    ctx = context_square(sq)

    crop, border = crop_with_padding(frame, ctx)
    anon = np.zeros((ctx.height, ctx.width), dtype=np.uint8)
    anon[sq.y0 - ctx.y0:sq.y1 - ctx.y0, sq.x0 - ctx.x0:sq.x1 - ctx.x0] = 1

    target = resize_bilinear(crop, resolution, resolution)
    border = resize_nearest(border, resolution, resolution)
    anon = resize_nearest(anon, resolution, resolution)

    # Blacking out happens at source scale conceptually, but interpolation
    # would smear the edge; re-asserting after the resize keeps the contract
    # "anon pixels are exactly -1" while the oracle replays the same rule.
    masked = target.copy()
    masked[anon == 1] = PAD_VALUE

    prov = Provenance(frame_id=frame_id, box=box, square=sq, context=ctx,
                      frame_size=(h, w))
    return FaceContext(masked, border, anon, prov), target


def extract_context(frame: np.ndarray, box: BoundingBox, resolution: int,
                    frame_id: object = None) -> FaceContext:
    """Build the generator conditioning crop for one detected face.

    Squares the box, triples it to a context square, cuts that region out of
    the frame (black padding + border mask where it leaves the image), blacks
    out the squared face box (anon mask), and rescales everything to
    ``resolution`` (bilinear for the image, nearest for the masks).

    Raises DetectionOutsideFrame when the box does not touch the frame.
    """
    ctx, _ = _extract(frame, box, resolution, frame_id)
    return ctx


def extract_context_with_target(frame: np.ndarray, box: BoundingBox, resolution: int,
                                frame_id: object = None) -> tuple[FaceContext, np.ndarray]:
    """`extract_context` plus the un-blacked crop as reconstruction target."""
    return _extract(frame, box, resolution, frame_id)


def assemble_generator_input(ctx: FaceContext) -> np.ndarray:
    """Channel-concatenate [crop(3), border(1), anon(1)] into a 5 x S x S volume."""
    s = ctx.crop.shape[0]
    if ctx.crop.shape[:2] != (s, s):
        raise ShapeMismatch(f"crop not square: {ctx.crop.shape}")
    if ctx.border_mask.shape != (s, s) or ctx.anon_mask.shape != (s, s):
        raise ShapeMismatch(
            f"mask shapes {ctx.border_mask.shape}/{ctx.anon_mask.shape} "
            f"do not match crop {ctx.crop.shape[:2]}")
    return np.concatenate([
        ctx.crop.transpose(2, 0, 1),
        ctx.border_mask[None].astype(np.float32),
        ctx.anon_mask[None].astype(np.float32),
    ], axis=0)


def paste_back(frame: np.ndarray, ctx: FaceContext, generated: np.ndarray) -> np.ndarray:
    """Write a generated crop back into the source frame.

    ``generated`` (model resolution) is rescaled to the context square's
    source size; only pixels inside the squared face box (clipped to the
    frame) are replaced, everything else stays bit-identical.
    """
    if generated.ndim != 3 or generated.shape[2] != 3:
        raise ShapeMismatch(f"generated must be HxWx3, got {generated.shape}")
    if generated.shape[0] != generated.shape[1]:
        raise ShapeMismatch(f"generated must be square, got {generated.shape}")
    prov = ctx.provenance
    region = prov.context
    sq = prov.square
    h, w = frame.shape[:2]
    full = resize_bilinear(generated, region.height, region.width)
    out = frame.copy()
    x0, y0 = max(sq.x0, 0), max(sq.y0, 0)
    x1, y1 = min(sq.x1, w), min(sq.y1, h)
    if x0 < x1 and y0 < y1:
        out[y0:y1, x0:x1] = full[y0 - region.y0:y1 - region.y0,
                                 x0 - region.x0:x1 - region.x0]
    return out


# ---------------------------------------------------------------------------
# Detection providers

class FileDetections:
    """Face boxes read from a JSON sidecar instead of a neural detector.

    The sidecar is either a single record ``{"frame": <id>, "boxes":
    [[x0, y0, x1, y1], ...]}`` or a list of such records.  Instances are
    callables mapping a frame id to its boxes.
    """

    def __init__(self, records):
        self._by_frame: dict[object, list[BoundingBox]] = {}
        if isinstance(records, dict):
            records = [records]
        for rec in records:
            boxes = [BoundingBox(*map(int, b)) for b in rec["boxes"]]
            self._by_frame[rec["frame"]] = boxes

    @classmethod
    def from_json(cls, path) -> "FileDetections":
        with open(Path(path)) as fh:
            return cls(json.load(fh))

    def frames(self) -> list:
        return list(self._by_frame)

    def __call__(self, frame_id) -> list[BoundingBox]:
        return self._by_frame.get(frame_id, [])
