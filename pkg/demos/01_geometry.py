"""Face-crop geometry: squaring, context expansion, extraction, paste-back.

Run with: python3 demos/01_geometry.py
"""

import numpy as np

from jagan.preprocess import (BoundingBox, context_square, extract_context,
                              paste_back, square_box)


def ramp_frame(h, w, seed=0):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    base = 0.6 * yy / h - 0.4 * xx / w + 0.2
    frame = np.stack([base + rng.uniform(-0.3, 0.3) for _ in range(3)], axis=-1)
    return np.clip(frame, -1, 1).astype(np.float32)


frame = ramp_frame(120, 160, seed=1)

# A detector box is rarely square; the pipeline squares it on the shorter
# side, then grabs a 3x context square around it for background conditioning.
detection = BoundingBox(60, 40, 100, 72)
square = square_box(detection)
context = context_square(square)
print(f"detection     {detection.as_tuple()}  {detection.width}x{detection.height}")
print(f"squared box   {square.as_tuple()}  side {square.side}")
print(f"context box   {context.as_tuple()}  side {context.side}")

ctx = extract_context(frame, detection, resolution=128)
print(f"\ncrop          {ctx.crop.shape} in [{ctx.crop.min():.2f}, {ctx.crop.max():.2f}]")
print(f"anon pixels   {int(ctx.anon_mask.sum())} of {ctx.anon_mask.size}"
      f" ({ctx.anon_mask.mean():.1%})")
print(f"border pixels {int(ctx.border_mask.sum())} (box is interior, so 0)")

# Everything under the anonymization mask is blacked out before the
# generator ever sees it.
assert np.all(ctx.crop[ctx.anon_mask == 1] == -1.0)

# A box hanging off the frame edge pads with black and reports it.
edge_ctx = extract_context(frame, BoundingBox(-8, -4, 24, 28), resolution=128)
print(f"\nedge crop border pixels: {int(edge_ctx.border_mask.sum())}")

# paste_back writes a generated crop into the squared-box region only.
fake = np.full((128, 128, 3), 0.9, dtype=np.float32)
out = paste_back(frame, ctx, fake)
changed = np.any(out != frame, axis=-1)
ys, xs = np.nonzero(changed)
print(f"\npasted region rows {ys.min()}..{ys.max()} cols {xs.min()}..{xs.max()}")
print(f"squared box          {square.as_tuple()}")
