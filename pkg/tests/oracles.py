"""Independent brute-force reference implementations.

Everything here is deliberately written the slow, obvious way (per-pixel
loops, BFS, exhaustive enumeration) so production code can be checked
against a second route that shares no helpers with it.
"""

from collections import deque

import numpy as np


# ---------------------------------------------------------------------------
# Geometry

def square_box_enumerated(x0, y0, x1, y1):
    """Square a box by enumerating every legal reduction of the longer axis.

    Candidates keep the short side and slide along the long axis; a
    candidate is center-preserving when its center is within 0.5 px of the
    original.  The lowest-coordinate candidate wins (floor tie-break).
    """
    w, h = x1 - x0, y1 - y0
    side = min(w, h)
    if w == h:
        return (x0, y0, x1, y1)
    if w > side:
        center = (x0 + x1) / 2.0
        starts = [s for s in range(x0, x1 - side + 1)
                  if abs((s + s + side) / 2.0 - center) <= 0.5]
        s = min(starts)
        return (s, y0, s + side, y1)
    center = (y0 + y1) / 2.0
    starts = [s for s in range(y0, y1 - side + 1)
              if abs((s + s + side) / 2.0 - center) <= 0.5]
    s = min(starts)
    return (x0, s, x1, s + side)


def bilinear_pixel(img, sy_f, sx_f):
    """One bilinear sample with float32 interpolation arithmetic."""
    h, w = img.shape[:2]
    y0 = int(np.floor(sy_f))
    x0 = int(np.floor(sx_f))
    y1 = min(y0 + 1, h - 1)
    x1 = min(x0 + 1, w - 1)
    wy = np.float32(sy_f - y0)
    wx = np.float32(sx_f - x0)
    one = np.float32(1.0)
    a, b = img[y0, x0], img[y0, x1]
    c, d = img[y1, x0], img[y1, x1]
    top = a * (one - wx) + b * wx
    bot = c * (one - wx) + d * wx
    return top * (one - wy) + bot * wy


def resize_bilinear_loops(img, out_h, out_w):
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape[:2]
    shape = (out_h, out_w) + img.shape[2:]
    out = np.zeros(shape, dtype=np.float32)
    for i in range(out_h):
        sy = min(max((i + 0.5) * (h / out_h) - 0.5, 0.0), h - 1.0)
        for j in range(out_w):
            sx = min(max((j + 0.5) * (w / out_w) - 0.5, 0.0), w - 1.0)
            out[i, j] = bilinear_pixel(img, sy, sx)
    return out


def resize_nearest_loops(mask, out_h, out_w):
    mask = np.asarray(mask)
    h, w = mask.shape[:2]
    out = np.zeros((out_h, out_w), dtype=mask.dtype)
    for i in range(out_h):
        sy = min(max(int(np.floor((i + 0.5) * (h / out_h))), 0), h - 1)
        for j in range(out_w):
            sx = min(max(int(np.floor((j + 0.5) * (w / out_w))), 0), w - 1)
            out[i, j] = mask[sy, sx]
    return out


def extract_rasterized(frame, box, resolution):
    """Per-pixel replay of the crop/mask/resize pipeline.

    Returns (masked crop, border mask, anon mask, squared box, context box).
    """
    frame = np.asarray(frame, dtype=np.float32)
    fh, fw = frame.shape[:2]
    sx0, sy0, sx1, sy1 = square_box_enumerated(*box)
    side = sx1 - sx0
    cx0, cy0 = sx0 - side, sy0 - side
    cx1, cy1 = sx1 + side, sy1 + side

    ch, cw = cy1 - cy0, cx1 - cx0
    crop = np.zeros((ch, cw, 3), dtype=np.float32)
    border = np.zeros((ch, cw), dtype=np.uint8)
    anon = np.zeros((ch, cw), dtype=np.uint8)
    for r in range(ch):
        for c in range(cw):
            fy, fx = cy0 + r, cx0 + c
            if 0 <= fy < fh and 0 <= fx < fw:
                crop[r, c] = frame[fy, fx]
            else:
                crop[r, c] = np.float32(-1.0)
                border[r, c] = 1
            if sy0 <= fy < sy1 and sx0 <= fx < sx1:
                anon[r, c] = 1

    crop_r = resize_bilinear_loops(crop, resolution, resolution)
    border_r = resize_nearest_loops(border, resolution, resolution)
    anon_r = resize_nearest_loops(anon, resolution, resolution)
    crop_r[anon_r == 1] = np.float32(-1.0)
    return crop_r, border_r, anon_r, (sx0, sy0, sx1, sy1), (cx0, cy0, cx1, cy1)


def paste_rasterized(frame, square, context, generated):
    """Per-pixel replay of paste_back."""
    frame = np.asarray(frame, dtype=np.float32)
    fh, fw = frame.shape[:2]
    cx0, cy0, cx1, cy1 = context
    big = resize_bilinear_loops(generated, cy1 - cy0, cx1 - cx0)
    out = frame.copy()
    sx0, sy0, sx1, sy1 = square
    for y in range(max(sy0, 0), min(sy1, fh)):
        for x in range(max(sx0, 0), min(sx1, fw)):
            out[y, x] = big[y - cy0, x - cx0]
    return out


# ---------------------------------------------------------------------------
# Distance transform

def chebyshev_bfs(mask):
    """Chebyshev distance to the nearest unmasked pixel, by 8-connected BFS.

    The image is surrounded by a virtual ring of known pixels, so distances
    are finite even on a fully masked input.
    """
    m = np.asarray(mask)
    h, w = m.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = m
    dist = np.full(padded.shape, -1, dtype=np.int64)
    queue = deque()
    for r in range(h + 2):
        for c in range(w + 2):
            if padded[r, c] == 0:
                dist[r, c] = 0
                queue.append((r, c))
    while queue:
        r, c = queue.popleft()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h + 2 and 0 <= cc < w + 2 and dist[rr, cc] < 0:
                    dist[rr, cc] = dist[r, c] + 1
                    queue.append((rr, cc))
    return dist[1:-1, 1:-1]


def discount_bfs(mask, gamma):
    """gamma**d on the mask (d from chebyshev_bfs), 0 elsewhere, float32."""
    m = np.asarray(mask)
    d = chebyshev_bfs(m).astype(np.float64)
    w = np.power(np.float64(gamma), d)
    w[m == 0] = 0.0
    return w.astype(np.float32)


# ---------------------------------------------------------------------------
# Numerics

def numeric_grad(f, x, eps=1e-3):
    """Central-difference gradient of scalar f at numpy array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
        it.iternext()
    return g


def frechet_diagonal(mu1, var1, mu2, var2):
    """Closed-form Fréchet distance for diagonal Gaussians."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    s1, s2 = np.sqrt(np.asarray(var1, float)), np.sqrt(np.asarray(var2, float))
    return float(((mu1 - mu2) ** 2).sum() + ((s1 - s2) ** 2).sum())


def sorted_median(values):
    vals = sorted(float(v) for v in values)
    n = len(vals)
    if n % 2 == 1:
        return vals[n // 2]
    return (vals[n // 2 - 1] + vals[n // 2]) / 2.0


# ---------------------------------------------------------------------------
# Tracking

def greedy_matrix_matching(matrix, sigma):
    """Repeatedly take the highest entry >= sigma, blanking its row and column.

    Ties break toward the lower row index, then lower column index.
    Returns a list of (row, col) matches.
    """
    m = [list(row) for row in matrix]
    matches = []
    while True:
        best = None
        for r, row in enumerate(m):
            for c, v in enumerate(row):
                if v is not None and v >= sigma:
                    if best is None or v > best[0]:
                        best = (v, r, c)
        if best is None:
            break
        _, r, c = best
        matches.append((r, c))
        m[r] = [None] * len(m[r])
        for row in m:
            row[c] = None
    return matches


def box_iou(a, b):
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    ix = min(ax1, bx1) - max(ax0, bx0)
    iy = min(ay1, by1) - max(ay0, by0)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def filter_reference(per_frame_boxes, hashes, sigma, min_len, max_hamming):
    """Reference curation: returns (start, length) per emitted track.

    Tracks via greedy_matrix_matching per frame; keeps tracks of at least
    min_len frames whose frame span has no consecutive hash pair further
    than max_hamming apart.  Box tuples only, no crops.
    """
    tracks = []  # dicts: start, boxes, active
    for f, dets in enumerate(per_frame_boxes):
        active = [t for t in tracks if t["active"]]
        matrix = [[box_iou(t["boxes"][-1], d) for d in dets] for t in active]
        matches = greedy_matrix_matching(matrix, sigma)
        matched_rows = {r for r, _ in matches}
        matched_cols = {c for _, c in matches}
        for r, c in matches:
            active[r]["boxes"].append(dets[c])
        for r, t in enumerate(active):
            if r not in matched_rows:
                t["active"] = False
        for c, d in enumerate(dets):
            if c not in matched_cols:
                tracks.append({"start": f, "boxes": [d], "active": True})
    result = []
    for t in tracks:
        n = len(t["boxes"])
        if n < min_len:
            continue
        span = hashes[t["start"]:t["start"] + n]
        if any(bin(a ^ b).count("1") > max_hamming
               for a, b in zip(span, span[1:])):
            continue
        result.append((t["start"], n))
    return result
