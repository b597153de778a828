"""Toy dataset synthesis and mask generation.

Images are procedural scenes (palette gradient background, periodic stripes,
a few solid shapes) rendered at the full resolution; every drawing decision
comes from the counter PRNG, so a (seed, index) pair always renders the same
scene and train/test splits are disjoint by index range.

Masks mark visible pixels with 1. Free-form masks are random-walk brush
strokes plus occasional rectangles, resampled until the hidden ratio lands in
the requested bucket.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import imageops
from .configs import DatasetSpec
from .nd import prng

BUCKETS = {
    "20-30": (0.2, 0.3),
    "30-40": (0.3, 0.4),
    "40-50": (0.4, 0.5),
}


class MaskBucketError(RuntimeError):
    """Raised when no sampled mask lands in the target ratio bucket."""


@dataclass(frozen=True)
class MaskSpec:
    bitmap: np.ndarray           # H x W float32 in {0, 1}; 1 = visible
    hidden_ratio: float

    def __post_init__(self):
        bm = self.bitmap
        if bm.ndim != 2 or not np.all((bm == 0.0) | (bm == 1.0)):
            raise ValueError("mask bitmap must be 2-D binary")
        if abs(self.hidden_ratio - (1.0 - float(bm.mean()))) > 1e-6:
            raise ValueError("hidden_ratio inconsistent with bitmap")


def make_mask(bitmap: np.ndarray) -> MaskSpec:
    bm = np.ascontiguousarray(bitmap, dtype=np.float32)
    return MaskSpec(bitmap=bm, hidden_ratio=1.0 - float(bm.mean()))


def center_mask(h: int, w: int, fraction: float) -> MaskSpec:
    """Axis-aligned centered square hiding ~`fraction` of the pixels."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    side = int(round(np.sqrt(fraction) * min(h, w)))
    side = max(1, min(side, min(h, w)))
    bm = np.ones((h, w), np.float32)
    top, left = (h - side) // 2, (w - side) // 2
    bm[top : top + side, left : left + side] = 0.0
    return make_mask(bm)


def _stamp_disk(hidden: np.ndarray, cy: float, cx: float, r: float) -> None:
    h, w = hidden.shape
    y0, y1 = max(0, int(cy - r) - 1), min(h, int(cy + r) + 2)
    x0, x1 = max(0, int(cx - r) - 1), min(w, int(cx + r) + 2)
    if y0 >= y1 or x0 >= x1:
        return
    yy = np.arange(y0, y1, dtype=np.float32)[:, None] - cy
    xx = np.arange(x0, x1, dtype=np.float32)[None, :] - cx
    hidden[y0:y1, x0:x1] |= (yy * yy + xx * xx) <= r * r


def _add_stroke(hidden: np.ndarray, state: prng.PrngState) -> prng.PrngState:
    """One brush polyline (or occasionally a rectangle) stamped into `hidden`."""
    h, w = hidden.shape
    scale = min(h, w)
    u, state = prng.uniform(state, (7,))
    if float(u[6]) < 0.15:
        rh = max(1, int((0.10 + 0.12 * float(u[0])) * h))
        rw = max(1, int((0.10 + 0.12 * float(u[1])) * w))
        top = int(float(u[2]) * max(1, h - rh))
        left = int(float(u[3]) * max(1, w - rw))
        hidden[top : top + rh, left : left + rw] = True
        return state
    cy, cx = float(u[0]) * h, float(u[1]) * w
    radius = max(1.5, (0.03 + 0.05 * float(u[2])) * scale)
    angle = float(u[3]) * 2.0 * np.pi
    n_seg = 2 + int(float(u[4]) * 4.0)
    for _ in range(n_seg):
        v, state = prng.uniform(state, (2,))
        angle += (float(v[0]) - 0.5) * 1.8
        step = (0.05 + 0.07 * float(v[1])) * scale
        ny, nx = cy + np.sin(angle) * step, cx + np.cos(angle) * step
        n_dots = max(2, int(step / max(radius * 0.5, 1.0)) + 1)
        for t in np.linspace(0.0, 1.0, n_dots):
            _stamp_disk(hidden, cy + (ny - cy) * t, cx + (nx - cx) * t, radius)
        cy, cx = ny, nx
    return state


def _draw_freeform(h: int, w: int, lo: float, hi: float,
                   state: prng.PrngState) -> tuple[np.ndarray, prng.PrngState]:
    """Accumulate strokes until coverage crosses a target inside [lo, hi).

    The stopping target sits in the lower part of the bucket so the final
    stroke's overshoot usually still lands inside it.
    """
    hidden = np.zeros((h, w), bool)
    u, state = prng.uniform(state, (1,))
    target = lo + (hi - lo) * (0.1 + 0.7 * float(u[0]))
    for _ in range(400):
        if hidden.mean() >= target:
            break
        state = _add_stroke(hidden, state)
    return hidden, state


def resolve_bucket(bucket) -> tuple[float, float]:
    if isinstance(bucket, str):
        if bucket not in BUCKETS:
            raise ValueError(f"unknown bucket {bucket!r}; use one of {sorted(BUCKETS)}")
        return BUCKETS[bucket]
    lo, hi = float(bucket[0]), float(bucket[1])
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"bad bucket range ({lo}, {hi})")
    return lo, hi


def gen_freeform_mask(h: int, w: int, bucket, seed: int,
                      max_tries: int = 100) -> MaskSpec:
    """Brush-stroke mask whose hidden ratio falls in `bucket` (name or range)."""
    lo, hi = resolve_bucket(bucket)
    state = prng.substream(prng.PrngState(seed=seed, stream=0x4D61736B), 0)
    for _ in range(max_tries):
        hidden, state = _draw_freeform(h, w, lo, hi, state)
        ratio = float(hidden.mean())
        if lo <= ratio < hi:
            return make_mask(1.0 - hidden.astype(np.float32))
    raise MaskBucketError(
        f"no mask with hidden ratio in [{lo}, {hi}) after {max_tries} tries")


def rasterize_strokes(h: int, w: int, strokes) -> MaskSpec:
    """Turn brush strokes into a visibility bitmap; stroked pixels are hidden.

    Each stroke is ``{"points": [[x, y], ...], "radius": r}``: filled disks
    swept along the polyline, radius in pixels.  One point stamps one disk.
    Deterministic, so a recorded stroke list always replays to the same mask.
    """
    hidden = np.zeros((h, w), bool)
    for stroke in strokes:
        pts = [(float(p[0]), float(p[1])) for p in stroke["points"]]
        r = float(stroke["radius"])
        if not pts or r <= 0:
            raise ValueError("each stroke needs points and a positive radius")
        _stamp_disk(hidden, pts[0][1], pts[0][0], r)
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            seg = float(np.hypot(x1 - x0, y1 - y0))
            n_dots = max(2, int(seg / max(r * 0.5, 1.0)) + 1)
            for t in np.linspace(0.0, 1.0, n_dots):
                _stamp_disk(hidden, y0 + (y1 - y0) * t, x0 + (x1 - x0) * t, r)
    return make_mask(1.0 - hidden.astype(np.float32))


# ---------------------------------------------------------------------------
# synthetic scenes
# ---------------------------------------------------------------------------

# small fixed palette, values in [-1, 1]
_PALETTE = np.array([
    [0.9, 0.2, -0.5], [-0.7, 0.4, 0.8], [0.1, -0.8, 0.3], [0.8, 0.7, -0.9],
    [-0.9, -0.2, -0.6], [0.3, 0.9, 0.6], [-0.4, -0.9, 0.9], [0.6, -0.3, -0.1],
], dtype=np.float32)


def _pick_color(state):
    k, state = prng.randint(state, 0, len(_PALETTE))
    return _PALETTE[int(k[()])], state


def render_scene(size: int, seed: int, index: int) -> np.ndarray:
    """One deterministic scene at `size` x `size`, float32 RGB in [-1, 1]."""
    state = prng.substream(prng.PrngState(seed=seed, stream=0x53636E65), index)
    ax = (np.arange(size, dtype=np.float32) + 0.5) / size
    xx, yy = np.meshgrid(ax, ax)

    c0, state = _pick_color(state)
    c1, state = _pick_color(state)
    u, state = prng.uniform(state, (2,))
    th = float(u[0]) * 2.0 * np.pi
    g = xx * np.cos(th) + yy * np.sin(th)
    g = (g - g.min()) / max(g.max() - g.min(), 1e-6)
    img = c0[None, None] + (c1 - c0)[None, None] * g[..., None]

    # periodic stripes, blended on top
    c2, state = _pick_color(state)
    u, state = prng.uniform(state, (4,))
    freq = 2.0 + np.floor(float(u[0]) * 5.0)
    th2 = float(u[1]) * np.pi
    phase = float(u[2])
    alpha = 0.15 + 0.25 * float(u[3])
    s = 0.5 * (1.0 + np.sin(2.0 * np.pi * (freq * (xx * np.cos(th2) + yy * np.sin(th2)) + phase)))
    a = (alpha * s)[..., None].astype(np.float32)
    img = img * (1.0 - a) + c2[None, None] * a

    n_shapes, state = prng.randint(state, 1, 4)
    for _ in range(int(n_shapes[()])):
        cs, state = _pick_color(state)
        u, state = prng.uniform(state, (6,))
        cy, cx = float(u[0]), float(u[1])
        if float(u[2]) < 0.5:  # disk with a soft 1.5-px edge
            r = 0.08 + 0.17 * float(u[3])
            d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
            m = np.clip((r - d) / (1.5 / size), 0.0, 1.0)
        else:  # axis-aligned rectangle
            hw = 0.06 + 0.14 * float(u[3])
            hh = 0.06 + 0.14 * float(u[4])
            m = ((np.abs(xx - cx) < hw) & (np.abs(yy - cy) < hh)).astype(np.float32)
        m = m[..., None].astype(np.float32)
        img = img * (1.0 - m) + cs[None, None] * m

    return np.clip(img, -1.0, 1.0).astype(np.float32)


@dataclass
class Dataset:
    train: np.ndarray            # (n, S, S, 3) float32 in [-1, 1]
    test: np.ndarray
    spec: DatasetSpec


def gen_synthetic_dataset(spec: DatasetSpec) -> Dataset:
    spec.validate()
    if spec.source == "image_directory":
        return _load_directory(spec)
    s = spec.image_size
    train = np.stack([render_scene(s, spec.seed, i) for i in range(spec.train_count)])
    test = np.stack([render_scene(s, spec.seed, spec.train_count + j)
                     for j in range(spec.test_count)]) if spec.test_count else \
        np.zeros((0, s, s, 3), np.float32)
    return Dataset(train=train, test=test, spec=spec)


def _load_directory(spec: DatasetSpec) -> Dataset:
    from pathlib import Path

    paths = sorted(Path(spec.directory).glob("*.png"))
    need = spec.train_count + spec.test_count
    if len(paths) < need:
        raise ValueError(f"{spec.directory}: found {len(paths)} PNGs, need {need}")
    perm, _ = prng.permutation(prng.PrngState(seed=spec.seed, stream=0x44697273), len(paths))
    imgs = []
    for i in perm[:need]:
        u8 = imageops.load_png(paths[int(i)])
        f = imageops.to_float(u8)
        if f.shape[:2] != (spec.image_size, spec.image_size):
            f = imageops.resize_bilinear(f, spec.image_size, spec.image_size)
        imgs.append(f)
    arr = np.stack(imgs)
    return Dataset(train=arr[: spec.train_count],
                   test=arr[spec.train_count : need], spec=spec)


def minibatches(n: int, batch_size: int, steps: int, seed: int):
    """Yield `steps` index arrays; reshuffles each epoch, deterministic per seed."""
    batch_size = min(batch_size, n)
    state = prng.PrngState(seed=seed, stream=0x42617463)
    order, state = prng.permutation(state, n)
    pos = 0
    for _ in range(steps):
        if pos + batch_size > n:
            order, state = prng.permutation(state, n)
            pos = 0
        yield order[pos : pos + batch_size]
        pos += batch_size
