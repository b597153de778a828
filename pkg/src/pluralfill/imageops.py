"""Plain-numpy image utilities: value mapping, pooling, resizing, PNG I/O.

Images travel as float32 NHWC (or HWC) in [-1, 1]; masks as float32 in {0, 1}
with 1 marking visible pixels.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def to_float(u8: np.ndarray) -> np.ndarray:
    """uint8 [0,255] -> float32 [-1,1]."""
    return (np.asarray(u8, dtype=np.float32) / 127.5) - 1.0


def to_uint8(x: np.ndarray) -> np.ndarray:
    """float32 [-1,1] -> uint8, clipped and rounded."""
    y = (np.clip(np.asarray(x, dtype=np.float32), -1.0, 1.0) + 1.0) * 127.5
    return np.rint(y).astype(np.uint8)


def _spatial_axes(x: np.ndarray) -> tuple[int, int]:
    if x.ndim == 4:
        return 1, 2
    if x.ndim == 3:
        return 0, 1
    raise ValueError(f"expected HWC or NHWC, got shape {x.shape}")


def avgpool2(x: np.ndarray) -> np.ndarray:
    """Average over non-overlapping 2x2 blocks."""
    ah, aw = _spatial_axes(x)
    h, w = x.shape[ah], x.shape[aw]
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    shape = list(x.shape)
    shape[ah : aw + 1] = [h // 2, 2, w // 2, 2]
    blocks = x.reshape(shape)
    return blocks.mean(axis=(ah + 1, ah + 3)).astype(x.dtype, copy=False)


def nearest_up2x(x: np.ndarray) -> np.ndarray:
    """Repeat each pixel into a 2x2 block."""
    ah, aw = _spatial_axes(x)
    return np.repeat(np.repeat(x, 2, axis=ah), 2, axis=aw)


def resize_nearest(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize (HWC or NHWC); exact for masks."""
    ah, aw = _spatial_axes(x)
    h, w = x.shape[ah], x.shape[aw]
    ri = np.minimum((np.arange(out_h) + 0.5) * h / out_h, h - 1).astype(np.int64)
    ci = np.minimum((np.arange(out_w) + 0.5) * w / out_w, w - 1).astype(np.int64)
    return x.take(ri, axis=ah).take(ci, axis=aw)


def resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers (HWC or NHWC float)."""
    x = np.asarray(x, dtype=np.float32)
    ah, aw = _spatial_axes(x)
    h, w = x.shape[ah], x.shape[aw]

    def coords(n_out, n_in):
        c = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
        c = np.clip(c, 0.0, n_in - 1)
        lo = np.floor(c).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (c - lo).astype(np.float32)

    r0, r1, fr = coords(out_h, h)
    c0, c1, fc = coords(out_w, w)

    top = x.take(r0, axis=ah)
    bot = x.take(r1, axis=ah)
    frr = fr.reshape((-1, 1, 1) if x.ndim == 3 else (1, -1, 1, 1))
    rows = top * (1.0 - frr) + bot * frr
    left = rows.take(c0, axis=aw)
    right = rows.take(c1, axis=aw)
    fcc = fc.reshape((1, -1, 1) if x.ndim == 3 else (1, 1, -1, 1))
    return (left * (1.0 - fcc) + right * fcc).astype(np.float32)


def load_png(path) -> np.ndarray:
    """PNG file -> uint8 HWC RGB."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(path, u8: np.ndarray) -> None:
    Image.fromarray(np.asarray(u8, dtype=np.uint8)).save(path, format="PNG")


def encode_png_bytes(u8: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(u8, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)
