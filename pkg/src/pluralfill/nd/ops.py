"""Differentiable primitives over `nd.Array`.

Every op computes in float32 and, when any operand sits on a tape, records a
vjp closure for the reverse pass. With pure ndarray inputs the ops degrade to
plain numpy and return detached Arrays, so inference never touches a tape.

Convention for vjps: each parent slot gets its own freshly computed gradient
buffer (or the upstream gradient itself / a view, which the engine copies on
first accumulation).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .engine import Array, Tape, as_f32, find_tape, stop_gradient  # noqa: F401

_GELU_C = math.sqrt(2.0 / math.pi)


def _emit(tape, data, parents, vjp):
    if tape is None:
        return Array(np.asarray(data, dtype=np.float32))
    return tape.record(data, parents, vjp)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def add(a, b):
    tape = find_tape(a, b)
    da, db = as_f32(a), as_f32(b)
    out = da + db
    return _emit(tape, out, (a, b),
                 lambda g: (_unbroadcast(g, da.shape), _unbroadcast(g, db.shape)))


def sub(a, b):
    tape = find_tape(a, b)
    da, db = as_f32(a), as_f32(b)
    out = da - db
    return _emit(tape, out, (a, b),
                 lambda g: (_unbroadcast(g, da.shape), _unbroadcast(-g, db.shape)))


def mul(a, b):
    tape = find_tape(a, b)
    da, db = as_f32(a), as_f32(b)
    out = da * db
    return _emit(tape, out, (a, b),
                 lambda g: (_unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)))


def neg(a):
    tape = find_tape(a)
    return _emit(tape, -as_f32(a), (a,), lambda g: (-g,))


def scale(a, s: float):
    """a * s for a python scalar s."""
    tape = find_tape(a)
    s = float(s)
    return _emit(tape, as_f32(a) * np.float32(s), (a,), lambda g: (g * np.float32(s),))


def square(a):
    tape = find_tape(a)
    da = as_f32(a)
    return _emit(tape, da * da, (a,), lambda g: (g * (2.0 * da),))


def abs_(a):
    tape = find_tape(a)
    da = as_f32(a)
    return _emit(tape, np.abs(da), (a,), lambda g: (g * np.sign(da),))


def exp(a):
    tape = find_tape(a)
    out = np.exp(as_f32(a))
    return _emit(tape, out, (a,), lambda g: (g * out,))


def log(a):
    tape = find_tape(a)
    da = as_f32(a)
    return _emit(tape, np.log(da), (a,), lambda g: (g / da,))


def tanh(a):
    tape = find_tape(a)
    out = np.tanh(as_f32(a))
    return _emit(tape, out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a):
    tape = find_tape(a)
    da = as_f32(a)
    return _emit(tape, np.maximum(da, 0.0), (a,), lambda g: (g * (da > 0.0),))


def leaky_relu(a, slope: float = 0.2):
    tape = find_tape(a)
    da = as_f32(a)
    out = np.where(da > 0.0, da, np.float32(slope) * da)
    return _emit(tape, out, (a,),
                 lambda g: (g * np.where(da > 0.0, np.float32(1.0), np.float32(slope)),))


def gelu(a):
    """Tanh-form GELU: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))."""
    tape = find_tape(a)
    x = as_f32(a)
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _emit(tape, out, (a,), vjp)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b):
    """Matrix product; supports 2-D operands and stacked 3-D batches."""
    tape = find_tape(a, b)
    da, db = as_f32(a), as_f32(b)
    out = da @ db

    def vjp(g):
        ga = g @ np.swapaxes(db, -1, -2)
        gb = np.swapaxes(da, -1, -2) @ g
        if ga.ndim > da.ndim:
            ga = ga.sum(axis=tuple(range(ga.ndim - da.ndim)))
        if gb.ndim > db.ndim:
            gb = gb.sum(axis=tuple(range(gb.ndim - db.ndim)))
        return ga, gb

    return _emit(tape, out, (a, b), vjp)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Padded NHWC input -> (N*Ho*Wo, kh*kw*Ci) patch matrix."""
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))      # N,H',W',Ci,kh,kw
    win = win[:, ::stride, :: stride]
    win = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))  # N,Ho,Wo,kh,kw,Ci
    n, ho, wo = win.shape[:3]
    return win.reshape(n * ho * wo, kh * kw * xp.shape[3]), ho, wo


def _conv2d_raw(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    n, h, ww_, ci = x.shape
    kh, kw, _, co = w.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols, ho, wo = _im2col(x, kh, kw, stride)
    out = cols @ w.reshape(kh * kw * ci, co)
    return out.reshape(n, ho, wo, co)


def conv2d(x, w, b=None, stride: int = 1, pad: int | None = None):
    """2-D convolution, NHWC input, (kh,kw,Ci,Co) kernel, zero padding.

    pad defaults to kh//2 ("same" for stride 1, exact halving for stride 2
    on even inputs).
    """
    tape = find_tape(x, w, b)
    dx_, dw_ = as_f32(x), as_f32(w)
    if dx_.ndim != 4 or dw_.ndim != 4 or dx_.shape[3] != dw_.shape[2]:
        raise ValueError(f"conv2d shape mismatch: x {dx_.shape}, w {dw_.shape}")
    kh, kw, ci, co = dw_.shape
    p = kh // 2 if pad is None else pad
    out = _conv2d_raw(dx_, dw_, stride, p)
    if b is not None:
        out = out + as_f32(b)

    n, h, w_in = dx_.shape[0], dx_.shape[1], dx_.shape[2]
    ho, wo = out.shape[1], out.shape[2]

    def vjp(g):
        # weight gradient: recompute patches instead of keeping them alive
        xp = np.pad(dx_, ((0, 0), (p, p), (p, p), (0, 0))) if p else dx_
        cols, _, _ = _im2col(xp, kh, kw, stride)
        g2 = g.reshape(n * ho * wo, co)
        gw = (cols.T @ g2).reshape(kh, kw, ci, co)
        # input gradient: correlate the stride-dilated upstream gradient with
        # the spatially flipped, channel-swapped kernel
        rh = (h + 2 * p - kh) % stride
        rw = (w_in + 2 * p - kw) % stride
        if stride > 1:
            gd = np.zeros((n, (ho - 1) * stride + 1, (wo - 1) * stride + 1, co), dtype=np.float32)
            gd[:, ::stride, ::stride] = g
        else:
            gd = g
        gd = np.pad(gd, ((0, 0), (kh - 1, kh - 1 + rh), (kw - 1, kw - 1 + rw), (0, 0)))
        wf = np.ascontiguousarray(dw_[::-1, ::-1].transpose(0, 1, 3, 2))
        gx = _conv2d_raw(gd, wf, 1, 0)
        if p:
            gx = gx[:, p : p + h, p : p + w_in]
        gb = g.sum(axis=(0, 1, 2)) if b is not None else None
        return gx, gw, gb

    parents = (x, w, b) if b is not None else (x, w)
    return _emit(tape, out, parents, (lambda g: vjp(g)[: len(parents)]))


def upsample2x(x):
    """Nearest-neighbor 2x spatial upsampling, NHWC."""
    tape = find_tape(x)
    dx_ = as_f32(x)
    out = np.repeat(np.repeat(dx_, 2, axis=1), 2, axis=2)
    n, h, w, c = dx_.shape

    def vjp(g):
        return (g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)),)

    return _emit(tape, out, (x,), vjp)


# ---------------------------------------------------------------------------
# normalization / attention pieces
# ---------------------------------------------------------------------------


def softmax(x):
    """Softmax over the last axis."""
    tape = find_tape(x)
    dx_ = as_f32(x)
    m = dx_.max(axis=-1, keepdims=True)
    e = np.exp(dx_ - m)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _emit(tape, out, (x,), vjp)


def log_softmax(x):
    tape = find_tape(x)
    dx_ = as_f32(x)
    m = dx_.max(axis=-1, keepdims=True)
    s = dx_ - m
    lse = np.log(np.exp(s).sum(axis=-1, keepdims=True))
    out = s - lse

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _emit(tape, out, (x,), vjp)


def layernorm(x, gain, bias, eps: float = 1e-5):
    """Normalize the last axis, then apply elementwise gain and bias."""
    tape = find_tape(x, gain, bias)
    dx_, dg_, db_ = as_f32(x), as_f32(gain), as_f32(bias)
    d = dx_.shape[-1]
    mu = dx_.mean(axis=-1, keepdims=True)
    xc = dx_ - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = xc * ivar
    out = xhat * dg_ + db_

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead)
        gbias = g.sum(axis=lead)
        gh = g * dg_
        gx = ivar * (gh - gh.mean(axis=-1, keepdims=True)
                     - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, ggain.reshape(dg_.shape), gbias.reshape(db_.shape)

    return _emit(tape, out, (x, gain, bias), vjp)


# ---------------------------------------------------------------------------
# shape & indexing
# ---------------------------------------------------------------------------


def reshape(x, shape):
    tape = find_tape(x)
    dx_ = as_f32(x)
    return _emit(tape, dx_.reshape(shape), (x,), lambda g: (g.reshape(dx_.shape),))


def transpose(x, axes):
    tape = find_tape(x)
    inv = tuple(np.argsort(axes))
    return _emit(tape, as_f32(x).transpose(axes), (x,), lambda g: (g.transpose(inv),))


def concat(parts, axis: int = -1):
    tape = find_tape(*parts)
    datas = [as_f32(p) for p in parts]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit(tape, out, tuple(parts), vjp)


def slice_axis(x, start: int, stop: int, axis: int = -1):
    tape = find_tape(x)
    dx_ = as_f32(x)
    idx = [slice(None)] * dx_.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def vjp(g):
        gx = np.zeros_like(dx_)
        gx[idx] = g
        return (gx,)

    return _emit(tape, dx_[idx], (x,), vjp)


def embedding_gather(table, idx):
    """Rows of `table` (K,D) at integer `idx` (any shape) -> idx.shape + (D,)."""
    tape = find_tape(table)
    dt_ = as_f32(table)
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= dt_.shape[0]):
        raise IndexError("embedding index out of range")
    out = dt_[idx]

    def vjp(g):
        gt = np.zeros_like(dt_)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, dt_.shape[1]))
        return (gt,)

    return _emit(tape, out, (table,), vjp)


def take_along_last(x, idx):
    """x[..., idx] per position: x (...,K), idx (...) ints -> (...)."""
    tape = find_tape(x)
    dx_ = as_f32(x)
    idx = np.asarray(idx)
    out = np.take_along_axis(dx_, idx[..., None], axis=-1)[..., 0]

    def vjp(g):
        gx = np.zeros_like(dx_)
        np.put_along_axis(gx, idx[..., None], g[..., None], axis=-1)
        return (gx,)

    return _emit(tape, out, (x,), vjp)


# ---------------------------------------------------------------------------
# reductions & distances
# ---------------------------------------------------------------------------


def sum_(x, axis=None):
    tape = find_tape(x)
    dx_ = as_f32(x)
    out = dx_.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, dx_.shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), dx_.shape),)

    return _emit(tape, np.atleast_1d(out) if axis is None else out, (x,), vjp)


def mean(x, axis=None):
    tape = find_tape(x)
    dx_ = as_f32(x)
    out = dx_.mean(axis=axis)
    denom = dx_.size if axis is None else dx_.shape[axis]

    def vjp(g):
        gs = g / np.float32(denom)
        if axis is None:
            return (np.broadcast_to(gs, dx_.shape),)
        return (np.broadcast_to(np.expand_dims(gs, axis), dx_.shape),)

    return _emit(tape, np.atleast_1d(out) if axis is None else out, (x,), vjp)


def l1_distance(a, b):
    """Mean absolute difference (scalar)."""
    return mean(abs_(sub(a, b)))


def squared_distance(a, b):
    """Mean squared difference (scalar)."""
    return mean(square(sub(a, b)))


def straight_through(x, q):
    """Forward takes q's bits exactly; gradient flows to x unchanged, none to q."""
    tape = find_tape(x, q)
    dq = as_f32(q)
    return _emit(tape, dq, (x, q), lambda g: (g, None))
