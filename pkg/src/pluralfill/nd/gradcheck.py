"""Finite-difference verification of tape gradients.

Forward evaluations are detached (no tape), so the check exercises exactly the
same float32 code paths as training.
"""

from __future__ import annotations

import numpy as np

from .engine import Array, Tape, backward


def central_diff(f, x: np.ndarray, eps: float) -> np.ndarray:
    """Elementwise d f / d x by central differences, accumulated in float64."""
    x = np.asarray(x, dtype=np.float32).copy()
    out = np.zeros(x.size, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(x.size):
        orig = flat[i]
        flat[i] = orig + np.float32(eps)
        fp = float(f(x))
        flat[i] = orig - np.float32(eps)
        fm = float(f(x))
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * eps)
    return out.reshape(x.shape)


def analytic_gradient(fn, x0: np.ndarray) -> np.ndarray:
    """Tape gradient of the scalar fn(x) at x0."""
    tape = Tape()
    leaf = tape.leaf(np.asarray(x0, dtype=np.float32).copy(), trainable=True)
    return backward(fn(leaf))[leaf]


def check_gradients(fn, x0: np.ndarray, eps: float = 1e-2) -> float:
    """Max over coordinates of |analytic - central| / max(1e-8, |central|).

    fn maps one Array to a scalar Array; close over any other operands. A
    coordinate with no influence on the output differentiates to an exact 0 on
    both sides (bit-identical forward evals), so structural zeros never trip
    the tiny denominator floor; callers should keep genuinely nonzero
    gradients at a sane magnitude (see tests) since float32 forward noise
    lands in the numerator.
    """
    x0 = np.asarray(x0, dtype=np.float32)
    analytic = np.asarray(analytic_gradient(fn, x0), dtype=np.float64)

    def f(x):
        return fn(Array(x.copy())).data.reshape(()).item()

    numeric = central_diff(f, x0, eps)
    denom = np.maximum(1e-8, np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
