"""Counter-based deterministic PRNG.

Draws are pure functions of `(seed, stream, counter)`, so any draw can be
reproduced from a serialized state and independent streams never interact.
Words come from SplitMix64 applied to the absolute draw index; uniforms keep
the top 24 bits, which is exactly representable in float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0x6A09E667F3BCC909)
_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_INV24 = np.float32(1.0 / (1 << 24))


def _mix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x + _GOLDEN) & _U64
        z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _U64
        z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _U64
        return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class PrngState:
    """Immutable position in a random stream."""

    seed: int
    stream: int = 0
    counter: int = 0

    def as_dict(self) -> dict:
        return {"seed": int(self.seed), "stream": int(self.stream), "counter": int(self.counter)}

    @classmethod
    def from_dict(cls, d: dict) -> "PrngState":
        return cls(seed=int(d["seed"]), stream=int(d["stream"]), counter=int(d["counter"]))


def substream(state: PrngState, k: int) -> PrngState:
    """Independent child stream k of `state`, starting at counter 0."""
    with np.errstate(over="ignore"):
        base = _mix(np.uint64(state.seed) ^ _STREAM_SALT)
        child = _mix((base + np.uint64(state.stream) * _GOLDEN + np.uint64(k + 1)) & _U64)
    return PrngState(seed=state.seed, stream=int(child), counter=0)


def _words(state: PrngState, n: int) -> tuple[np.ndarray, PrngState]:
    with np.errstate(over="ignore"):
        base = _mix(np.uint64(state.seed)) ^ _mix(np.uint64(state.stream) ^ _STREAM_SALT)
        idx = np.uint64(state.counter) + np.arange(n, dtype=np.uint64)
        w = _mix((base + idx * _GOLDEN) & _U64)
    return w, PrngState(state.seed, state.stream, state.counter + n)


def uniform(state: PrngState, shape=()) -> tuple[np.ndarray, PrngState]:
    """float32 samples in [0, 1)."""
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    w, state = _words(state, n)
    u = ((w >> np.uint64(40)).astype(np.float32)) * _INV24
    return u.reshape(shape), state


def normal(state: PrngState, shape=()) -> tuple[np.ndarray, PrngState]:
    """float32 standard normal samples (Box-Muller)."""
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    u, state = uniform(state, (2 * n,))
    u1 = np.maximum(u[:n], np.float32(1e-7))
    u2 = u[n:]
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(np.float32(2.0 * np.pi) * u2)
    return z.astype(np.float32).reshape(shape), state


def randint(state: PrngState, low: int, high: int, shape=()) -> tuple[np.ndarray, PrngState]:
    """int64 samples in [low, high). Modulo mapping; bias is ~span/2^64."""
    if high <= low:
        raise ValueError("randint requires high > low")
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    w, state = _words(state, n)
    span = np.uint64(high - low)
    vals = (w % span).astype(np.int64) + low
    return vals.reshape(shape), state


def categorical(state: PrngState, probs: np.ndarray) -> tuple[np.ndarray, PrngState]:
    """One index per row of `probs` (..., K), proportional to the row entries.

    Rows need not be normalized; `<=` on the running sum keeps zero-probability
    prefixes unreachable, so a one-hot row always returns its hot index.
    """
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("negative probability")
    c = np.cumsum(p, axis=-1)
    total = c[..., -1]
    if np.any(total <= 0):
        raise ValueError("all-zero probability row")
    u, state = uniform(state, total.shape)
    r = u.astype(np.float64) * total
    idx = (c <= r[..., None]).sum(axis=-1)
    return np.minimum(idx, p.shape[-1] - 1).astype(np.int64), state


def permutation(state: PrngState, n: int) -> tuple[np.ndarray, PrngState]:
    """Deterministic random permutation of range(n) via uniform key sort."""
    w, state = _words(state, n)
    return np.argsort(w, kind="stable"), state
