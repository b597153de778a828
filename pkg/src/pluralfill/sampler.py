"""Token samplers: single-pass parallel draw and a sequential baseline.

The parallel sampler runs the token model exactly once and draws every
hidden code from that one set of logits.  The sequential baseline re-runs
the model after each position it fills, which is the usual autoregressive
costing; it exists for speed and quality comparisons, not production use.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import codec, nd, transformer
from .configs import SampleConfig, TransformerConfig, VQConfig


def _topk_filter(logits: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row top-k: returns (candidate indices, renormalized probs).

    Stable sort keeps the lowest index on tied logits, so k=1 reduces to a
    deterministic argmax.
    """
    order = np.argsort(-logits, axis=-1, kind="stable")[..., :k]
    top = np.take_along_axis(logits.astype(np.float64), order, axis=-1)
    top -= top.max(axis=-1, keepdims=True)
    p = np.exp(top)
    p /= p.sum(axis=-1, keepdims=True)
    return order, p


def _hidden_positions(w: np.ndarray) -> np.ndarray:
    """(N, T) boolean: True where the patch is not fully visible."""
    return w < 1.0


def one_time_sample(params, seq: transformer.TokenSequence, w: np.ndarray,
                    tcfg: TransformerConfig, vcfg: VQConfig,
                    scfg: SampleConfig, state: nd.PrngState
                    ) -> tuple[np.ndarray, nd.PrngState]:
    """Draw all hidden codes from a single forward pass.

    Returns (indices (N, T, chunks), advanced prng state).  Visible
    positions keep their input codes when scfg.keep_visible is set.
    """
    logits = transformer.logits_from_tokens(params, seq, w, tcfg, vcfg)
    logits = logits.data if isinstance(logits, nd.Array) else logits
    order, probs = _topk_filter(logits, scfg.top_k)
    if scfg.top_k == 1:
        pick = np.zeros(probs.shape[:-1], np.int64)
        # counter still advances so downstream draws differ across top_k
        _, state = nd.uniform(state, probs.shape[:-1])
    else:
        pick, state = nd.categorical(state, probs)
    drawn = np.take_along_axis(order, pick[..., None], axis=-1)[..., 0]
    out = drawn.astype(np.int64)
    if scfg.keep_visible:
        visible = ~_hidden_positions(np.asarray(w))
        if visible.ndim == 1:
            visible = np.broadcast_to(visible, out.shape[:2])
        out = np.where(visible[:, :, None], seq.indices, out)
    return out, state


def top1_sample(params, seq: transformer.TokenSequence, w: np.ndarray,
                tcfg: TransformerConfig, vcfg: VQConfig,
                keep_visible: bool = True) -> np.ndarray:
    """Deterministic mode of the model: argmax at every hidden position."""
    logits = transformer.logits_from_tokens(params, seq, w, tcfg, vcfg)
    logits = logits.data if isinstance(logits, nd.Array) else logits
    out = np.argmax(logits, axis=-1).astype(np.int64)
    if keep_visible:
        visible = ~_hidden_positions(np.asarray(w))
        if visible.ndim == 1:
            visible = np.broadcast_to(visible, out.shape[:2])
        out = np.where(visible[:, :, None], seq.indices, out)
    return out


def autoregressive_sample(params, seq: transformer.TokenSequence,
                          w: np.ndarray, tcfg: TransformerConfig,
                          vcfg: VQConfig, scfg: SampleConfig,
                          state: nd.PrngState
                          ) -> tuple[np.ndarray, nd.PrngState]:
    """Raster-order baseline: one model call per hidden position.

    After a position is drawn its weight is promoted to 1 so later calls
    treat it as trusted context.
    """
    indices = seq.indices.copy()
    n, t, chunks = indices.shape
    w = np.array(np.broadcast_to(np.asarray(w, np.float64), (n, t)))
    hidden = _hidden_positions(w)
    for pos in range(t):
        cols = np.nonzero(hidden[:, pos])[0]
        if cols.size == 0:
            continue
        cur = transformer.TokenSequence(indices, seq.grid_h, seq.grid_w)
        logits = transformer.logits_from_tokens(params, cur, w, tcfg, vcfg)
        logits = logits.data if isinstance(logits, nd.Array) else logits
        row = logits[cols, pos]  # (n_active, chunks, K)
        order, probs = _topk_filter(row, scfg.top_k)
        if scfg.top_k == 1:
            pick = np.zeros(probs.shape[:-1], np.int64)
            _, state = nd.uniform(state, probs.shape[:-1])
        else:
            pick, state = nd.categorical(state, probs)
        drawn = np.take_along_axis(order, pick[..., None], axis=-1)[..., 0]
        indices[cols, pos] = drawn
        w[cols, pos] = 1.0
    return indices, state


@dataclass
class SampleReport:
    """Outcome of a batched sampling run plus its cost accounting."""

    indices: np.ndarray           # (num_samples, N, T, chunks)
    wall_clock: float
    forward_passes: int
    seeds: list[int] = field(default_factory=list)


def sample_batch(params, seq: transformer.TokenSequence, w: np.ndarray,
                 tcfg: TransformerConfig, vcfg: VQConfig, scfg: SampleConfig,
                 mode: str | None = None) -> SampleReport:
    """num_samples independent completions from per-sample substreams."""
    mode = scfg.mode if mode is None else mode
    if mode not in ("one_time", "autoregressive"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    fn = one_time_sample if mode == "one_time" else autoregressive_sample
    base = nd.PrngState(scfg.seed, stream=0x53616D70)
    before = transformer.FORWARD_CALLS
    t0 = time.perf_counter()
    outs = []
    for i in range(scfg.num_samples):
        idx, _ = fn(params, seq, w, tcfg, vcfg, scfg, nd.substream(base, i))
        outs.append(idx)
    wall = time.perf_counter() - t0
    return SampleReport(np.stack(outs), wall,
                        transformer.FORWARD_CALLS - before,
                        seeds=[scfg.seed] * scfg.num_samples)


def decode_indices(codec_params, indices: np.ndarray, vcfg: VQConfig,
                   grid_h: int, grid_w: int) -> np.ndarray:
    """Token indices -> images in [-1, 1] via the frozen decoder."""
    n = indices.shape[0]
    grid = indices.reshape(n, grid_h, grid_w, vcfg.chunks)
    q = codec.dequantize(codec_params["codebook"], grid)
    y = codec.decode(codec_params, q, vcfg)
    return y.data if isinstance(y, nd.Array) else y
