"""Bidirectional token transformer with visibility-weighted attention.

Tokens come from the chunked quantizer: each latent cell carries `chunks`
code indices.  Every position is attended, but keys contribute according
to how much of their image patch is actually visible; the weight of each
position decays toward 1 as depth grows (square root per layer), so deep
layers mix freely while early layers trust observed content.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import codec, nd
from .configs import RunConfig, TransformerConfig, VQConfig
from .data import gen_freeform_mask, minibatches
from .imageops import avgpool2
from .optim import Adam

# Incremented once per predict_logits call; benchmarks reset and read it.
FORWARD_CALLS = 0


# ---------------------------------------------------------------------------
# token sequences


@dataclass(frozen=True)
class TokenSequence:
    """Code indices flattened to (N, T, chunks) with the grid remembered."""

    indices: np.ndarray
    grid_h: int
    grid_w: int

    def __post_init__(self):
        n, t, _ = self.indices.shape
        if t != self.grid_h * self.grid_w:
            raise ValueError("token count does not match grid")

    @classmethod
    def from_grid(cls, grid_indices: np.ndarray) -> "TokenSequence":
        n, h, w, chunks = grid_indices.shape
        return cls(grid_indices.reshape(n, h * w, chunks), h, w)

    def to_grid(self) -> np.ndarray:
        n, t, chunks = self.indices.shape
        return self.indices.reshape(n, self.grid_h, self.grid_w, chunks)


# ---------------------------------------------------------------------------
# visibility weights


def init_weights(pixel_mask: np.ndarray, grid_h: int, grid_w: int,
                 w_floor: float) -> np.ndarray:
    """Per-token visible-pixel ratio of its image patch, floored at w_floor.

    pixel_mask is (H, W) or (N, H, W) with 1 = visible.  H and W must be
    multiples of the token grid.  Ratios are exact for power-of-two patch
    sizes; fully hidden patches get the floor instead of zero so attention
    never sees log(0).
    """
    m = np.asarray(pixel_mask, np.float64)
    single = m.ndim == 2
    if single:
        m = m[None]
    n, h, w = m.shape
    if h % grid_h or w % grid_w:
        raise ValueError("mask resolution must be a multiple of the token grid")
    ph, pw = h // grid_h, w // grid_w
    ratio = m.reshape(n, grid_h, ph, grid_w, pw).mean(axis=(2, 4))
    out = np.maximum(ratio, w_floor).reshape(n, grid_h * grid_w)
    return (out[0] if single else out).astype(np.float64)


def update_weights(w: np.ndarray) -> np.ndarray:
    """Depth transition: w <- sqrt(w), run between attention layers."""
    return np.sqrt(w)


# ---------------------------------------------------------------------------
# parameters


def init_transformer_params(tcfg: TransformerConfig, vcfg: VQConfig,
                            seed: int) -> dict[str, np.ndarray]:
    state = nd.PrngState(seed, stream=0x5472616E)
    c, k, chunks = tcfg.width, vcfg.codebook_size, vcfg.chunks
    t = vcfg.n_tokens
    params: dict[str, np.ndarray] = {}
    idx = 0

    def draw(shape, scale):
        nonlocal idx, state
        arr, state = nd.normal(state, shape)
        idx += 1
        return (arr * scale).astype(np.float32)

    for ch in range(chunks):
        params[f"tf.emb.chunk{ch}"] = draw((k, c // chunks), 0.02)
    params["tf.pos"] = draw((t, c), 0.02)
    for layer in range(tcfg.n_layers):
        p = f"tf.l{layer}"
        params[f"{p}.ln1.g"] = np.ones(c, np.float32)
        params[f"{p}.ln1.b"] = np.zeros(c, np.float32)
        for name in ("wq", "wk", "wv", "wo"):
            params[f"{p}.attn.{name}"] = draw((c, c), 1.0 / math.sqrt(c))
        params[f"{p}.attn.bo"] = np.zeros(c, np.float32)
        params[f"{p}.ln2.g"] = np.ones(c, np.float32)
        params[f"{p}.ln2.b"] = np.zeros(c, np.float32)
        params[f"{p}.mlp.w1"] = draw((c, 4 * c), 1.0 / math.sqrt(c))
        params[f"{p}.mlp.b1"] = np.zeros(4 * c, np.float32)
        params[f"{p}.mlp.w2"] = draw((4 * c, c), 1.0 / math.sqrt(4 * c))
        params[f"{p}.mlp.b2"] = np.zeros(c, np.float32)
    params["tf.lnf.g"] = np.ones(c, np.float32)
    params["tf.lnf.b"] = np.zeros(c, np.float32)
    for ch in range(chunks):
        params[f"tf.head.chunk{ch}"] = draw((c, k), 1.0 / math.sqrt(c))
        params[f"tf.head.bias{ch}"] = np.zeros(k, np.float32)
    return params


# ---------------------------------------------------------------------------
# forward pieces


def embed_tokens(params, seq: TokenSequence, tcfg: TransformerConfig):
    """Concatenate per-chunk code embeddings, then add position embeddings."""
    n, t, chunks = seq.indices.shape
    parts = []
    for ch in range(chunks):
        table = params[f"tf.emb.chunk{ch}"]
        parts.append(nd.embedding_gather(table, seq.indices[:, :, ch]))
    e = parts[0] if chunks == 1 else nd.concat(parts, axis=-1)
    return nd.add(e, params["tf.pos"])


def _split_heads(x, heads: int):
    n, t, c = x.shape
    dh = c // heads
    x = nd.reshape(x, (n, t, heads, dh))
    x = nd.transpose(x, (0, 2, 1, 3))
    return nd.reshape(x, (n * heads, t, dh))


def _merge_heads(x, n: int, heads: int):
    nh, t, dh = x.shape
    x = nd.reshape(x, (n, heads, t, dh))
    x = nd.transpose(x, (0, 2, 1, 3))
    return nd.reshape(x, (n, t, heads * dh))


def weighted_msa(params, prefix: str, x, log_w: np.ndarray, heads: int,
                 att_sink: list | None = None):
    """Multi-head self-attention with log visibility added to every score row.

    log_w is (N, T) float64; it enters the softmax as a per-key bias, so a
    key with weight w contributes proportionally to w times its exp-score.
    att_sink, when given, collects the post-softmax attention tensors.
    """
    n, t, c = x.shape
    dh = c // heads
    q = _split_heads(nd.matmul(x, params[f"{prefix}.wq"]), heads)
    k = _split_heads(nd.matmul(x, params[f"{prefix}.wk"]), heads)
    v = _split_heads(nd.matmul(x, params[f"{prefix}.wv"]), heads)
    scores = nd.scale(nd.matmul(q, nd.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(dh))
    bias = np.repeat(log_w.astype(np.float32)[:, None, :], heads, axis=0)
    att = nd.softmax(nd.add(scores, bias))
    if att_sink is not None:
        att_sink.append(_raw(att).copy())
    mixed = _merge_heads(nd.matmul(att, v), n, heads)
    return nd.add(nd.matmul(mixed, params[f"{prefix}.wo"]), params[f"{prefix}.bo"])


def block_forward(params, layer: int, x, w: np.ndarray, tcfg: TransformerConfig,
                  att_sink: list | None = None):
    """Pre-norm block; returns (tokens, weights for the next layer)."""
    p = f"tf.l{layer}"
    log_w = np.log(w)
    h = nd.layernorm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
    x = nd.add(x, weighted_msa(params, f"{p}.attn", h, log_w, tcfg.heads, att_sink))
    h = nd.layernorm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
    h = nd.matmul(h, params[f"{p}.mlp.w1"])
    h = nd.gelu(nd.add(h, params[f"{p}.mlp.b1"]))
    h = nd.add(nd.matmul(h, params[f"{p}.mlp.w2"]), params[f"{p}.mlp.b2"])
    x = nd.add(x, h)
    return x, update_weights(w)


def logits_from_tokens(params, seq: TokenSequence, w: np.ndarray,
                       tcfg: TransformerConfig, vcfg: VQConfig,
                       att_sink: list | None = None):
    """Token indices + visibility weights -> (N, T, chunks, K) logits."""
    global FORWARD_CALLS
    FORWARD_CALLS += 1
    if w.ndim == 1:
        w = np.broadcast_to(w, (seq.indices.shape[0], w.shape[0]))
    x = embed_tokens(params, seq, tcfg)
    for layer in range(tcfg.n_layers):
        x, w = block_forward(params, layer, x, w, tcfg, att_sink)
    x = nd.layernorm(x, params["tf.lnf.g"], params["tf.lnf.b"])
    outs = []
    n, t, _ = x.shape
    for ch in range(vcfg.chunks):
        h = nd.add(nd.matmul(x, params[f"tf.head.chunk{ch}"]),
                   params[f"tf.head.bias{ch}"])
        outs.append(nd.reshape(h, (n, t, 1, vcfg.codebook_size)))
    return outs[0] if vcfg.chunks == 1 else nd.concat(outs, axis=2)


def _raw(x) -> np.ndarray:
    return x.data if isinstance(x, nd.Array) else x


def predict_logits(params, codec_params, masked_image: np.ndarray,
                   pixel_mask: np.ndarray, tcfg: TransformerConfig,
                   vcfg: VQConfig):
    """Encode a masked image and score every (position, chunk) over the codebook."""
    z = _raw(codec.encode(codec_params, masked_image, vcfg))
    cl = codec.chunk_quantize(z, codec_params["codebook"], vcfg.chunks)
    seq = TokenSequence.from_grid(cl.indices)
    w = init_weights(pixel_mask, vcfg.latent_size, vcfg.latent_size, tcfg.w_floor)
    return logits_from_tokens(params, seq, w, tcfg, vcfg), seq


def nll_loss(logits, targets: np.ndarray, hidden: np.ndarray | None = None,
             loss_positions: str = "all"):
    """Mean negative log-likelihood of target codes.

    targets is (N, T, chunks) int; hidden is an optional (N, T) 0/1 map of
    positions whose patch is not fully visible, used when loss_positions is
    'hidden'.
    """
    logp = nd.log_softmax(logits)
    picked = nd.take_along_last(logp, targets)
    if loss_positions == "hidden":
        if hidden is None:
            raise ValueError("hidden map required for loss_positions='hidden'")
        sel = hidden[:, :, None].astype(np.float32)
        total = nd.sum_(nd.mul(picked, sel))
        count = float(hidden.sum()) * targets.shape[-1]
        if count == 0:
            raise ValueError("no hidden positions in batch")
        return nd.scale(total, -1.0 / count)
    return nd.scale(nd.mean(picked), -1.0)


# ---------------------------------------------------------------------------
# training


def mask_image(images: np.ndarray, pixel_masks: np.ndarray) -> np.ndarray:
    """Zero out hidden pixels; mask broadcasts over channels."""
    return (images * pixel_masks[..., None]).astype(np.float32)


def train_transformer_stage(train_images: np.ndarray, codec_params,
                            run_cfg: RunConfig, steps: int | None = None):
    """Teacher-forced training: masked-image tokens in, clean-image codes out.

    train_images are full-resolution; the codec operates on the half-size
    average pool, exactly as at sampling time.  Codec weights stay frozen.
    """
    tcfg, vcfg, tr = run_cfg.transformer, run_cfg.vq, run_cfg.train
    steps = tr.steps_transformer if steps is None else steps
    params = init_transformer_params(tcfg, vcfg, run_cfg.seed)
    opt = Adam(tr.lr_transformer, 0.9, 0.95)
    h, w_img = train_images.shape[1:3]
    rows = []
    for step, batch_idx in enumerate(
            minibatches(len(train_images), tr.batch_size, steps,
                        run_cfg.seed + 1)):
        imgs = train_images[batch_idx]
        masks = np.stack([
            gen_freeform_mask(h, w_img, (0.2, 0.5),
                              run_cfg.seed * 100003 + step * 131 + i).bitmap
            for i in range(len(imgs))
        ])
        coarse = avgpool2(imgs)
        z_gt = _raw(codec.encode(codec_params, coarse, vcfg))
        gt = codec.chunk_quantize(z_gt, codec_params["codebook"], vcfg.chunks)
        gt_seq = TokenSequence.from_grid(gt.indices)

        tape = nd.Tape()
        leaves = {k: tape.leaf(v, trainable=True) for k, v in params.items()}
        coarse_masked = avgpool2(mask_image(imgs, masks))
        z_m = _raw(codec.encode(codec_params, coarse_masked, vcfg))
        cl = codec.chunk_quantize(z_m, codec_params["codebook"], vcfg.chunks)
        seq = TokenSequence.from_grid(cl.indices)
        wvis = init_weights(masks, vcfg.latent_size, vcfg.latent_size,
                            tcfg.w_floor)
        logits = logits_from_tokens(leaves, seq, wvis, tcfg, vcfg)
        hidden = (wvis < 1.0).astype(np.float32)
        loss = nll_loss(logits, gt_seq.indices, hidden, tcfg.loss_positions)
        grads = nd.backward(loss)
        opt.step(leaves, grads)
        for k, leaf in leaves.items():
            params[k] = leaf.data
        if step % tr.log_every == 0 or step == steps - 1:
            rows.append({"step": step, "nll": float(loss.data[0])})
    return params, rows
