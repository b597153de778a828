"""Chunked shared-codebook image autoencoder with adversarial training.

Each latent cell's n_z channels split into `chunks` groups; every group is
quantized independently against one shared K-entry codebook, so a cell can
express K^chunks composite codes while the token grid keeps h*w positions.

Parameters are plain name->ndarray dicts; a training step wraps them as
trainable tape leaves, so the same forward code serves training and frozen
inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics, nd
from .configs import VQConfig


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def _conv_init(state, kh, kw, ci, co):
    w, state = nd.normal(state, (kh, kw, ci, co))
    w = (w * np.float32(np.sqrt(2.0 / (kh * kw * ci)))).astype(np.float32)
    return w, np.zeros(co, np.float32), state


def _enc_plan(cfg: VQConfig) -> list[tuple[int, int, int]]:
    c = cfg.base_channels
    n_half = int(np.log2(cfg.downsample_factor))
    plan = [(3, c, 1)]
    ch = c
    for _ in range(n_half):
        nxt = min(2 * c, ch * 2)
        plan.append((ch, nxt, 2))
        ch = nxt
    plan.append((ch, ch, 1))
    plan.append((ch, cfg.n_z, 1))
    return plan


def _dec_plan(cfg: VQConfig) -> list[tuple[int, int, bool]]:
    """(ci, co, upsample_before) per layer; mirrors the encoder."""
    c = cfg.base_channels
    n_half = int(np.log2(cfg.downsample_factor))
    widths = [min(2 * c, c * 2**i) for i in range(n_half, -1, -1)]  # wide -> narrow
    plan = [(cfg.n_z, widths[0], False)]
    ch = widths[0]
    for nxt in widths[1:]:
        plan.append((ch, nxt, True))
        ch = nxt
    plan.append((ch, ch, False))
    plan.append((ch, 3, False))
    return plan


def init_codec_params(cfg: VQConfig, seed: int) -> dict[str, np.ndarray]:
    state = nd.PrngState(seed=seed, stream=0x436F6465)
    params: dict[str, np.ndarray] = {}
    for i, (ci, co, _s) in enumerate(_enc_plan(cfg)):
        w, b, state = _conv_init(state, 3, 3, ci, co)
        params[f"enc.c{i}.w"], params[f"enc.c{i}.b"] = w, b
    for i, (ci, co, _u) in enumerate(_dec_plan(cfg)):
        w, b, state = _conv_init(state, 3, 3, ci, co)
        params[f"dec.c{i}.w"], params[f"dec.c{i}.b"] = w, b
    cb, state = nd.normal(state, (cfg.codebook_size, cfg.d_chunk))
    params["codebook"] = (cb * np.float32(0.5)).astype(np.float32)
    return params


def init_disc_params(cfg: VQConfig, seed: int) -> dict[str, np.ndarray]:
    state = nd.PrngState(seed=seed, stream=0x44697363)
    c = cfg.base_channels
    plan = [(3, c, 2), (c, 2 * c, 2), (2 * c, 1, 1)]
    params: dict[str, np.ndarray] = {}
    for i, (ci, co, _s) in enumerate(plan):
        w, b, state = _conv_init(state, 3, 3, ci, co)
        params[f"disc.c{i}.w"], params[f"disc.c{i}.b"] = w, b
    return params


def as_leaves(tape: nd.Tape, params: dict[str, np.ndarray]) -> dict[str, nd.Array]:
    return {k: tape.leaf(v, trainable=True, name=k) for k, v in params.items()}


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def encode(params, x, cfg: VQConfig) -> nd.Array:
    """Image batch (N,H,W,3) -> latent features (N,h,w,n_z)."""
    h = x if isinstance(x, nd.Array) else nd.Array(np.asarray(x, np.float32))
    plan = _enc_plan(cfg)
    for i, (_ci, _co, s) in enumerate(plan):
        h = nd.conv2d(h, params[f"enc.c{i}.w"], params[f"enc.c{i}.b"], stride=s)
        if i < len(plan) - 1:
            h = nd.leaky_relu(h, 0.2)
    return h


def decode(params, zq, cfg: VQConfig) -> nd.Array:
    """Quantized latents (N,h,w,n_z) -> image batch (N,H,W,3) in [-1,1]."""
    h = zq if isinstance(zq, nd.Array) else nd.Array(np.asarray(zq, np.float32))
    plan = _dec_plan(cfg)
    for i, (_ci, _co, up) in enumerate(plan):
        if up:
            h = nd.upsample2x(h)
        h = nd.conv2d(h, params[f"dec.c{i}.w"], params[f"dec.c{i}.b"], stride=1)
        h = nd.tanh(h) if i == len(plan) - 1 else nd.leaky_relu(h, 0.2)
    return h


def disc_forward(params, x) -> nd.Array:
    h = x if isinstance(x, nd.Array) else nd.Array(np.asarray(x, np.float32))
    for i in range(3):
        h = nd.conv2d(h, params[f"disc.c{i}.w"], params[f"disc.c{i}.b"],
                      stride=2 if i < 2 else 1)
        if i < 2:
            h = nd.leaky_relu(h, 0.2)
    return h


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------


@dataclass
class ChunkedLatent:
    indices: np.ndarray          # (N, h, w, chunks) int64 in [0, K)
    quantized: nd.Array          # (N, h, w, n_z), rows gathered from the codebook
    straight_through: nd.Array   # quantized bits forward, encoder gradient backward


def nearest_code_indices(z: np.ndarray, codebook: np.ndarray, chunks: int) -> np.ndarray:
    """Argmin-distance code per chunk; float64 distances, ties to smallest index."""
    k, d = codebook.shape
    zc = np.asarray(z, np.float64).reshape(*z.shape[:-1], chunks, d)
    cb = np.asarray(codebook, np.float64)
    diff = zc[..., None, :] - cb  # (..., chunks, K, d)
    d2 = np.einsum("...kd,...kd->...k", diff, diff)
    return np.argmin(d2, axis=-1).astype(np.int64)


def chunk_quantize(z, codebook, chunks: int) -> ChunkedLatent:
    """Quantize each cell's chunked channel groups against the shared codebook."""
    z_arr = z if isinstance(z, nd.Array) else nd.Array(np.asarray(z, np.float32))
    cb_arr = codebook if isinstance(codebook, nd.Array) else nd.Array(np.asarray(codebook, np.float32))
    n_z = z_arr.shape[-1]
    if n_z % chunks:
        raise ValueError(f"n_z={n_z} not divisible by chunks={chunks}")
    idx = nearest_code_indices(z_arr.data, cb_arr.data, chunks)
    rows = nd.embedding_gather(cb_arr, idx)               # (..., chunks, d)
    quant = nd.reshape(rows, z_arr.shape)
    st = nd.straight_through(z_arr, quant)
    return ChunkedLatent(indices=idx, quantized=quant, straight_through=st)


def dequantize(codebook, indices: np.ndarray) -> nd.Array:
    """Indices (N,h,w,chunks) -> latents (N,h,w,chunks*d) via codebook rows."""
    cb_arr = codebook if isinstance(codebook, nd.Array) else nd.Array(np.asarray(codebook, np.float32))
    rows = nd.embedding_gather(cb_arr, indices)
    n, h, w, c = indices.shape
    return nd.reshape(rows, (n, h, w, c * cb_arr.shape[-1]))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def vq_losses(x, params, disc_params, cfg: VQConfig, adv_weight: float,
              fx: metrics.FeatureExtractor | None = None) -> dict[str, nd.Array]:
    """Generator-side losses; adv_weight scales the adversarial term (0 disables)."""
    fx = fx or metrics.get_extractor()
    z = encode(params, x, cfg)
    cl = chunk_quantize(z, params["codebook"], cfg.chunks)
    xhat = decode(params, cl.straight_through, cfg)

    rec = nd.l1_distance(x, xhat)
    per = metrics.perceptual_l1(fx, x, xhat)
    vq_codebook = nd.squared_distance(nd.stop_gradient(z), cl.quantized)
    vq_commit = nd.squared_distance(z, nd.stop_gradient(cl.quantized))
    vq = nd.add(vq_codebook, nd.scale(vq_commit, cfg.beta))

    total = nd.add(nd.scale(rec, cfg.lambda_rec),
                   nd.add(nd.scale(per, cfg.lambda_per), nd.scale(vq, cfg.lambda_vq)))
    out = {"rec": rec, "per": per, "vq_codebook": vq_codebook,
           "vq_commit": vq_commit, "vq": vq, "xhat": xhat, "latent": cl}
    if adv_weight > 0.0:
        adv_g = nd.neg(nd.mean(disc_forward(disc_params, xhat)))
        total = nd.add(total, nd.scale(adv_g, adv_weight * cfg.lambda_adv))
        out["adv_g"] = adv_g
    out["total"] = total
    return out


def disc_hinge_loss(disc_params, x_real, x_fake) -> nd.Array:
    """L_D = mean relu(1 - D(real)) + mean relu(1 + D(fake))."""
    d_real = disc_forward(disc_params, x_real)
    d_fake = disc_forward(disc_params, x_fake)
    ones = np.float32(1.0)
    return nd.add(nd.mean(nd.relu(nd.sub(ones, d_real))),
                  nd.mean(nd.relu(nd.add(ones, d_fake))))


def reconstruct(params, x, cfg: VQConfig) -> np.ndarray:
    """Frozen round trip image -> codes -> image (no tape)."""
    z = encode(params, x, cfg)
    cl = chunk_quantize(z, params["codebook"], cfg.chunks)
    return decode(params, cl.quantized, cfg).data


# ---------------------------------------------------------------------------
# stage (a) training
# ---------------------------------------------------------------------------


def train_codebook_stage(train_images: np.ndarray, run_cfg, steps: int | None = None,
                         ) -> tuple[dict, dict, list[dict]]:
    """Alternate autoencoder and discriminator updates on coarse images.

    train_images: (n, H, W, 3) at the coarse resolution. The adversarial term
    and discriminator updates switch on after the warm-up fraction of steps.
    Returns (codec params, discriminator params, log rows).
    """
    from .data import minibatches
    from .optim import Adam

    cfg = run_cfg.vq
    tr = run_cfg.train
    steps = tr.steps_codebook if steps is None else steps
    params = init_codec_params(cfg, run_cfg.seed)
    disc_params = init_disc_params(cfg, run_cfg.seed)
    opt_g = Adam(lr=tr.lr_codec, beta1=0.5, beta2=0.9)
    opt_d = Adam(lr=tr.lr_disc, beta1=0.5, beta2=0.9)
    fx = metrics.get_extractor()
    adv_start = int(round(cfg.adv_warmup_frac * steps))
    probe = train_images[: min(8, len(train_images))]
    log: list[dict] = []

    for step, batch_idx in enumerate(
            minibatches(len(train_images), tr.batch_size, steps, run_cfg.seed)):
        x = train_images[batch_idx]
        adv_on = step >= adv_start

        tape = nd.Tape()
        leaves = as_leaves(tape, params)
        losses = vq_losses(x, leaves, disc_params, cfg,
                           adv_weight=1.0 if adv_on else 0.0, fx=fx)
        grads = nd.backward(losses["total"])
        opt_g.step(leaves, grads)

        d_loss = float("nan")
        if adv_on:
            xhat = losses["xhat"].data  # detached: generator buffers only
            tape_d = nd.Tape()
            d_leaves = as_leaves(tape_d, disc_params)
            dl = disc_hinge_loss(d_leaves, x, xhat)
            opt_d.step(d_leaves, nd.backward(dl))
            d_loss = float(dl.data[0])

        if step % tr.log_every == 0 or step == steps - 1:
            rec_img = reconstruct(params, probe, cfg)
            log.append({
                "step": step,
                "rec": float(losses["rec"].data[0]),
                "per": float(losses["per"].data[0]),
                "vq": float(losses["vq"].data[0]),
                "disc": d_loss,
                "probe_psnr": metrics.psnr(probe, rec_img),
            })
    return params, disc_params, log
