"""Full-resolution refinement of upsampled coarse completions.

The coarse stage works at half resolution, so its output is blurry and can
seam against the visible pixels.  This network sees the composed upsampled
candidate plus the mask, borrows features for hidden cells from the most
similar visible cells (cosine match at the bottleneck), and re-renders the
image.  Visible pixels are always restored by exact selection afterwards.
"""

from __future__ import annotations

import numpy as np

from . import codec, nd, sampler, transformer
from .configs import RefineConfig, RunConfig
from .data import gen_freeform_mask, minibatches
from .imageops import avgpool2, resize_bilinear
from .metrics import get_extractor, perceptual_l1
from .optim import Adam


def compose(visible_img: np.ndarray, pixel_mask: np.ndarray,
            fill: np.ndarray) -> np.ndarray:
    """Exact selection: visible pixels from visible_img, rest from fill."""
    m = np.asarray(pixel_mask)[..., None] == 1
    return np.where(m, visible_img, fill).astype(np.float32)


# ---------------------------------------------------------------------------
# parameters


def init_refiner_params(rcfg: RefineConfig, seed: int) -> dict[str, np.ndarray]:
    state = nd.PrngState(seed, stream=0x52656669)
    ch = rcfg.channels
    plan = [
        ("c0", 3, 3, 4, ch),      # stride 1
        ("c1", 3, 3, ch, ch),     # stride 2
        ("c2", 3, 3, ch, ch),     # stride 2 -> bottleneck
        ("c3", 3, 3, ch, ch),     # post-copy mix
        ("c4", 3, 3, ch, ch),     # after first upsample
        ("c5", 3, 3, ch, ch),     # after second upsample
        ("c6", 3, 3, ch, 3),      # to image
    ]
    params: dict[str, np.ndarray] = {}
    for name, kh, kw, ci, co in plan:
        w, b, state = codec._conv_init(state, kh, kw, ci, co)
        params[f"ref.{name}.w"] = w
        params[f"ref.{name}.b"] = b
    return params


# ---------------------------------------------------------------------------
# contextual copy


def _cell_visibility(pixel_mask: np.ndarray, gh: int, gw: int) -> np.ndarray:
    m = np.asarray(pixel_mask, np.float64)
    n, h, w = m.shape
    return m.reshape(n, gh, h // gh, gw, w // gw).mean(axis=(2, 4))


def _patch_descriptors(f: np.ndarray, patch: int) -> np.ndarray:
    """Mean feature over a patch x patch neighborhood, reflect padded."""
    pad = patch // 2
    fp = np.pad(f, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
    win = np.lib.stride_tricks.sliding_window_view(fp, (patch, patch), (0, 1))
    return win.mean(axis=(-2, -1)).reshape(f.shape[0] * f.shape[1], -1)


def match_visible_cells(features: np.ndarray, cell_vis: np.ndarray,
                        patch: int) -> np.ndarray:
    """For every cell, index of the best cosine-matching visible cell.

    features is a single image's (h, w, c) bottleneck map; cell_vis (h, w)
    in [0, 1].  Candidates are cells with visibility >= 0.5, falling back
    to the most-visible cell when the mask covers everything.  Visible
    cells match themselves.
    """
    h, w, _ = features.shape
    desc = _patch_descriptors(features, patch)
    norm = desc / np.maximum(np.linalg.norm(desc, axis=1, keepdims=True), 1e-8)
    vis = cell_vis.reshape(-1)
    cand = np.nonzero(vis >= 0.5)[0]
    if cand.size == 0:
        cand = np.array([int(np.argmax(vis))])
    sims = norm @ norm[cand].T
    best = cand[np.argmax(sims, axis=1)]
    own = np.arange(h * w)
    return np.where(vis >= 0.5, own, best)


def contextual_copy(f, pixel_mask: np.ndarray, patch: int):
    """Replace hidden-cell features with their matched visible-cell features.

    Matching runs on raw values (no gradient); the gather itself is
    differentiable so training shapes what gets copied.
    """
    raw = f.data if isinstance(f, nd.Array) else f
    n, h, w, c = raw.shape
    cell_vis = _cell_visibility(pixel_mask, h, w)
    outs = []
    for i in range(n):
        src = nd.reshape(nd.slice_axis(f, i, i + 1, axis=0), (h * w, c))
        idx = match_visible_cells(raw[i], cell_vis[i], patch)
        outs.append(nd.reshape(nd.embedding_gather(src, idx), (1, h, w, c)))
    return outs[0] if n == 1 else nd.concat(outs, axis=0)


# ---------------------------------------------------------------------------
# forward


def refine_forward(params, candidate: np.ndarray, pixel_mask: np.ndarray,
                   rcfg: RefineConfig):
    """candidate (N,H,W,3) composed upsampled completion -> refined image."""
    x_in = np.concatenate(
        [np.asarray(candidate, np.float32),
         np.asarray(pixel_mask, np.float32)[..., None]], axis=-1)

    def c(name, x, stride=1):
        return nd.conv2d(x, params[f"ref.{name}.w"], params[f"ref.{name}.b"],
                         stride=stride)

    h = nd.leaky_relu(c("c0", x_in), 0.2)
    h = nd.leaky_relu(c("c1", h, 2), 0.2)
    h = nd.leaky_relu(c("c2", h, 2), 0.2)
    h = contextual_copy(h, pixel_mask, rcfg.patch_size)
    h = nd.leaky_relu(c("c3", h), 0.2)
    h = nd.leaky_relu(c("c4", nd.upsample2x(h)), 0.2)
    h = nd.leaky_relu(c("c5", nd.upsample2x(h)), 0.2)
    return nd.tanh(c("c6", h))


def refine(params, candidate: np.ndarray, visible_img: np.ndarray,
           pixel_mask: np.ndarray, rcfg: RefineConfig) -> np.ndarray:
    """Inference wrapper: refine then restore visible pixels exactly."""
    y = refine_forward(params, candidate, pixel_mask, rcfg)
    raw = y.data if isinstance(y, nd.Array) else y
    return compose(visible_img, pixel_mask, raw)


# ---------------------------------------------------------------------------
# training


def candidate_from_tokens(codec_params, tf_params, images: np.ndarray,
                          masks: np.ndarray, run_cfg: RunConfig) -> np.ndarray:
    """Build the refiner's input the same way inference does: mask, encode,
    take the model's top-1 codes, decode, upsample, compose."""
    vcfg, tcfg = run_cfg.vq, run_cfg.transformer
    coarse_masked = avgpool2(transformer.mask_image(images, masks))
    z = codec.encode(codec_params, coarse_masked, vcfg)
    raw = z.data if isinstance(z, nd.Array) else z
    cl = codec.chunk_quantize(raw, codec_params["codebook"], vcfg.chunks)
    seq = transformer.TokenSequence.from_grid(cl.indices)
    w = transformer.init_weights(masks, vcfg.latent_size, vcfg.latent_size,
                                 tcfg.w_floor)
    idx = sampler.top1_sample(tf_params, seq, w, tcfg, vcfg)
    coarse = sampler.decode_indices(codec_params, idx, vcfg,
                                    vcfg.latent_size, vcfg.latent_size)
    up = resize_bilinear(coarse, images.shape[1], images.shape[2])
    return compose(images, masks, up)


def train_refiner_stage(train_images: np.ndarray, codec_params, tf_params,
                        run_cfg: RunConfig, steps: int | None = None):
    """L1 + perceptual regression toward the clean image; codec and token
    model stay frozen and only supply candidates."""
    rcfg, tr, vcfg = run_cfg.refine, run_cfg.train, run_cfg.vq
    steps = tr.steps_refiner if steps is None else steps
    params = init_refiner_params(rcfg, run_cfg.seed)
    opt = Adam(tr.lr_refiner)
    fx = get_extractor()
    h, w_img = train_images.shape[1:3]
    rows = []
    for step, batch_idx in enumerate(
            minibatches(len(train_images), tr.batch_size, steps,
                        run_cfg.seed + 2)):
        imgs = train_images[batch_idx]
        masks = np.stack([
            gen_freeform_mask(h, w_img, (0.2, 0.5),
                              run_cfg.seed * 70001 + step * 173 + i).bitmap
            for i in range(len(imgs))
        ])
        cand = candidate_from_tokens(codec_params, tf_params, imgs, masks,
                                     run_cfg)
        tape = nd.Tape()
        leaves = {k: tape.leaf(v, trainable=True) for k, v in params.items()}
        y = refine_forward(leaves, cand, masks, rcfg)
        rec = nd.l1_distance(y, imgs)
        per = perceptual_l1(fx, y, imgs)
        loss = nd.add(rec, nd.scale(per, vcfg.lambda_per))
        grads = nd.backward(loss)
        opt.step(leaves, grads)
        for k, leaf in leaves.items():
            params[k] = leaf.data
        if step % tr.log_every == 0 or step == steps - 1:
            rows.append({"step": step, "rec": float(rec.data[0]),
                         "per": float(per.data[0])})
    return params, rows
