"""End-to-end orchestration: staged training, completion, evaluation.

Checkpoints are one file per stage so a later stage can be retrained
without repeating earlier ones.  Everything is seeded from the run config;
two runs of the same config produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import codec, nd, refiner, sampler, transformer
from .checkpoint import load_checkpoint, save_checkpoint
from .configs import RunConfig, SampleConfig
from .data import gen_freeform_mask, gen_synthetic_dataset, resolve_bucket
from .imageops import avgpool2, resize_bilinear
from .metrics import diversity_score, get_extractor, psnr

STAGES = ("codebook", "transformer", "refiner")


def build_id(arrays: dict[str, np.ndarray]) -> str:
    """Deterministic fingerprint of a parameter set."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return h.hexdigest()[:12]


def _ckpt_path(ckpt_dir: str, stage: str) -> str:
    return os.path.join(ckpt_dir, f"{stage}.ckpt")


def _save_stage(ckpt_dir: str, stage: str, run_cfg: RunConfig,
                arrays: dict[str, np.ndarray]) -> str:
    os.makedirs(ckpt_dir, exist_ok=True)
    # manifest is self-describing so a service can list models without the config
    meta = {"stage": stage, "config_hash": run_cfg.config_hash(),
            "build_id": build_id(arrays),
            "dataset": run_cfg.data.source,
            "codebook_size": run_cfg.vq.codebook_size,
            "chunks": run_cfg.vq.chunks,
            "coarse_res": run_cfg.vq.image_size,
            "full_res": run_cfg.data.image_size}
    path = _ckpt_path(ckpt_dir, stage)
    save_checkpoint(path, meta, arrays)
    return path


def stage_meta(ckpt_dir: str, stage: str) -> dict:
    """Manifest of one stage checkpoint, without loading its arrays."""
    meta, _ = load_checkpoint(_ckpt_path(ckpt_dir, stage))
    return meta


def bundle_build_id(ckpt_dir: str) -> str:
    """Fingerprint of the full three-stage bundle, per-stage ids combined."""
    h = hashlib.sha256()
    for stage in STAGES:
        h.update(stage_meta(ckpt_dir, stage)["build_id"].encode())
    return h.hexdigest()[:12]


def _load_stage(ckpt_dir: str, stage: str, run_cfg: RunConfig):
    path = _ckpt_path(ckpt_dir, stage)
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"stage '{stage}' checkpoint missing at {path}; train it first")
    meta, arrays = load_checkpoint(path)
    if meta.get("config_hash") != run_cfg.config_hash():
        raise ValueError(f"checkpoint {path} was trained under a different config")
    return arrays


@dataclass
class Bundle:
    """All trained parameters needed for inference."""

    codec_params: dict
    tf_params: dict
    ref_params: dict


def load_bundle(ckpt_dir: str, run_cfg: RunConfig) -> Bundle:
    cp = _load_stage(ckpt_dir, "codebook", run_cfg)
    cp = {k.removeprefix("codec."): v for k, v in cp.items()
          if not k.startswith("disc.")}
    return Bundle(cp,
                  _load_stage(ckpt_dir, "transformer", run_cfg),
                  _load_stage(ckpt_dir, "refiner", run_cfg))


def train(run_cfg: RunConfig, ckpt_dir: str, stage: str = "all"):
    """Run one stage or all three in order; returns {stage: log rows}."""
    if stage not in STAGES + ("all",):
        raise ValueError(f"unknown stage {stage!r}")
    wanted = STAGES if stage == "all" else (stage,)
    ds = gen_synthetic_dataset(run_cfg.data)
    train_images = np.stack(ds.train)
    logs: dict[str, list] = {}

    if "codebook" in wanted:
        params, disc, rows = codec.train_codebook_stage(
            avgpool2(train_images), run_cfg)
        arrays = {f"codec.{k}": v for k, v in params.items()}
        arrays.update({k: v for k, v in disc.items()})
        _save_stage(ckpt_dir, "codebook", run_cfg, arrays)
        logs["codebook"] = rows

    if "transformer" in wanted:
        cp = _load_stage(ckpt_dir, "codebook", run_cfg)
        cp = {k.removeprefix("codec."): v for k, v in cp.items()
              if not k.startswith("disc.")}
        tf_params, rows = transformer.train_transformer_stage(
            train_images, cp, run_cfg)
        _save_stage(ckpt_dir, "transformer", run_cfg, tf_params)
        logs["transformer"] = rows

    if "refiner" in wanted:
        bundle_cp = _load_stage(ckpt_dir, "codebook", run_cfg)
        bundle_cp = {k.removeprefix("codec."): v for k, v in bundle_cp.items()
                     if not k.startswith("disc.")}
        tfp = _load_stage(ckpt_dir, "transformer", run_cfg)
        ref_params, rows = refiner.train_refiner_stage(
            train_images, bundle_cp, tfp, run_cfg)
        _save_stage(ckpt_dir, "refiner", run_cfg, ref_params)
        logs["refiner"] = rows
    return logs


# ---------------------------------------------------------------------------
# completion


@dataclass
class Completion:
    """One masked image, several candidate fills at full resolution."""

    coarse: np.ndarray            # (num_samples, H, W, 3)
    refined: np.ndarray           # (num_samples, H, W, 3)
    indices: np.ndarray           # (num_samples, T, chunks)
    forward_passes: int
    wall_clock: float


def _token_inputs(bundle: Bundle, run_cfg: RunConfig, image: np.ndarray,
                  pixel_mask: np.ndarray):
    vcfg, tcfg = run_cfg.vq, run_cfg.transformer
    masked = transformer.mask_image(image[None], pixel_mask[None])[0]
    coarse_masked = avgpool2(masked[None])
    z = codec.encode(bundle.codec_params, coarse_masked, vcfg)
    raw = z.data if isinstance(z, nd.Array) else z
    cl = codec.chunk_quantize(raw, bundle.codec_params["codebook"], vcfg.chunks)
    seq = transformer.TokenSequence.from_grid(cl.indices)
    w = transformer.init_weights(pixel_mask[None], vcfg.latent_size,
                                 vcfg.latent_size, tcfg.w_floor)
    return masked, seq, w


def complete(bundle: Bundle, run_cfg: RunConfig, image: np.ndarray,
             pixel_mask: np.ndarray, scfg: SampleConfig,
             top1: bool = False) -> Completion:
    """Fill the hidden region of one image; never alters visible pixels.

    The model only ever sees the masked image.  top1=True returns the
    deterministic argmax completion as a single sample.
    """
    vcfg, tcfg, rcfg = run_cfg.vq, run_cfg.transformer, run_cfg.refine
    image = np.asarray(image, np.float32)
    masked, seq, w = _token_inputs(bundle, run_cfg, image, pixel_mask)
    if top1:
        before = transformer.FORWARD_CALLS
        import time as _t
        t0 = _t.perf_counter()
        idx = sampler.top1_sample(bundle.tf_params, seq, w, tcfg, vcfg,
                                  scfg.keep_visible)
        wall = _t.perf_counter() - t0
        fwd = transformer.FORWARD_CALLS - before
    else:
        rep = sampler.sample_batch(bundle.tf_params, seq, w, tcfg, vcfg, scfg)
        idx, wall, fwd = rep.indices[:, 0], rep.wall_clock, rep.forward_passes

    h, w_img = image.shape[:2]
    coarse_list, refined_list = [], []
    for s in range(idx.shape[0]):
        dec = sampler.decode_indices(bundle.codec_params, idx[s][None], vcfg,
                                     vcfg.latent_size, vcfg.latent_size)
        up = resize_bilinear(dec, h, w_img)[0]
        cand = refiner.compose(masked, pixel_mask, up)
        coarse_list.append(cand)
        refined_list.append(refiner.refine(bundle.ref_params, cand[None],
                                           masked[None], pixel_mask[None],
                                           rcfg)[0])
    return Completion(np.stack(coarse_list), np.stack(refined_list),
                      idx.reshape(idx.shape[0], -1, vcfg.chunks), fwd, wall)


def mean_fill_baseline(image: np.ndarray, pixel_mask: np.ndarray) -> np.ndarray:
    """Hidden pixels get the mean color of the visible pixels."""
    m = pixel_mask == 1
    mean = image[m].reshape(-1, image.shape[-1]).mean(axis=0)
    fill = np.broadcast_to(mean.astype(np.float32), image.shape)
    return refiner.compose(image, pixel_mask, fill)


# ---------------------------------------------------------------------------
# evaluation


def masked_psnr(clean: np.ndarray, completed: np.ndarray,
                pixel_mask: np.ndarray) -> float:
    """PSNR over hidden pixels only."""
    return psnr(clean, completed, pixel_mask=1.0 - pixel_mask)


def evaluate(bundle: Bundle, run_cfg: RunConfig, buckets: list[str],
             scfg: SampleConfig) -> dict:
    """Per-bucket masked PSNR for {coarse, refined} x {top1, random} plus
    sample diversity and the mean-color baseline."""
    ds = gen_synthetic_dataset(run_cfg.data)
    if len(ds.test) == 0:
        raise ValueError("test set is empty; set data.test_count > 0")
    test = np.stack(ds.test)
    fx = get_extractor()
    h, w_img = test.shape[1:3]
    report: dict = {"config_hash": run_cfg.config_hash(),
                    "buckets": {}, "num_images": len(test)}
    for bucket in buckets:
        resolve_bucket(bucket)  # validate early
        cells: dict[str, list[float]] = {
            "top1_coarse": [], "top1_refined": [],
            "random_coarse": [], "random_refined": [],
            "baseline": [], "diversity": []}
        for i, img in enumerate(test):
            mask = gen_freeform_mask(
                h, w_img, bucket, run_cfg.seed * 9176 + i * 37 + 11).bitmap
            top = complete(bundle, run_cfg, img, mask, scfg, top1=True)
            rnd = complete(bundle, run_cfg, img, mask, scfg)
            cells["top1_coarse"].append(masked_psnr(img, top.coarse[0], mask))
            cells["top1_refined"].append(masked_psnr(img, top.refined[0], mask))
            cells["random_coarse"].append(masked_psnr(img, rnd.coarse[0], mask))
            cells["random_refined"].append(masked_psnr(img, rnd.refined[0], mask))
            cells["baseline"].append(
                masked_psnr(img, mean_fill_baseline(img, mask), mask))
            cells["diversity"].append(diversity_score(rnd.refined, fx))
        report["buckets"][bucket] = {
            key: {"median": float(np.median(v)), "mean": float(np.mean(v))}
            for key, v in cells.items()}
    return report
