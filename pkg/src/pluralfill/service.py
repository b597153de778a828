"""HTTP inference service: upload an image and mask, get diverse fills back.

JSON over HTTP; images travel as base64 8-bit RGB PNG.  The mask arrives
either as a base64 PNG (nonzero = visible) or as a brush-stroke list that the
server rasterizes.  All generation is seeded, model state is read-only, and
every response is checked server-side for visible-pixel fidelity before it
leaves the process.
"""

from __future__ import annotations

import base64
import io
import time
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from PIL import Image
from pydantic import BaseModel, Field, model_validator

from . import pipeline
from .configs import RunConfig, SampleConfig
from .data import rasterize_strokes
from .imageops import resize_bilinear

MAX_SIDE = 512
MAX_SAMPLES = 16


class Stroke(BaseModel):
    points: list[tuple[float, float]] = Field(min_length=1)  # (x, y) pixels
    radius: float = Field(gt=0)


class CompleteRequest(BaseModel):
    image: str                                   # base64 PNG
    mask: Optional[str] = None                   # base64 PNG, nonzero = visible
    strokes: Optional[list[Stroke]] = None       # stroked region is hidden
    num_samples: int = Field(default=4, ge=1, le=MAX_SAMPLES)
    top_k: int = Field(default=20, ge=1)
    seed: Optional[int] = None
    refine: bool = True

    @model_validator(mode="after")
    def _one_mask_source(self):
        if (self.mask is None) == (self.strokes is None):
            raise ValueError("provide exactly one of 'mask' or 'strokes'")
        return self


class SampleOut(BaseModel):
    image: str
    sample_seed: int
    sample_index: int


class CompleteResponse(BaseModel):
    samples: list[SampleOut]
    timing_ms: float
    model_id: str


# ---------------------------------------------------------------------------
# codecs


def _png_to_u8(b64: str, what: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception:
        raise HTTPException(400, f"malformed {what}: not a decodable base64 PNG")
    return np.asarray(img.convert("RGB"), np.uint8)


def _u8_to_png(u8: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(u8, "RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_mask(b64: str, shape: tuple[int, int]) -> np.ndarray:
    u8 = _png_to_u8(b64, "mask")
    if u8.shape[:2] != shape:
        raise HTTPException(
            422, f"mask dims {u8.shape[1]}x{u8.shape[0]} do not match "
                 f"image dims {shape[1]}x{shape[0]}")
    return (u8.max(axis=-1) > 127).astype(np.float32)


def _resize_mask_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = mask.shape
    ys = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(int), h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(int), w - 1)
    return mask[ys[:, None], xs[None, :]]


# ---------------------------------------------------------------------------
# app


class _State:
    def __init__(self, run_cfg: RunConfig):
        self.run_cfg = run_cfg
        self.bundle = None
        self.model_id = ""
        self.manifest: dict = {}
        self.started = time.monotonic()


def create_app(run_cfg: RunConfig, ckpt_dir: str | None) -> FastAPI:
    """Build the service; ckpt_dir=None starts it with no model loaded."""
    app = FastAPI(title="pluralfill", version="0.1.0")
    state = _State(run_cfg)
    if ckpt_dir is not None:
        state.bundle = pipeline.load_bundle(ckpt_dir, run_cfg)
        state.model_id = pipeline.bundle_build_id(ckpt_dir)
        state.manifest = pipeline.stage_meta(ckpt_dir, "codebook")
    app.state.fill = state

    @app.get("/v1/health")
    def health():
        status = "ready" if state.bundle is not None else "loading"
        return {"status": status,
                "uptime_s": time.monotonic() - state.started}

    @app.get("/v1/models")
    def models():
        if state.bundle is None:
            return []
        m = state.manifest
        return [{
            "model_id": state.model_id,
            "dataset": m["dataset"],
            "K": m["codebook_size"],
            "chunks": m["chunks"],
            "resolutions": {"coarse": m["coarse_res"], "full": m["full_res"]},
        }]

    @app.post("/v1/complete", response_model=CompleteResponse)
    def complete(req: CompleteRequest):
        if state.bundle is None:
            raise HTTPException(503, "model not loaded")
        t0 = time.perf_counter()
        cfg = state.run_cfg

        u8_in = _png_to_u8(req.image, "image")
        h0, w0 = u8_in.shape[:2]
        if max(h0, w0) > MAX_SIDE:
            raise HTTPException(
                413, f"image side {max(h0, w0)} exceeds the {MAX_SIDE} px limit")
        if req.top_k > cfg.vq.codebook_size:
            raise HTTPException(
                422, f"top_k {req.top_k} exceeds codebook size "
                     f"{cfg.vq.codebook_size}")

        if req.mask is not None:
            mask0 = _decode_mask(req.mask, (h0, w0))
        else:
            try:
                mask0 = rasterize_strokes(
                    h0, w0, [s.model_dump() for s in req.strokes]).bitmap
            except ValueError as e:
                raise HTTPException(400, f"malformed strokes: {e}")

        seed = req.seed if req.seed is not None else \
            int.from_bytes(np.random.bytes(4), "little")
        scfg = SampleConfig(mode="one_time", top_k=req.top_k,
                            num_samples=req.num_samples, seed=seed,
                            keep_visible=True)

        # model-resolution pass, then compose at the original resolution
        full = cfg.data.image_size
        img = u8_in.astype(np.float32) / 127.5 - 1.0
        img_s = resize_bilinear(img[None], full, full)[0]
        mask_s = _resize_mask_nearest(mask0, full, full)
        comp = pipeline.complete(state.bundle, cfg, img_s, mask_s, scfg)
        fills = comp.refined if req.refine else comp.coarse

        vis = mask0[..., None] == 1.0
        samples = []
        for i in range(fills.shape[0]):
            up = resize_bilinear(fills[i][None], h0, w0)[0]
            cand = np.clip(np.round((up + 1.0) * 127.5), 0, 255).astype(np.uint8)
            out = np.where(vis, u8_in, cand)
            # contract check: returned samples never alter visible pixels
            assert np.array_equal(out[mask0 == 1.0], u8_in[mask0 == 1.0])
            samples.append(SampleOut(image=_u8_to_png(out), sample_seed=seed,
                                     sample_index=i))
        return CompleteResponse(
            samples=samples,
            timing_ms=(time.perf_counter() - t0) * 1e3,
            model_id=state.model_id)

    return app
