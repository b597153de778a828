"""Image quality metrics and the shared frozen feature extractor.

All image arguments are float32 in [-1, 1] (peak-to-peak 2.0), HWC or NHWC.
The feature extractor is a fixed-seed random conv stack used three ways: the
perceptual training loss, the Frechet set distance, and the pairwise
diversity score. Keeping one set of frozen parameters per seed makes those
numbers comparable across a run.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import nd

PEAK = 2.0
PSNR_CAP = 99.0


def psnr(a: np.ndarray, b: np.ndarray, pixel_mask: np.ndarray | None = None) -> float:
    """10*log10(peak^2 / MSE) in dB, optionally restricted to pixel_mask == 1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    err = (a - b) ** 2
    if pixel_mask is not None:
        m = np.asarray(pixel_mask, dtype=np.float64)
        while m.ndim < err.ndim:
            m = m[..., None] if m.ndim == err.ndim - 1 else m[None]
        m = np.broadcast_to(m, err.shape)
        total = m.sum()
        if total == 0:
            raise ValueError("pixel_mask selects no pixels")
        mse = float((err * m).sum() / total)
    else:
        mse = float(err.mean())
    if mse <= 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(PEAK * PEAK / mse), PSNR_CAP))


def ssim(a: np.ndarray, b: np.ndarray, window: int = 8) -> float:
    """Mean local SSIM on the channel-mean grayscale, 8x8 sliding windows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    ga = a.mean(axis=-1) if a.ndim == 3 else a
    gb = b.mean(axis=-1) if b.ndim == 3 else b
    if min(ga.shape) < window:
        raise ValueError(f"image smaller than {window}x{window} window")
    c1 = (0.01 * PEAK) ** 2
    c2 = (0.03 * PEAK) ** 2
    wa = sliding_window_view(ga, (window, window))
    wb = sliding_window_view(gb, (window, window))
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    var_a = (wa * wa).mean(axis=(-1, -2)) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=(-1, -2)) - mu_b * mu_b
    cov = (wa * wb).mean(axis=(-1, -2)) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
    return float(s.mean())


class FeatureExtractor:
    """Frozen 4-layer strided conv stack with fixed-seed random weights."""

    def __init__(self, seed: int = 7, in_channels: int = 3,
                 widths: tuple[int, ...] = (16, 32, 64, 64)):
        self.seed = seed
        widths = [in_channels, *widths]
        strides = [2, 2, 2, 1]
        state = nd.PrngState(seed=seed, stream=0x46656174)
        self.layers = []
        for i in range(4):
            ci, co = widths[i], widths[i + 1]
            w, state = nd.normal(state, (3, 3, ci, co))
            w = (w * np.float32(np.sqrt(2.0 / (9 * ci)))).astype(np.float32)
            b = np.zeros(co, np.float32)
            self.layers.append((w, b, strides[i]))

    def features(self, x):
        """All four post-activation maps; Arrays stay on their tape."""
        h = x if isinstance(x, nd.Array) else nd.Array(np.asarray(x, np.float32))
        out = []
        for w, b, s in self.layers:
            h = nd.leaky_relu(nd.conv2d(h, w, b, stride=s), 0.2)
            out.append(h)
        return out

    def pooled(self, x) -> np.ndarray:
        """Spatially averaged final features, one row per image."""
        x = np.asarray(x if not isinstance(x, nd.Array) else x.data, np.float32)
        if x.ndim == 3:
            x = x[None]
        f = self.features(nd.Array(x))[-1].data
        return f.mean(axis=(1, 2))


_EXTRACTORS: dict[tuple[int, int], FeatureExtractor] = {}


def get_extractor(seed: int = 7, in_channels: int = 3) -> FeatureExtractor:
    key = (seed, in_channels)
    if key not in _EXTRACTORS:
        _EXTRACTORS[key] = FeatureExtractor(seed, in_channels)
    return _EXTRACTORS[key]


def perceptual_l1(fx: FeatureExtractor, x, y) -> nd.Array:
    """Mean |features(x) - features(y)| over layers 2-4; differentiable."""
    fa = fx.features(x)
    fb = fx.features(y)
    terms = [nd.l1_distance(a, b) for a, b in zip(fa[1:], fb[1:])]
    acc = terms[0]
    for t in terms[1:]:
        acc = nd.add(acc, t)
    return nd.scale(acc, 1.0 / len(terms))


def frechet_feature_distance(set_a: np.ndarray, set_b: np.ndarray,
                             fx: FeatureExtractor | None = None) -> float:
    """||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 sqrt(Sa^0.5 Sb Sa^0.5)) on pooled features."""
    if len(set_a) < 8 or len(set_b) < 8:
        raise ValueError("each set needs >= 8 images")
    fx = fx or get_extractor()
    fa = fx.pooled(np.asarray(set_a)).astype(np.float64)
    fb = fx.pooled(np.asarray(set_b)).astype(np.float64)
    mu_a, mu_b = fa.mean(axis=0), fb.mean(axis=0)
    jit = 1e-6 * np.eye(fa.shape[1])
    sa = np.cov(fa, rowvar=False) + jit
    sb = np.cov(fb, rowvar=False) + jit

    def psd_sqrt(m):
        vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
        return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T

    ra = psd_sqrt(sa)
    cross = psd_sqrt(ra @ sb @ ra)
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(sa) + np.trace(sb) - 2.0 * np.trace(cross))


def diversity_score(images, fx: FeatureExtractor | None = None) -> float:
    """Mean over unordered pairs of mean |pooled(a) - pooled(b)|."""
    if len(images) < 2:
        raise ValueError("diversity needs >= 2 images")
    fx = fx or get_extractor()
    feats = fx.pooled(np.stack([np.asarray(im, np.float32) for im in images]))
    n = len(feats)
    total = 0.0
    pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            total += float(np.abs(feats[i] - feats[j]).mean())
            pairs += 1
    return total / pairs
