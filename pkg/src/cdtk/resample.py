"""Separable image resampling as explicit 1-D weight matrices.

Each resize along one axis is a dense (out_size, in_size) matrix; a 2-D
resize applies the row matrix then the column matrix. Bilinear/bicubic
use half-pixel source centers (src = (i + 0.5) * in/out - 0.5) with
edge-clamped taps; nearest uses the top-left rule src = floor(i * in/out)
so integer-factor downsampling picks the first sample of each block.
Bicubic is the Keys kernel with a = -0.5.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

KINDS = ("nearest", "bilinear", "bicubic")


def cubic_weight(t: float, a: float = -0.5) -> float:
    """Keys cubic convolution kernel."""
    t = abs(t)
    if t <= 1.0:
        return (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    if t < 2.0:
        return a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a
    return 0.0


@lru_cache(maxsize=256)
def resample_matrix(in_size: int, out_size: int, kind: str) -> np.ndarray:
    """Dense (out_size, in_size) interpolation operator for one axis."""
    if in_size < 1 or out_size < 1:
        raise ValueError(f"resample_matrix: extents must be positive, got {in_size}->{out_size}")
    if kind not in KINDS:
        raise ValueError(f"resample_matrix: unknown kind {kind!r}")
    w = np.zeros((out_size, in_size))
    scale = in_size / out_size
    if kind == "nearest":
        src = np.minimum((np.arange(out_size) * scale).astype(np.int64), in_size - 1)
        w[np.arange(out_size), src] = 1.0
        return w
    for i in range(out_size):
        src = (i + 0.5) * scale - 0.5
        base = int(np.floor(src))
        frac = src - base
        if kind == "bilinear":
            taps = ((base, 1.0 - frac), (base + 1, frac))
        else:
            taps = tuple((base + k, cubic_weight(frac - k)) for k in (-1, 0, 1, 2))
        for j, wt in taps:
            w[i, min(max(j, 0), in_size - 1)] += wt
    return w


def resize2d(img: np.ndarray, out_h: int, out_w: int, kind: str) -> np.ndarray:
    """Resize an (h, w) or (h, w, c) array; returns float64."""
    img = np.asarray(img, dtype=np.float64)
    wh = resample_matrix(img.shape[0], out_h, kind)
    ww = resample_matrix(img.shape[1], out_w, kind)
    if img.ndim == 2:
        return wh @ img @ ww.T
    if img.ndim == 3:
        t = np.einsum("oi,ijc->ojc", wh, img, optimize=True)
        return np.einsum("pj,ojc->opc", ww, t, optimize=True)
    raise ValueError(f"resize2d: expected 2-D or 3-D image, got shape {img.shape}")
