"""Degradation synthesis: Gaussian blur, downsampling, additive noise.

A low-quality image is produced from a high-quality one by convolving
with a (possibly anisotropic, rotated) Gaussian kernel under reflect
padding, downsampling by an integer factor with a selectable
interpolation, then adding zero-mean Gaussian noise and clipping to
[0, 1]. Training-time parameter sampling draws kernel size from the odd
sizes 7..21, isotropic width from (0.1, 2.4), anisotropic long axis from
(0.5, 6) with angle in [0, pi), and noise sigma from (0, 25/255).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import ndimage

from .resample import KINDS, resize2d

KERNEL_SIZES = tuple(range(7, 22, 2))
ISO_SIGMA_RANGE = (0.1, 2.4)
ANISO_SIGMA_RANGE = (0.5, 6.0)
NOISE_SIGMA_MAX = 25.0 / 255.0


@dataclass(frozen=True)
class BlurKernel:
    size: int
    kind: str                 # "isotropic" | "anisotropic"
    sigma_x: float
    sigma_y: float
    angle: float              # radians in [0, pi)
    weights: np.ndarray

    def is_delta(self) -> bool:
        c = self.size // 2
        return self.weights[c, c] == 1.0


def make_kernel(kind: str, size: int, sigma_x: float, sigma_y: float | None = None,
                angle: float = 0.0) -> BlurKernel:
    """Normalized rotated-Gaussian blur kernel on a size x size grid."""
    if size % 2 == 0 or size < 1:
        raise ValueError(f"make_kernel: size must be odd and positive, got {size}")
    if kind == "isotropic":
        sigma_y = sigma_x
        angle = 0.0
    elif kind != "anisotropic":
        raise ValueError(f"make_kernel: unknown kind {kind!r}")
    if sigma_y is None:
        raise ValueError("make_kernel: anisotropic kernels need sigma_y")
    if sigma_x <= 0 or sigma_y <= 0:
        raise ValueError(f"make_kernel: sigmas must be positive, got ({sigma_x}, {sigma_y})")
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    xx, yy = np.meshgrid(coords, coords)  # yy varies over rows, xx over columns
    c, s = math.cos(angle), math.sin(angle)
    # quadratic form of the inverse covariance R diag(sx^2, sy^2) R^T
    a = (c / sigma_x) ** 2 + (s / sigma_y) ** 2
    b = c * s * (1.0 / sigma_x**2 - 1.0 / sigma_y**2)
    d = (s / sigma_x) ** 2 + (c / sigma_y) ** 2
    q = a * xx**2 + 2.0 * b * xx * yy + d * yy**2
    with np.errstate(under="ignore"):
        w = np.exp(-0.5 * q)
    w /= w.sum()
    return BlurKernel(size=size, kind=kind, sigma_x=float(sigma_x), sigma_y=float(sigma_y),
                      angle=float(angle), weights=w)


def delta_kernel(size: int = 7) -> BlurKernel:
    return make_kernel("isotropic", size, 1e-9)


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    size: int
    sigma_x: float
    sigma_y: float
    angle: float
    scale: int
    resample: str             # "nearest" | "bilinear" | "bicubic"
    noise_sigma: float
    rng_seed: int

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"DegradationSpec: scale must be >= 1, got {self.scale}")
        if self.resample not in KINDS:
            raise ValueError(f"DegradationSpec: unknown resample {self.resample!r}")
        if self.noise_sigma < 0:
            raise ValueError("DegradationSpec: noise_sigma must be >= 0")

    def kernel(self) -> BlurKernel:
        return make_kernel(self.kind, self.size, self.sigma_x, self.sigma_y, self.angle)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "DegradationSpec":
        return DegradationSpec(**json.loads(text))

    def with_seed(self, seed: int) -> "DegradationSpec":
        return replace(self, rng_seed=int(seed))


def identity_spec(scale: int = 1) -> DegradationSpec:
    return DegradationSpec(kind="isotropic", size=7, sigma_x=1e-9, sigma_y=1e-9, angle=0.0,
                           scale=scale, resample="bilinear", noise_sigma=0.0, rng_seed=0)


def resolution_only_spec(scale: int, resample: str = "bilinear") -> DegradationSpec:
    """Pure downsampling, no blur or noise (the resolution-difference setting)."""
    return replace(identity_spec(scale), resample=resample)


def blur(img: np.ndarray, kernel: BlurKernel) -> np.ndarray:
    """Convolve each channel with the kernel under reflect padding."""
    img = np.asarray(img, dtype=np.float64)
    if kernel.is_delta():
        return img.copy()
    # scipy 'mirror' == edge-excluding reflection (np.pad mode='reflect')
    if img.ndim == 2:
        return ndimage.convolve(img, kernel.weights, mode="mirror")
    return np.stack([ndimage.convolve(img[..., c], kernel.weights, mode="mirror")
                     for c in range(img.shape[-1])], axis=-1)


def degrade(hq: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Blur, downsample by spec.scale (output extents floored), add noise, clip."""
    hq = np.asarray(hq, dtype=np.float64)
    h, w = hq.shape[:2]
    if spec.scale > h or spec.scale > w:
        raise ValueError(f"degrade: scale {spec.scale} exceeds image extents {(h, w)}")
    out = blur(hq, spec.kernel())
    if spec.scale > 1:
        out = resize2d(out, h // spec.scale, w // spec.scale, spec.resample)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(np.random.SeedSequence(spec.rng_seed))
        out = out + rng.normal(0.0, spec.noise_sigma, out.shape)
    return np.clip(out, 0.0, 1.0)


def sample_spec(rng: np.random.Generator, scale: int) -> DegradationSpec:
    """Draw one degradation per the training distribution."""
    kind = "isotropic" if rng.integers(2) == 0 else "anisotropic"
    size = int(rng.choice(KERNEL_SIZES))
    if kind == "isotropic":
        sigma_x = sigma_y = float(rng.uniform(*ISO_SIGMA_RANGE))
        angle = 0.0
    else:
        sigma_x = float(rng.uniform(*ANISO_SIGMA_RANGE))
        sigma_y = float(rng.uniform(0.1, sigma_x))  # shorter axis; law unstated upstream
        angle = float(rng.uniform(0.0, math.pi))
    resample = str(rng.choice(KINDS))
    noise_sigma = float(rng.uniform(0.0, NOISE_SIGMA_MAX))
    seed = int(rng.integers(0, 2**63 - 1))
    return DegradationSpec(kind=kind, size=size, sigma_x=sigma_x, sigma_y=sigma_y,
                           angle=angle, scale=scale, resample=resample,
                           noise_sigma=noise_sigma, rng_seed=seed)


def upsample_to(lq: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bicubic upsampling to exactly (target_h, target_w), clipped to [0, 1]."""
    lq = np.asarray(lq, dtype=np.float64)
    if lq.shape[0] < 1 or lq.shape[1] < 1:
        raise ValueError(f"upsample_to: empty input {lq.shape}")
    if target_h < lq.shape[0] or target_w < lq.shape[1]:
        raise ValueError(f"upsample_to: target {(target_h, target_w)} below input {lq.shape[:2]}")
    if (target_h, target_w) == lq.shape[:2]:
        return lq.copy()
    return np.clip(resize2d(lq, target_h, target_w, "bicubic"), 0.0, 1.0)
