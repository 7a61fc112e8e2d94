"""Pixel-affinity operators: cosine similarities within and across feature maps.

A feature map (h, w, d) is flattened row-major to (hw, d), rows are
l2-normalized (with an epsilon guard for near-zero rows), and affinity
matrices are plain matrix products of normalized rows. Gradients flow
through the normalization; bank rows passed to the global variant are
constants.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, ShapeMismatch, _node, _accum, matmul, reshape, transpose2d

NORM_EPS = 1e-12


def _row_norms(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.sqrt((x * x).sum(axis=1))
    denom = np.where(n < NORM_EPS, n + NORM_EPS, n)
    return n, denom


def normalize_rows_array(m: np.ndarray) -> np.ndarray:
    """Numpy-only row normalization (same epsilon rule), for constant inputs."""
    m = np.asarray(m, dtype=np.float64)
    _, denom = _row_norms(m)
    return m / denom[:, None]


def normalize_rows(m: Tensor) -> Tensor:
    """Divide each row of an (hw, d) tensor by its l2 norm (guarded near zero)."""
    if m.data.ndim != 2:
        raise ShapeMismatch(f"normalize_rows: expected 2-D input, got {m.data.shape}")
    x = m.data
    n, denom = _row_norms(x)

    def bwd():
        g = out.grad
        dot = (g * x).sum(axis=1)
        factor = np.where(n > 0.0, dot / (np.maximum(n, NORM_EPS) * denom * denom), 0.0)
        _accum(m, g / denom[:, None] - x * factor[:, None])

    out = _node(x / denom[:, None], (m,), bwd)
    return out


def pixel_matrix(f: Tensor) -> Tensor:
    """Flatten (h, w, d) features to (hw, d), row-major over (h, w)."""
    if f.data.ndim != 3:
        raise ShapeMismatch(f"pixel_matrix: expected (h, w, d) features, got {f.data.shape}")
    h, w, d = f.data.shape
    return reshape(f, (h * w, d))


def self_correlation(f: Tensor) -> Tensor:
    """(hw, hw) cosine similarities between all pixel pairs of one feature map."""
    nr = normalize_rows(pixel_matrix(f))
    return matmul(nr, transpose2d(nr))


def cross_correlation(f1: Tensor, f2: Tensor) -> Tensor:
    """(hw, hw) cosine similarities between pixels of two equally-shaped maps."""
    if f1.data.shape != f2.data.shape:
        raise ShapeMismatch(
            f"cross_correlation: shapes differ {f1.data.shape} vs {f2.data.shape}")
    n1 = normalize_rows(pixel_matrix(f1))
    n2 = normalize_rows(pixel_matrix(f2))
    return matmul(n1, transpose2d(n2))


def global_correlation(f: Tensor, bank_rows: np.ndarray) -> Tensor:
    """(hw, K) cosine similarities of map pixels against constant bank rows."""
    bank_rows = np.asarray(bank_rows, dtype=np.float64)
    if bank_rows.ndim != 2 or bank_rows.shape[0] < 1 or bank_rows.shape[1] != f.data.shape[-1]:
        raise ShapeMismatch(
            f"global_correlation: bank {bank_rows.shape} incompatible with "
            f"features {f.data.shape}")
    nf = normalize_rows(pixel_matrix(f))
    bank_n = normalize_rows_array(bank_rows)
    return matmul(nf, Tensor(bank_n.T))
