"""Correlation-matching distillation losses and the FIFO feature bank.

Every loss is a mean of squared entry differences between a student
correlation matrix and the matching (detached) teacher matrix. The bank
stores raw detached pixel-feature rows pushed during training; global
correlation losses compare student and teacher against one shared sample
of bank rows.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .correlation import cross_correlation, global_correlation, self_correlation
from .tensor import Tensor, ShapeMismatch, add, elementwise_mul, mean, mul_scalar, sub
from .tensorfile import read_tensor_with_cursor, write_tensor_with_cursor


@dataclass
class LossWeights:
    """Weights of the distillation terms (all >= 0)."""

    self_t1: float = 1.0        # self-correlation on the first-time features
    self_t2: float = 1.0        # self-correlation on the second-time (degraded) features
    cross: float = 1.0          # cross-correlation between temporal features
    global_corr: float = 0.4    # bank-based global correlation
    semantic: float = 5.0       # weight of the aggregated semantic term in the total
    change: float = 0.25        # weight of the change-feature term in the total

    def __post_init__(self):
        vals = asdict(self)
        for key, v in vals.items():
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"LossWeights.{key} must be finite and >= 0, got {v}")

    def semantic_active(self) -> bool:
        return self.semantic > 0 and (self.self_t1 > 0 or self.self_t2 > 0
                                      or self.cross > 0 or self.global_corr > 0)

    def any_active(self) -> bool:
        return self.semantic_active() or self.change > 0

    @staticmethod
    def zeros() -> "LossWeights":
        return LossWeights(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_csv(text: str) -> "LossWeights":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 6:
            raise ValueError(f"expected 6 comma-separated weights, got {len(parts)}")
        return LossWeights(*parts)


def _detached(f: Tensor) -> Tensor:
    return f.detach() if f.requires_grad else f


def corr_mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared entry difference; equals 1/N^2 * ||A - B||_F^2 for square N x N."""
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"corr_mse: shapes differ {a.data.shape} vs {b.data.shape}")
    d = sub(a, b)
    return mean(elementwise_mul(d, d))


def self_correlation_loss(f_s: Tensor, f_t: Tensor) -> Tensor:
    """Match the student's within-map pixel affinities to the teacher's."""
    if f_s.data.shape != f_t.data.shape:
        raise ShapeMismatch(
            f"self_correlation_loss: shapes differ {f_s.data.shape} vs {f_t.data.shape}")
    return corr_mse(self_correlation(f_s), self_correlation(_detached(f_t)))


def cross_correlation_loss(f1_s: Tensor, f2_s: Tensor, f1_t: Tensor, f2_t: Tensor) -> Tensor:
    """Match student temporal cross-affinities to the teacher's."""
    return corr_mse(cross_correlation(f1_s, f2_s),
                    cross_correlation(_detached(f1_t), _detached(f2_t)))


def global_correlation_loss(f1_s: Tensor, f2_s: Tensor, f1_t: Tensor, f2_t: Tensor,
                            bank_rows: np.ndarray) -> Tensor:
    """Match affinities against one shared bank sample, per temporal slot."""
    term1 = corr_mse(global_correlation(f1_s, bank_rows),
                     global_correlation(_detached(f1_t), bank_rows))
    term2 = corr_mse(global_correlation(f2_s, bank_rows),
                     global_correlation(_detached(f2_t), bank_rows))
    return add(term1, term2)


def semantic_aggregate(l_s1: Tensor, l_s2: Tensor, l_c: Tensor, l_g: Tensor,
                       w: LossWeights) -> Tensor:
    """Weighted sum of the four semantic terms."""
    out = Tensor(0.0)
    for term, weight in ((l_s1, w.self_t1), (l_s2, w.self_t2),
                         (l_c, w.cross), (l_g, w.global_corr)):
        if term is not None and weight != 0.0:
            out = add(out, mul_scalar(term, weight))
    return out


def semantic_distillation_loss(f1_s: Tensor, f2_s: Tensor, f1_t: Tensor, f2_t: Tensor,
                               bank_rows: np.ndarray | None, w: LossWeights) -> Tensor:
    """Full semantic term; zero-weight components are skipped entirely."""
    l_s1 = self_correlation_loss(f1_s, f1_t) if w.self_t1 != 0 else None
    l_s2 = self_correlation_loss(f2_s, f2_t) if w.self_t2 != 0 else None
    l_c = (cross_correlation_loss(f1_s, f2_s, f1_t, f2_t) if w.cross != 0 else None)
    l_g = None
    if w.global_corr != 0 and bank_rows is not None:
        l_g = global_correlation_loss(f1_s, f2_s, f1_t, f2_t, bank_rows)
    return semantic_aggregate(l_s1, l_s2, l_c, l_g, w)


def change_distillation_loss(fc_s: Tensor, fc_t: Tensor) -> Tensor:
    """Self-correlation matching on the fused change features."""
    return self_correlation_loss(fc_s, fc_t)


def total_loss(ce: Tensor, sfd: Tensor | None, cfd: Tensor | None, w: LossWeights) -> Tensor:
    """ce + semantic_weight * sfd + change_weight * cfd."""
    out = ce
    if sfd is not None and w.semantic != 0.0:
        out = add(out, mul_scalar(sfd, w.semantic))
    if cfd is not None and w.change != 0.0:
        out = add(out, mul_scalar(cfd, w.change))
    return out


class MemoryBank:
    """Fixed-capacity FIFO store of detached d-dimensional pixel features."""

    def __init__(self, dim: int, capacity: int = 20480, push_count: int = 8,
                 sample_count: int = 4096):
        if capacity < 1 or dim < 1:
            raise ValueError(f"MemoryBank: bad capacity/dim ({capacity}, {dim})")
        if push_count * 4 > capacity:
            raise ValueError(
                f"MemoryBank: push_count {push_count} must be small next to capacity {capacity}")
        if sample_count < 1 or sample_count > capacity:
            raise ValueError(
                f"MemoryBank: sample_count {sample_count} must be in [1, {capacity}]")
        self.dim = dim
        self.capacity = capacity
        self.push_count = push_count
        self.sample_count = sample_count
        self._buf = np.zeros((capacity, dim))
        self._count = 0
        self._cursor = 0

    def __len__(self) -> int:
        return self._count

    def rows(self) -> np.ndarray:
        """Stored rows, oldest first."""
        if self._count < self.capacity:
            return self._buf[:self._count].copy()
        return np.concatenate([self._buf[self._cursor:], self._buf[:self._cursor]])

    def push(self, feature_maps: list[np.ndarray], rng: np.random.Generator) -> None:
        """Pick one candidate map at random, push push_count of its pixel rows."""
        chosen = np.asarray(feature_maps[int(rng.integers(len(feature_maps)))], dtype=np.float64)
        pixels = chosen.reshape(-1, chosen.shape[-1])
        if pixels.shape[1] != self.dim:
            raise ShapeMismatch(f"MemoryBank.push: dim {pixels.shape[1]} != bank dim {self.dim}")
        if self.push_count > pixels.shape[0]:
            raise ValueError(
                f"MemoryBank.push: push_count {self.push_count} exceeds {pixels.shape[0]} pixels")
        idx = np.sort(rng.choice(pixels.shape[0], size=self.push_count, replace=False))
        pos = (self._cursor + np.arange(self.push_count)) % self.capacity
        self._buf[pos] = pixels[idx]
        self._cursor = int((self._cursor + self.push_count) % self.capacity)
        self._count = min(self._count + self.push_count, self.capacity)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """sample_count rows, without replacement once enough entries exist."""
        if self._count == 0:
            raise RuntimeError("MemoryBank.sample: bank is empty")
        stored = self.rows()
        replace = self._count < self.sample_count
        idx = rng.choice(self._count, size=self.sample_count, replace=replace)
        return stored[idx]

    def save(self, path) -> None:
        write_tensor_with_cursor(path, self._buf[:self._count] if self._count < self.capacity
                                 else self._buf, self._cursor)

    @classmethod
    def load(cls, path, capacity: int, push_count: int, sample_count: int) -> "MemoryBank":
        data, cursor = read_tensor_with_cursor(path)
        if data.shape[0] > capacity:
            raise ValueError(f"MemoryBank.load: {data.shape[0]} rows exceed capacity {capacity}")
        bank = cls(dim=data.shape[1], capacity=capacity, push_count=push_count,
                   sample_count=sample_count)
        bank._buf[:data.shape[0]] = data
        bank._count = data.shape[0]
        bank._cursor = int(cursor)
        return bank
