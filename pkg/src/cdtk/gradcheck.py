"""Central finite-difference gradient checking for scalar tensor functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import KinkWatcher, Tensor, backward


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    rel_err: np.ndarray              # per element, NaN where excluded
    excluded: np.ndarray = field(default=None)  # bool mask of relu-kink elements
    n_checked: int = 0

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"gradcheck {status}: max_rel_err={self.max_rel_err:.3e} "
                f"over {self.n_checked} elements ({int(self.excluded.sum())} excluded)")


def _rel_err(a: float, n: float, floor: float = 1e-8) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def gradcheck(f, x: Tensor, step: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued f against central differences.

    Elements whose perturbed evaluations crossed a relu kink are excluded
    from the pass/fail decision rather than counted as failures. Raises
    if f produces a non-finite value.
    """
    if step <= 0:
        raise ValueError("gradcheck: step must be positive")
    base = Tensor(x.data.copy(), requires_grad=True)
    out = f(base)
    if out.data.size != 1:
        raise ValueError(f"gradcheck: f must return a scalar, got shape {out.data.shape}")
    if not np.isfinite(out.data).all():
        raise FloatingPointError("gradcheck: f(x) is not finite")
    backward(out)
    analytic = base.grad if base.grad is not None else np.zeros_like(base.data)

    flat = x.data.reshape(-1)
    rel = np.full(flat.shape, np.nan)
    excluded = np.zeros(flat.shape, dtype=bool)
    margin = 4.0 * step
    for i in range(flat.size):
        probe = flat.copy()
        with KinkWatcher(margin) as watch:
            probe[i] = flat[i] + step
            hi = f(Tensor(probe.reshape(x.data.shape))).data.item()
            probe[i] = flat[i] - step
            lo = f(Tensor(probe.reshape(x.data.shape))).data.item()
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError(f"gradcheck: non-finite evaluation at element {i}")
        numeric = (hi - lo) / (2.0 * step)
        err = _rel_err(analytic.reshape(-1)[i], numeric)
        if err > tol and watch.hit:
            excluded[i] = True
        else:
            rel[i] = err
    checked = ~excluded
    max_err = float(np.nanmax(rel[checked])) if checked.any() else 0.0
    return GradCheckReport(
        passed=bool(max_err <= tol),
        max_rel_err=max_err,
        rel_err=rel.reshape(x.data.shape),
        excluded=excluded.reshape(x.data.shape),
        n_checked=int(checked.sum()),
    )
