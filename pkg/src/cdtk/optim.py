"""AdamW with decoupled weight decay, plus the polynomial LR schedule."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def poly_lr(step: int, lr0: float, total_steps: int, power: float = 0.9) -> float:
    """lr0 * (1 - step/total_steps)^power."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"poly_lr: step {step} outside [0, {total_steps}]")
    return lr0 * (1.0 - step / total_steps) ** power


class AdamW:
    """Decoupled-decay Adam: decay applied to parameters, not gradients."""

    def __init__(self, params: dict[str, Tensor], betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = params
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                bad = int(np.count_nonzero(~np.isfinite(g)))
                raise FloatingPointError(
                    f"AdamW: non-finite gradient for {name!r} "
                    f"({bad}/{g.size} elements, step {self.t})")
            if self.weight_decay:
                p.data -= lr * self.weight_decay * p.data
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
