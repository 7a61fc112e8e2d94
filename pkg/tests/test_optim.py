"""Optimizer update rule and the polynomial schedule."""

import numpy as np
import pytest

from cdtk.optim import AdamW, poly_lr
from cdtk.tensor import Tensor


class TestPolyLr:
    def test_step_zero(self):
        assert poly_lr(0, 0.001, 2000) == 0.001

    def test_final_step(self):
        assert poly_lr(2000, 0.001, 2000) == 0.0

    def test_halfway_value(self):
        # 0.001 * 0.5^0.9
        assert abs(poly_lr(1000, 0.001, 2000) - 0.001 * 0.5**0.9) < 1e-18
        assert abs(poly_lr(1000, 0.001, 2000) - 5.35887e-4) < 1e-8

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            poly_lr(-1, 0.001, 100)
        with pytest.raises(ValueError):
            poly_lr(101, 0.001, 100)


class TestAdamW:
    def test_zero_grad_no_decay_is_noop(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.zeros(2)
        opt = AdamW({"p": p}, weight_decay=0.0)
        opt.step(0.1)
        assert np.array_equal(p.data, [1.0, -2.0])

    def test_first_step_bias_corrected(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([1.0])
        opt = AdamW({"p": p}, weight_decay=0.0)
        opt.step(0.1)
        expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8))
        assert abs(p.data[0] - expected) < 1e-15

    def test_pure_decay(self):
        p = Tensor(np.array([2.0]), requires_grad=True)
        p.grad = np.array([0.0])
        opt = AdamW({"p": p}, weight_decay=0.01)
        opt.step(0.1)
        assert abs(p.data[0] - 2.0 * (1.0 - 0.001)) < 1e-15

    def test_nonfinite_gradient_aborts_with_diagnostics(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([np.nan])
        opt = AdamW({"bad_param": p})
        with pytest.raises(FloatingPointError, match="bad_param"):
            opt.step(0.1)

    def test_zero_grad_clears(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([3.0])
        opt = AdamW({"p": p})
        opt.zero_grad()
        assert p.grad is None

    def test_matches_reference_sequence(self):
        # independent scalar re-implementation of decoupled AdamW
        rng = np.random.default_rng(0)
        grads = rng.normal(size=8)
        p = Tensor(np.array([0.5]), requires_grad=True)
        opt = AdamW({"p": p}, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01)
        ref, m, v = 0.5, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            p.grad = np.array([g])
            opt.step(0.05)
            ref -= 0.05 * 0.01 * ref
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mhat = m / (1 - 0.9**t)
            vhat = v / (1 - 0.999**t)
            ref -= 0.05 * mhat / (np.sqrt(vhat) + 1e-8)
            assert abs(p.data[0] - ref) < 1e-14
