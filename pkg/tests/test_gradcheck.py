"""Behavior of the finite-difference checker itself."""

import numpy as np
import pytest

from cdtk.correlation import normalize_rows, pixel_matrix
from cdtk.distill import cross_correlation_loss
from cdtk.gradcheck import gradcheck
from cdtk import tensor as T
from cdtk.tensor import Tensor


def test_linear_function_near_machine_precision():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
    report = gradcheck(T.mean, x)
    assert report.passed
    assert report.max_rel_err < 1e-8


def test_cross_loss_through_normalization_passes():
    rng = np.random.default_rng(1)
    f2_s = Tensor(rng.normal(size=(1, 4, 2)))
    f1_t = Tensor(rng.normal(size=(1, 4, 2)))
    f2_t = Tensor(rng.normal(size=(1, 4, 2)))

    def f(x):
        return cross_correlation_loss(x, f2_s, f1_t, f2_t)

    assert gradcheck(f, Tensor(rng.normal(size=(1, 4, 2))), tol=1e-4).passed


def test_relu_kink_is_excluded_not_failed():
    x = Tensor(np.array([0.0, 0.5, -0.25]))

    def f(t):
        return T.sum(T.relu(t))

    report = gradcheck(f, x)
    assert report.passed
    assert report.excluded[0] and not report.excluded[1] and not report.excluded[2]
    assert report.n_checked == 2


def test_nonfinite_evaluation_raises():
    def f(t):
        return T.sum(T.sqrt(t))  # sqrt of negative -> NaN

    with pytest.raises(FloatingPointError):
        gradcheck(f, Tensor(np.array([-1.0, 2.0])))


def test_step_must_be_positive():
    with pytest.raises(ValueError):
        gradcheck(T.mean, Tensor(np.ones(3)), step=0.0)


def test_normalize_rows_gradient():
    rng = np.random.default_rng(3)
    probe = Tensor(rng.normal(size=(8, 3)))

    def f(x):
        n = normalize_rows(pixel_matrix(x))
        return T.sum(T.elementwise_mul(n, probe))

    assert gradcheck(f, Tensor(rng.normal(size=(2, 4, 3)))).passed
