"""Engine forward/backward contracts and per-op gradient checks."""

import numpy as np
import pytest

from cdtk.gradcheck import gradcheck
from cdtk import tensor as T
from cdtk.tensor import Tensor, ShapeMismatch, backward


class TestForwardOps:
    def test_matmul_all_ones(self):
        out = T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
        assert np.array_equal(out.data, np.full((2, 2), 3.0))

    def test_relu_definition(self):
        out = T.relu(Tensor(np.array([-1.0, 0.0, 2.0])))
        assert np.array_equal(out.data, [0.0, 0.0, 2.0])

    def test_conv2d_mass_conserving_kernel_on_constant(self):
        img = Tensor(np.full((1, 5, 5, 1), 0.7))
        k = np.ones((3, 3, 1, 1)) / 9.0
        out = T.conv2d(img, Tensor(k), stride=1, padding=1, pad_mode="reflect")
        assert out.data.shape == (1, 5, 5, 1)
        assert np.allclose(out.data, 0.7, atol=1e-12)

    def test_matmul_shape_error_names_op(self):
        with pytest.raises(ShapeMismatch, match="matmul"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_conv2d_shape_error(self):
        with pytest.raises(ShapeMismatch, match="conv2d"):
            T.conv2d(Tensor(np.ones((1, 5, 5, 2))), Tensor(np.ones((3, 3, 3, 4))))

    def test_concat_and_split_gradient(self):
        a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        b = Tensor(np.ones((2, 2)), requires_grad=True)
        out = T.concat([a, b], axis=1)
        assert out.data.shape == (2, 5)
        backward(T.sum(out))
        assert np.array_equal(a.grad, np.ones((2, 3)))
        assert np.array_equal(b.grad, np.ones((2, 2)))

    def test_transposed_conv_output_extent(self):
        x = Tensor(np.ones((1, 8, 8, 4)))
        k = Tensor(np.ones((4, 4, 4, 2)))
        out = T.transposed_conv2d(x, k, stride=2, padding=1)
        assert out.data.shape == (1, 16, 16, 2)


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
        backward(T.sum(x))
        assert np.array_equal(x.grad, np.ones((3, 4)))

    def test_quadratic(self):
        x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        backward(T.sum(T.elementwise_mul(x, x)))
        assert np.allclose(x.grad, [2.0, 4.0, 6.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            backward(T.add(x, x))

    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_reuse_accumulates_k_fold(self, k):
        x = Tensor(np.random.default_rng(1).normal(size=(4,)), requires_grad=True)
        acc = T.sum(x)
        for _ in range(k - 1):
            acc = T.add(acc, T.sum(x))
        backward(acc)
        assert np.allclose(x.grad, k * np.ones(4))

    def test_reshape_roundtrip_identity(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        y = T.reshape(T.reshape(x, (6, 4)), (2, 3, 4))
        assert np.array_equal(y.data, x.data)
        backward(T.sum(T.elementwise_mul(y, Tensor(rng.normal(size=(2, 3, 4))))))
        x2 = Tensor(x.data, requires_grad=True)
        backward(T.sum(T.elementwise_mul(x2, Tensor(rng.normal(size=(2, 3, 4))))))
        assert x.grad.shape == (2, 3, 4)

    def test_slice0_scatters(self):
        x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
        backward(T.sum(T.elementwise_mul(T.slice0(x, 1), Tensor(np.full(4, 2.0)))))
        expected = np.zeros((3, 4))
        expected[1] = 2.0
        assert np.array_equal(x.grad, expected)


def _random_small(rng, shape):
    return Tensor(rng.normal(size=shape))


# one entry per differentiable op: (name, builder) where builder returns (f, x)
def _op_cases(rng):
    k33 = Tensor(rng.normal(size=(3, 3, 2, 3)))
    k44 = Tensor(rng.normal(size=(4, 4, 2, 2)))
    gamma = Tensor(rng.normal(size=(2,)))
    beta = Tensor(rng.normal(size=(2,)))
    other = Tensor(rng.normal(size=(2, 3)))
    probe = Tensor(rng.normal(size=(2, 3, 3, 2)))  # breaks scale invariance of normalizers
    labels = rng.integers(0, 2, size=(1, 4, 4))
    return {
        "add": (lambda x: T.sum(T.elementwise_mul(T.add(x, other), T.add(x, other))), (2, 3)),
        "sub": (lambda x: T.sum(T.elementwise_mul(T.sub(x, other), T.sub(x, other))), (2, 3)),
        "mul_scalar": (lambda x: T.sum(T.mul_scalar(x, 2.5)), (2, 3)),
        "elementwise_mul": (lambda x: T.sum(T.elementwise_mul(x, x)), (2, 3)),
        "elementwise_div": (lambda x: T.sum(T.elementwise_div(other, x)), (2, 3)),
        "matmul": (lambda x: T.sum(T.matmul(x, T.transpose2d(other))), (4, 3)),
        "relu": (lambda x: T.sum(T.elementwise_mul(T.relu(x), T.relu(x))), (3, 4)),
        "sqrt": (lambda x: T.sum(T.sqrt(x)), (5,)),
        "power": (lambda x: T.sum(T.power(x, 3.0)), (5,)),
        "sum_axis": (lambda x: T.sum(T.elementwise_mul(T.sum(x, axis=1), T.sum(x, axis=1))), (3, 4)),
        "mean": (lambda x: T.mean(T.elementwise_mul(x, x)), (3, 4)),
        "reshape": (lambda x: T.sum(T.elementwise_mul(T.reshape(x, (6,)), T.reshape(x, (6,)))), (2, 3)),
        "transpose2d": (lambda x: T.sum(T.elementwise_mul(T.transpose2d(x), T.transpose2d(x))), (2, 3)),
        "concat": (lambda x: T.sum(T.elementwise_mul(T.concat([x, x], axis=0), T.concat([x, x], axis=0))), (2, 3)),
        "conv2d": (lambda x: T.sum(T.elementwise_mul(T.conv2d(x, k33, 1, 1), T.conv2d(x, k33, 1, 1))), (1, 4, 4, 2)),
        "conv2d_stride2": (lambda x: T.sum(T.conv2d(x, k33, 2, 1)), (1, 5, 5, 2)),
        "conv2d_reflect": (lambda x: T.sum(T.elementwise_mul(T.conv2d(x, k33, 1, 1, "reflect"), T.conv2d(x, k33, 1, 1, "reflect"))), (1, 4, 4, 2)),
        "transposed_conv2d": (lambda x: T.sum(T.elementwise_mul(T.transposed_conv2d(x, k44, 2, 1), T.transposed_conv2d(x, k44, 2, 1))), (1, 3, 3, 2)),
        "upsample_bilinear": (lambda x: T.sum(T.elementwise_mul(T.upsample_bilinear(x, 5, 7), T.upsample_bilinear(x, 5, 7))), (1, 3, 4, 2)),
        "upsample_bicubic": (lambda x: T.sum(T.elementwise_mul(T.upsample_bicubic(x, 6, 6), T.upsample_bicubic(x, 6, 6))), (1, 3, 3, 2)),
        "batchnorm_lite": (lambda x: T.sum(T.elementwise_mul(T.batchnorm_lite(x, gamma, beta), probe)), (2, 3, 3, 2)),
        "softmax_cross_entropy": (lambda x: T.softmax_cross_entropy(x, labels), (1, 4, 4, 2)),
        "slice0": (lambda x: T.sum(T.elementwise_mul(T.slice0(x, 1), T.slice0(x, 1))), (3, 4)),
        "pad2d_reflect": (lambda x: T.sum(T.elementwise_mul(T.pad2d(x, 2, "reflect"), T.pad2d(x, 2, "reflect"))), (1, 4, 4, 2)),
    }


@pytest.mark.parametrize("name", sorted(_op_cases(np.random.default_rng(0)).keys()))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(42)
    cases = _op_cases(rng)
    f, shape = cases[name]
    for trial in range(4):
        x = _random_small(np.random.default_rng(100 + trial), shape)
        if name == "sqrt":
            x = Tensor(np.abs(x.data) + 0.5)
        if name == "elementwise_div":
            x = Tensor(x.data + np.sign(x.data) * 0.5)
        report = gradcheck(f, x, step=1e-5, tol=1e-4)
        assert report.passed, f"{name} trial {trial}: {report}"


def test_hundred_random_inputs_across_ops():
    """Invariant sweep: 100 random (op, input) draws all pass at 1e-4."""
    rng = np.random.default_rng(7)
    cases = _op_cases(np.random.default_rng(0))
    names = sorted(cases.keys())
    for trial in range(100):
        name = names[trial % len(names)]
        f, shape = cases[name]
        x = Tensor(rng.normal(size=shape))
        if name == "sqrt":
            x = Tensor(np.abs(x.data) + 0.5)
        if name == "elementwise_div":
            x = Tensor(x.data + np.sign(x.data) * 0.5)
        assert gradcheck(f, x, step=1e-5, tol=1e-4).passed, name
