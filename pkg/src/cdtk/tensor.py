"""Minimal reverse-mode autodiff over float64 numpy arrays.

The computation graph doubles as the tape: every op that touches a
grad-requiring input records its parents plus a backward closure on the
output node. ``backward`` walks the graph once in reverse topological
order and accumulates gradients additively into every grad-requiring
node. Everything is float64; there is no broadcasting magic beyond
numpy's own rules (gradients are summed back to the parent shape).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


def _shape_error(op: str, *shapes) -> ShapeMismatch:
    return ShapeMismatch(f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._bwd: Optional[Callable[[], None]] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        backward(self)

    # operator sugar; scalars multiply via mul_scalar so the graph stays lean
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return elementwise_mul(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return elementwise_div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def sum(self, axis=None, keepdims: bool = False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], bwd: Callable[[], None]) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g)  # owned copy; g may alias another node's buffer
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the parent shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dLeaf into every grad-requiring node reachable from loss."""
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._bwd is not None:
            node._bwd()


# ---------------------------------------------------------------------------
# elementwise / arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bwd():
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(out.grad, b.data.shape))

    out = _node(out_data, (a, b), bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def bwd():
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(-out.grad, b.data.shape))

    out = _node(out_data, (a, b), bwd)
    return out


def mul_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd():
        _accum(x, c * out.grad)

    out = _node(x.data * c, (x,), bwd)
    return out


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd():
        _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
        _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))

    out = _node(a.data * b.data, (a, b), bwd)
    return out


def elementwise_div(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd():
        _accum(a, _unbroadcast(out.grad / b.data, a.data.shape))
        _accum(b, _unbroadcast(-out.grad * a.data / (b.data * b.data), b.data.shape))

    out = _node(a.data / b.data, (a, b), bwd)
    return out


def power(x: Tensor, p: float) -> Tensor:
    p = float(p)

    def bwd():
        _accum(x, out.grad * p * np.power(x.data, p - 1.0))

    out = _node(np.power(x.data, p), (x,), bwd)
    return out


def sqrt(x: Tensor) -> Tensor:
    out_data = np.sqrt(x.data)

    def bwd():
        _accum(x, out.grad * 0.5 / out_data)

    out = _node(out_data, (x,), bwd)
    return out


# Active watchers collect whether any relu saw an input near its kink;
# gradcheck uses this to exclude elements instead of failing them.
_KINK_WATCHERS: list = []


class KinkWatcher:
    def __init__(self, margin: float):
        self.margin = margin
        self.hit = False

    def __enter__(self):
        _KINK_WATCHERS.append(self)
        return self

    def __exit__(self, *exc):
        _KINK_WATCHERS.remove(self)


def relu(x: Tensor) -> Tensor:
    if _KINK_WATCHERS:
        near = np.abs(x.data) <= max(w.margin for w in _KINK_WATCHERS)
        if near.any():
            for w in _KINK_WATCHERS:
                if (np.abs(x.data) <= w.margin).any():
                    w.hit = True
    mask = x.data > 0.0  # gradient at exactly 0 is defined as 0

    def bwd():
        _accum(x, out.grad * mask)

    out = _node(np.maximum(x.data, 0.0), (x,), bwd)
    return out


# ---------------------------------------------------------------------------
# reductions / shape ops

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd():
        g = out.grad
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            g = np.expand_dims(g, axes)
        _accum(x, np.broadcast_to(g, x.data.shape))

    out = _node(out_data, (x,), bwd)
    return out


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.data.shape[a] for a in axes]))
    return mul_scalar(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    def bwd():
        _accum(x, out.grad.reshape(x.data.shape))

    out = _node(x.data.reshape(shape), (x,), bwd)
    return out


def transpose2d(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise _shape_error("transpose2d", x.data.shape)

    def bwd():
        _accum(x, out.grad.T)

    out = _node(x.data.T.copy(), (x,), bwd)
    return out


def slice0(x: Tensor, i: int) -> Tensor:
    """Select index i along axis 0 (used to peel one sample out of a batch)."""

    def bwd():
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[i] += out.grad

    out = _node(x.data[i].copy(), (x,), bwd)
    return out


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def bwd():
        for t, g in zip(tensors, np.split(out.grad, splits, axis=axis)):
            _accum(t, g)

    out = _node(out_data, tuple(tensors), bwd)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise _shape_error("matmul", a.data.shape, b.data.shape)

    def bwd():
        _accum(a, out.grad @ b.data.T)
        _accum(b, a.data.T @ out.grad)

    out = _node(a.data @ b.data, (a, b), bwd)
    return out


# ---------------------------------------------------------------------------
# convolution (NHWC; kernels are (kh, kw, c_in, c_out))

def _tap_view(xp: np.ndarray, dy: int, dx: int, oh: int, ow: int, stride: int) -> np.ndarray:
    return xp[:, dy:dy + (oh - 1) * stride + 1:stride, dx:dx + (ow - 1) * stride + 1:stride, :]


def _conv_fwd(xp: np.ndarray, k: np.ndarray, stride: int) -> np.ndarray:
    """Shift-and-accumulate convolution: one (ci, co) matmul per kernel tap."""
    n, hp, wp, ci = xp.shape
    kh, kw, _, co = k.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    out = np.zeros((n, oh, ow, co))
    for dy in range(kh):
        for dx in range(kw):
            out += _tap_view(xp, dy, dx, oh, ow, stride) @ k[dy, dx]
    return out


def _conv_grad_kernel(xp: np.ndarray, gy: np.ndarray, stride: int, kshape: tuple) -> np.ndarray:
    kh, kw, ci, co = kshape
    oh, ow = gy.shape[1], gy.shape[2]
    gk = np.empty(kshape)
    gyf = gy.reshape(-1, co)
    for dy in range(kh):
        for dx in range(kw):
            xs = _tap_view(xp, dy, dx, oh, ow, stride)
            gk[dy, dx] = xs.reshape(-1, ci).T @ gyf
    return gk


def _conv_grad_input(gy: np.ndarray, k: np.ndarray, stride: int, xp_shape: tuple) -> np.ndarray:
    """Adjoint of _conv_fwd in its input: scatter gy back through the kernel."""
    kh, kw, ci, co = k.shape
    oh, ow = gy.shape[1], gy.shape[2]
    gx = np.zeros(xp_shape)
    for dy in range(kh):
        for dx in range(kw):
            _tap_view(gx, dy, dx, oh, ow, stride)[...] += gy @ k[dy, dx].T
    return gx


def pad2d(x: Tensor, pad: int, mode: str = "constant") -> Tensor:
    """Pad the two spatial axes of an NHWC tensor ('constant' or 'reflect')."""
    if pad == 0:
        return x
    spec = ((0, 0), (pad, pad), (pad, pad), (0, 0))
    if mode == "constant":
        out_data = np.pad(x.data, spec)

        def bwd():
            _accum(x, out.grad[:, pad:-pad, pad:-pad, :])

    elif mode == "reflect":
        out_data = np.pad(x.data, spec, mode="reflect")
        h, w = x.data.shape[1], x.data.shape[2]
        idx = np.pad(np.arange(h * w).reshape(h, w), pad, mode="reflect").ravel()

        def bwd():
            n, c = x.data.shape[0], x.data.shape[3]
            g = np.zeros((n, h * w, c))
            np.add.at(g, (slice(None), idx), out.grad.reshape(n, -1, c))
            _accum(x, g.reshape(x.data.shape))

    else:
        raise ValueError(f"pad2d: unknown mode {mode!r}")
    out = _node(out_data, (x,), bwd)
    return out


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0,
           pad_mode: str = "constant") -> Tensor:
    """2-D convolution (cross-correlation) of NHWC input with (kh,kw,ci,co) kernel."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4 or x.data.shape[3] != kernel.data.shape[2]:
        raise _shape_error("conv2d", x.data.shape, kernel.data.shape)
    xp = pad2d(x, padding, pad_mode) if padding else x
    out_data = _conv_fwd(xp.data, kernel.data, stride)

    def bwd():
        _accum(xp, _conv_grad_input(out.grad, kernel.data, stride, xp.data.shape))
        _accum(kernel, _conv_grad_kernel(xp.data, out.grad, stride, kernel.data.shape))

    out = _node(out_data, (xp, kernel), bwd)
    return out


def transposed_conv2d(x: Tensor, kernel: Tensor, stride: int = 2, padding: int = 1) -> Tensor:
    """Transposed convolution: output extent (h-1)*stride + kh - 2*padding."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4 or x.data.shape[3] != kernel.data.shape[2]:
        raise _shape_error("transposed_conv2d", x.data.shape, kernel.data.shape)
    n, h, w, ci = x.data.shape
    kh, kw, _, co = kernel.data.shape
    full_h = (h - 1) * stride + kh
    full_w = (w - 1) * stride + kw
    kt = kernel.data.transpose(0, 1, 3, 2)  # forward is the conv input-adjoint
    y_full = _conv_grad_input(x.data, kt, stride, (n, full_h, full_w, co))
    p = padding
    out_data = y_full[:, p:full_h - p, p:full_w - p, :] if p else y_full

    def bwd():
        g_full = np.pad(out.grad, ((0, 0), (p, p), (p, p), (0, 0))) if p else out.grad
        _accum(x, _conv_fwd(g_full, kt, stride))
        gk = _conv_grad_kernel(g_full, x.data, stride, (kh, kw, co, ci))
        _accum(kernel, gk.transpose(0, 1, 3, 2))

    out = _node(np.ascontiguousarray(out_data), (x, kernel), bwd)
    return out


# ---------------------------------------------------------------------------
# resampling / normalization

def _apply_resample(x: np.ndarray, wh: np.ndarray, ww: np.ndarray) -> np.ndarray:
    # y[n,oh,ow,c] = sum_ij wh[oh,i] ww[ow,j] x[n,i,j,c]
    t = np.einsum("oi,nihc->nohc", wh, x, optimize=True)
    return np.einsum("pj,nojc->nopc", ww, t, optimize=True)


def _upsample(x: Tensor, out_h: int, out_w: int, kind: str) -> Tensor:
    from .resample import resample_matrix  # deferred to avoid import cycle

    squeeze = x.data.ndim == 3
    data = x.data[None] if squeeze else x.data
    if data.ndim != 4:
        raise _shape_error(f"upsample_{kind}", x.data.shape)
    wh = resample_matrix(data.shape[1], out_h, kind)
    ww = resample_matrix(data.shape[2], out_w, kind)
    out_data = _apply_resample(data, wh, ww)
    if squeeze:
        out_data = out_data[0]

    def bwd():
        g = out.grad[None] if squeeze else out.grad
        gx = _apply_resample(g, wh.T, ww.T)
        _accum(x, gx[0] if squeeze else gx)

    out = _node(out_data, (x,), bwd)
    return out


def upsample_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    return _upsample(x, out_h, out_w, "bilinear")


def upsample_bicubic(x: Tensor, out_h: int, out_w: int) -> Tensor:
    return _upsample(x, out_h, out_w, "bicubic")


def batchnorm_lite(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5,
                   running_mean: Optional[np.ndarray] = None,
                   running_var: Optional[np.ndarray] = None) -> Tensor:
    """Channel-wise batch normalization over an NHWC tensor.

    With running statistics supplied they are used as constants (eval
    mode); otherwise per-batch statistics over (n, h, w) enter the graph.
    """
    if x.data.ndim != 4:
        raise _shape_error("batchnorm_lite", x.data.shape)
    if running_mean is not None:
        centered = sub(x, Tensor(running_mean))
        scale = 1.0 / np.sqrt(running_var + eps)
        normed = elementwise_mul(centered, Tensor(np.broadcast_to(scale, (x.data.shape[3],))))
    else:
        mu = mean(x, axis=(0, 1, 2), keepdims=True)
        centered = sub(x, mu)
        var = mean(elementwise_mul(centered, centered), axis=(0, 1, 2), keepdims=True)
        denom = sqrt(add(var, Tensor(np.full(var.data.shape, eps))))
        normed = elementwise_div(centered, denom)
    return add(elementwise_mul(normed, gamma), beta)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of (..., K) logits against integer labels (...)."""
    k = logits.data.shape[-1]
    flat = logits.data.reshape(-1, k)
    lab = np.asarray(labels).reshape(-1).astype(np.int64)
    if lab.shape[0] != flat.shape[0]:
        raise _shape_error("softmax_cross_entropy", logits.data.shape, np.asarray(labels).shape)
    shifted = flat - flat.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = flat.shape[0]
    nll = -(shifted[np.arange(n), lab] - np.log(exp.sum(axis=1)))

    def bwd():
        g = probs.copy()
        g[np.arange(n), lab] -= 1.0
        _accum(logits, (out.grad * g / n).reshape(logits.data.shape))

    out = _node(np.asarray(nll.mean()), (logits,), bwd)
    return out
