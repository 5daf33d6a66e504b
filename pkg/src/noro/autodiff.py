"""Reverse-mode autodiff on a recorded tape of numpy primitive ops.

All values are float64 ndarrays wrapped in :class:`Tensor`. Ops record onto
the innermost active :class:`Tape`; with no tape active they are plain
(but still finite-checked) numpy computations, which is the inference path.
"""

from __future__ import annotations

import warnings

import numpy as np

_TAPE_STACK: list["Tape"] = []


class TapeNode:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Execution-ordered op records; reverse iteration is a valid topo order."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self):
        return len(self.nodes)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "is_leaf")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_const(self, p)


class Parameter(Tensor):
    """Named trainable leaf; names must be unique within a model."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray, opname: str):
    # One cheap reduction; NaN/Inf poison the sum. Only on a non-finite sum do
    # we pay for the exact elementwise check (a finite overflow of the sum
    # alone would be a false alarm).
    if not np.isfinite(arr.sum()) and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by op '{opname}'")


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn, opname: str) -> Tensor:
    _check_finite(data, opname)
    out = Tensor(data)
    out.is_leaf = False
    out.requires_grad = any(x.requires_grad for x in inputs)
    if _TAPE_STACK and out.requires_grad:
        _TAPE_STACK[-1].nodes.append(TapeNode(out, inputs, backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitive ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    if isinstance(a, Tensor) and not isinstance(b, Tensor) and np.isscalar(b):
        return scale(a, float(b))
    if isinstance(b, Tensor) and not isinstance(a, Tensor) and np.isscalar(a):
        return scale(b, float(a))
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), bw, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (_unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(a.data / b.data, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return _make(out_data, (a,), lambda g: (g * out_data,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)
    return _make(out_data, (a,), lambda g: (g / (2.0 * out_data),), "sqrt")


def pow_const(a, p: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),), "pow")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)
    return _make(out_data, (a,), lambda g: (g * (1.0 - out_data * out_data),), "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out_data, (a,), lambda g: (g * out_data * (1.0 - out_data),), "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return (g * (a.data > 0),)

    return _make(np.maximum(a.data, 0.0), (a,), bw, "relu")


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU."""
    from scipy.special import erf

    a = as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))

    def bw(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data * a.data)
        return (g * (cdf + a.data * pdf),)

    return _make(a.data * cdf, (a,), bw, "gelu")


def absolute(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return (g * np.sign(a.data),)

    return _make(np.abs(a.data), (a,), bw, "abs")


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw, "sum")


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.data.shape).copy(),)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), bw, "mean")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),), "reshape")


def transpose2d(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("transpose2d expects a 2-D tensor")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T.copy(),), "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    a = as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(a.data[idx].copy(), (a,), bw, "narrow")


def pad_rows(a, before: int, after: int) -> Tensor:
    """Zero-pad along axis 0."""
    a = as_tensor(a)
    width = [(before, after)] + [(0, 0)] * (a.data.ndim - 1)

    def bw(g):
        return (g[before:before + a.data.shape[0]].copy(),)

    return _make(np.pad(a.data, width), (a,), bw, "pad_rows")


def max_detached(a, axis=None, keepdims: bool = False) -> np.ndarray:
    """Max of the values as a plain constant (used for stable softmax shifts)."""
    a = as_tensor(a)
    return a.data.max(axis=axis, keepdims=keepdims)


# ---------------------------------------------------------------------------
# fused primitives for the hot paths (each carries a hand-written backward,
# all are covered by the finite-difference suite)


def affine(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w + b in one node; x is (T, in), w (in, out), b (out,)."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ValueError(f"affine expects 2-D operands, got {x.data.shape} @ {w.data.shape}")
    out_data = x.data @ w.data
    if b is None:
        def bw2(g):
            return g @ w.data.T, x.data.T @ g
        return _make(out_data, (x, w), bw2, "affine")
    out_data = out_data + b.data

    def bw(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return _make(out_data, (x, w, b), bw, "affine")


def softmax_op(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along one axis."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return ((g - dot) * out_data,)

    return _make(out_data, (x,), bw, "softmax")


def layer_norm_op(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero mean / unit variance over the last axis, then (gain, bias) affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv
    out_data = xn * gain.data + bias.data
    lead = tuple(range(x.data.ndim - 1))

    def bw(g):
        gxn = g * gain.data
        gx = inv * (gxn - gxn.mean(axis=-1, keepdims=True)
                    - xn * (gxn * xn).mean(axis=-1, keepdims=True))
        return gx, (g * xn).sum(axis=lead), g.sum(axis=lead)

    return _make(out_data, (x, gain, bias), bw, "layer_norm")


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul over a leading dimension: (B, n, k) @ (B, k, m)."""
    if a.data.ndim != 3 or b.data.ndim != 3:
        raise ValueError("bmm expects 3-D operands")

    def bw(g):
        return g @ b.data.swapaxes(-1, -2), a.data.swapaxes(-1, -2) @ g

    return _make(a.data @ b.data, (a, b), bw, "bmm")


def permute(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,), bw, "permute")


def conv1d_op(x: Tensor, w: Tensor, b: Tensor | None, kernel: int,
              dilation: int = 1) -> Tensor:
    """Dilated same-padded 1-D conv over axis 0 as one im2col + GEMM node.

    x is (T, c_in), w is (kernel * c_in, c_out): tap j of the kernel occupies
    the feature block [j*c_in, (j+1)*c_in) of w's rows.
    """
    t_len, c_in = x.data.shape
    pad = dilation * (kernel // 2)
    xp = np.zeros((t_len + 2 * pad, c_in))
    xp[pad:pad + t_len] = x.data
    s0, s1 = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp, shape=(t_len, kernel, c_in), strides=(s0, dilation * s0, s1))
    # materialize: overlapping strided views dodge the BLAS fast path
    col2 = np.ascontiguousarray(cols).reshape(t_len, kernel * c_in)
    out_data = col2 @ w.data
    if b is not None:
        out_data = out_data + b.data

    def bw(g):
        gcol = g @ w.data.T
        gw = col2.T @ g
        gxp = np.zeros_like(xp)
        for j in range(kernel):
            gxp[j * dilation:j * dilation + t_len] += gcol[:, j * c_in:(j + 1) * c_in]
        gx = gxp[pad:pad + t_len]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    inputs = (x, w) if b is None else (x, w, b)
    return _make(out_data, inputs, bw, "conv1d")


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor, tape: Tape) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar loss over the given tape.

    Returns a map param-name -> gradient for every Parameter that appears on
    the tape (zeros for parameters unreachable from the loss).  Non-parameter
    leaf tensors with requires_grad get their gradient stored in ``.grad``.
    """
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss")

    params: dict[str, Parameter] = {}
    leaves: dict[int, Tensor] = {}
    loss_on_tape = False
    for node in tape.nodes:
        if node.out is loss:
            loss_on_tape = True
        for x in node.inputs:
            if isinstance(x, Parameter):
                params[x.name] = x
            elif x.is_leaf and x.requires_grad:
                leaves[id(x)] = x

    if not loss_on_tape:
        warnings.warn("loss is not connected to this tape; all gradients are zero")
        for p in params.values():
            p.grad = np.zeros_like(p.data)
        for t in leaves.values():
            t.grad = np.zeros_like(t.data)
        return {name: np.zeros_like(p.data) for name, p in params.items()}

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        gout = grads.pop(id(node.out), None)
        if gout is None:
            continue
        for x, g in zip(node.inputs, node.backward_fn(gout)):
            if g is None or not x.requires_grad:
                continue
            acc = grads.get(id(x))
            grads[id(x)] = g if acc is None else acc + g

    out: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads.get(id(p))
        p.grad = np.zeros_like(p.data) if g is None else g.reshape(p.data.shape)
        out[name] = p.grad
    for t in leaves.values():
        g = grads.get(id(t))
        t.grad = np.zeros_like(t.data) if g is None else g.reshape(t.data.shape)
    return out
