"""Dense tensors with reverse-mode automatic differentiation.

Every tensor wraps a numpy buffer. Ops record their parents and a backward
closure; ``Tensor.backward`` walks the tape in reverse topological order and
accumulates gradients. The gradient kernels are module-level functions so a
test can swap one out (fault injection for the gradient-check suite).
"""

from __future__ import annotations

import math
import os
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

_PRECISIONS = {"f32": np.float32, "f64": np.float64}
_dtype = _PRECISIONS[os.environ.get("FFTAT_PRECISION", "f32")]


def set_precision(name: str) -> None:
    global _dtype
    if name not in _PRECISIONS:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_PRECISIONS)}")
    _dtype = _PRECISIONS[name]


def get_precision() -> str:
    return "f64" if _dtype == np.float64 else "f32"


def default_dtype():
    return _dtype


@contextmanager
def precision(name: str):
    """Temporarily switch the global float precision."""
    old = get_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(old)


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "stop", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, op: str = "leaf"):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or _dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.stop = False
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.stop or not self.requires_grad:
            return
        if g.shape != self.data.shape:
            raise ShapeError(f"grad shape {g.shape} != data shape {self.data.shape} in {self.op}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad or parent.stop:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data, dtype=data.dtype if isinstance(data, np.ndarray) else None, op=op)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)), "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only where the input is inside."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


_GELU_C = math.sqrt(2.0 / math.pi)


def _gelu_grad(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    u = _GELU_C * (x + 0.044715 * (x * x * x))
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def gelu(a) -> Tensor:
    """GELU, tanh approximation."""
    a = as_tensor(a)
    x = a.data
    out = 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * (x * x * x))))
    return _make(out, (a,), lambda g: (_gelu_grad(x, g),), "gelu")


# ---------------------------------------------------------------- reductions


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / float(n))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    if b.ndim == 2 and a.ndim > 2:
        # one flat GEMM instead of a broadcast loop over leading axes
        a2 = a.data.reshape(-1, a.shape[-1])
        out = (a2 @ b.data).reshape(*a.shape[:-1], b.shape[-1])

        def backward_flat(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return _make(out, (a, b), backward_flat, "matmul")

    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _make(out, (a, b), backward, "matmul")


def _softmax_grad(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    return y * (g - (g * y).sum(axis=-1, keepdims=True))


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    # looked up at call time so tests can patch the kernel
    return _make(y, (a,), lambda g: (_softmax_grad(y, g),), "softmax")


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    y = np.exp(out)
    return _make(out, (a,), lambda g: (g - y * g.sum(axis=-1, keepdims=True),), "log_softmax")


def _layer_norm_grad(xhat, inv, gamma, g):
    gx = g * gamma
    n = xhat.shape[-1]
    return inv / n * (n * gx - gx.sum(-1, keepdims=True)
                      - xhat * (gx * xhat).sum(-1, keepdims=True))


def layer_norm(x, gamma, beta, eps: float = 1e-6) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm: input {x.shape} vs scale {gamma.shape} / offset {beta.shape}")
    mu = x.data.mean(-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        return (_layer_norm_grad(xhat, inv, gamma.data, g),
                (g * xhat).sum(axis=lead), g.sum(axis=lead))

    return _make(out, (x, gamma, beta), backward, "layer_norm")


# ---------------------------------------------------------------- shape ops


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(a.data[idx]), (a,), backward, "slice")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, ts, backward, "concat")


# ---------------------------------------------------------------- gradient control


def stop_gradient(a) -> Tensor:
    """Same value, but no gradient ever reaches anything upstream."""
    a = as_tensor(a)
    out = Tensor(a.data, dtype=a.data.dtype, op="stop_gradient")
    out.stop = True
    return out


def gradient_reversal(a, lam: float = 1.0) -> Tensor:
    """Identity forward; backward scales the incoming gradient by ``-lam``."""
    if lam < 0:
        raise ValueError(f"gradient_reversal: lambda must be >= 0, got {lam}")
    a = as_tensor(a)
    return _make(a.data, (a,), lambda g: (-lam * g,), "grl")


# ---------------------------------------------------------------- finite differences


def numeric_grad(f: Callable[[], Tensor], param: Tensor, eps: float) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``param`` (perturbed in place)."""
    flat = param.data.reshape(-1)
    out = np.zeros(flat.shape, dtype=np.float64)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        fp = float(f().data)
        flat[k] = orig - eps
        fm = float(f().data)
        flat[k] = orig
        out[k] = (fp - fm) / (2.0 * eps)
    return out.reshape(param.shape)


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6,
               references: Sequence[Callable[[], Tensor]] | None = None) -> float:
    """Max relative error between backprop gradients and central differences.

    ``f`` builds a scalar from the current contents of ``params``. The error
    per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    ``references`` optionally supplies, per parameter, the scalar whose finite
    differences the analytic gradient should match (used where gradient
    reversal makes backprop differ from the gradient of ``f`` itself).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    for i, p in enumerate(params):
        if not np.all(np.isfinite(p.data)):
            raise NonFiniteError(f"parameter {i} contains non-finite values")
        p.requires_grad = True
        p.grad = None
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("objective is non-finite at the base point")
    loss.backward()
    worst = 0.0
    for i, p in enumerate(params):
        analytic = np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64)
        ref = f if references is None else references[i]
        numeric = numeric_grad(ref, p, eps)
        if not np.all(np.isfinite(numeric)):
            raise NonFiniteError(f"non-finite finite-difference value for parameter {i}")
        err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
        worst = max(worst, float(err.max(initial=0.0)))
    return worst


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
