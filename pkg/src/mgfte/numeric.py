"""Minimal dense-tensor autodiff on top of numpy.

Every op records its parents and a closure that pushes the upstream
gradient back to them.  ``Tensor.backward`` walks the graph in reverse
topological order.  The graph built by one forward pass plays the role of
a gradient tape: build it, call ``backward`` once, throw it away.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100  # keep ndarray.__radd__ etc. from hijacking mixed ops

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar tensor")
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
                # leaf: accumulate
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in node._backward(g):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

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
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self) -> Tensor:
        return transpose(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # constants adopt the dtype of the tensor operand
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape)))

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return (
            (a, _unbroadcast(g * b.data, a.shape)),
            (b, _unbroadcast(g * a.data, b.shape)),
        )

    return _result(a.data * b.data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = x.data > 0

    def backward(g):
        return ((x, g * mask),)

    return _result(np.where(mask, x.data, 0.0).astype(x.dtype), (x,), backward)


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)

    def backward(g):
        return ((x, g * sign),)

    return _result(np.abs(x.data), (x,), backward)


def square(x: Tensor) -> Tensor:
    def backward(g):
        return ((x, 2.0 * g * x.data),)

    return _result(x.data * x.data, (x,), backward)


# ---------------------------------------------------------------- shape ops

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ((a, _unbroadcast(ga, a.shape)), (b, _unbroadcast(gb, b.shape)))

    return _result(a.data @ b.data, (a, b), backward)


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""

    def backward(g):
        return ((x, np.swapaxes(g, -1, -2)),)

    return _result(np.swapaxes(x.data, -1, -2), (x,), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    def backward(g):
        return ((x, g.reshape(x.shape)),)

    return _result(x.data.reshape(shape), (x,), backward)


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)

    def backward(g):
        return ((x, _unbroadcast(g, x.shape)),)

    return _result(np.broadcast_to(x.data, shape).copy(), (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty list")
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != ax
        ):
            raise ValueError(f"concat shape mismatch along axis {axis}: {[t.shape for t in tensors]}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(zip(tensors, np.split(g, sizes, axis=ax)))

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        parts = np.moveaxis(g, axis, 0)
        return tuple((t, parts[i]) for i, t in enumerate(tensors))

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def getitem(x: Tensor, idx) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return ((x, full),)

    return _result(x.data[idx], (x,), backward)


# ---------------------------------------------------------------- reductions

def reduce_sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g, x.shape).copy()),)

    return _result(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    # divides the sum rather than scaling by 1/n, so results match np.mean bit for bit
    n = x.data.size if axis is None else x.shape[axis]
    out = np.mean(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g / n, x.shape).copy()),)

    return _result(out, (x,), backward)


def max_pool(x: Tensor, axis: int = -2) -> Tensor:
    """Max over one axis; the gradient goes to the first maximal index."""
    if x.shape[axis] == 0:
        raise ValueError("max_pool over an empty axis")
    arg = np.argmax(x.data, axis=axis)  # argmax returns the first maximum
    out = np.take_along_axis(x.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return ((x, full),)

    return _result(out, (x,), backward)


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.shape[axis] == 0:
        raise ValueError("logsumexp of an empty input")
    m = np.max(x.data, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x.data - m_safe)
    s = np.sum(e, axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out_keep = np.log(s) + m_safe
    out = out_keep.squeeze(axis)

    def backward(g):
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(np.isfinite(out_keep), np.exp(x.data - out_keep), 0.0)
        return ((x, np.expand_dims(g, axis) * w),)

    return _result(out, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return ((x, y * (g - np.sum(g * y, axis=axis, keepdims=True))),)

    return _result(y, (x,), backward)


def softmax_axis(x: Tensor, axis: str) -> Tensor:
    """Softmax of a matrix along ``"rows"`` (each row sums to 1) or ``"cols"``."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ValueError(f"softmax_axis expects a rank-2 tensor, got shape {x.shape}")
    if axis == "rows":
        return softmax(x, axis=1)
    if axis == "cols":
        return softmax(x, axis=0)
    raise ValueError(f"axis must be 'rows' or 'cols', got {axis!r}")


def pairwise_sq_euclidean(a: Tensor, b: Tensor) -> Tensor:
    """``out[..., i, j] = ||a[..., i, :] - b[..., j, :]||^2``."""
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"feature width mismatch: {a.shape} vs {b.shape}")
    diff = sub(reshape(a, a.shape[:-1] + (1, a.shape[-1])), reshape(b, b.shape[:-2] + (1,) + b.shape[-2:]))
    return reduce_sum(square(diff), axis=-1)


def sq_euclidean(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"sq_euclidean needs equal-length vectors, got {x.shape} and {y.shape}")
    return reduce_sum(square(sub(x, y)))


# ---------------------------------------------------------------- gradient check

@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    n_checked: int = 0
    nonfinite: list[str] = field(default_factory=list)

    def passed(self, tolerance: float) -> bool:
        return not self.nonfinite and self.max_rel_error < tolerance


def grad_check(
    loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    names: Iterable[str] | None = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients against central finite differences.

    Every finite entry of every parameter is perturbed in place.  Relative
    error is ``|g_ad - g_fd| / max(|g_ad| + |g_fd|, 1e-8)``, so entries with
    a true zero gradient are judged in absolute terms.  Non-finite loss
    values at a perturbed point are listed in ``report.nonfinite``.
    """
    for t in params.values():
        if t.dtype != np.float64:
            raise TypeError("grad_check runs at 64-bit precision only")
        t.grad = None
    loss = loss_fn(params)
    if not np.isfinite(loss.item()):
        raise FloatingPointError(f"loss is not finite at the base point: {loss.item()}")
    loss.backward()

    report = GradCheckReport(max_rel_error=0.0)
    for name in names if names is not None else params:
        t = params[name]
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = 0.0
        flat = t.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            if not math.isfinite(orig):
                continue
            flat[j] = orig + step
            plus = loss_fn(params).item()
            flat[j] = orig - step
            minus = loss_fn(params).item()
            flat[j] = orig
            if not (math.isfinite(plus) and math.isfinite(minus)):
                report.nonfinite.append(f"{name}[{j}]")
                continue
            numeric = (plus - minus) / (2 * step)
            a = float(analytic.reshape(-1)[j])
            err = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-8)
            worst = max(worst, err)
            report.n_checked += 1
        report.per_param[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    for t in params.values():
        t.grad = None
    return report
