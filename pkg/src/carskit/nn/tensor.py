"""Reverse-mode automatic differentiation over numpy arrays.

Every op returns a new :class:`Tensor` holding a closure that maps the
output gradient to its inputs' gradients (a vector-Jacobian product).
``Tensor.backward`` walks the tape in reverse topological order.

Arrays are float64 throughout.  Activations follow the
``(batch, channels, length)`` layout.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import signal_ops
from ..errors import CarsKitError, DataError
from ..signal_ops import LinearOpTag


class TapeError(CarsKitError, RuntimeError):
    """Misuse of the autodiff tape (e.g. running backward twice)."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        name: str | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward
        self._consumed = False
        self.name = name

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Populate ``.grad`` of every upstream tensor that requires it."""
        if self.data.size != 1:
            raise TapeError(f"backward needs a scalar output, got shape {self.shape}")
        if self._consumed:
            raise TapeError("backward already ran on this graph; run a fresh forward pass")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node._parents)

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if node._backward is None:
                if g is not None:
                    node._accumulate(g)
                continue
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        self._consumed = True

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

    def __pow__(self, p):
        if p != 2:
            raise NotImplementedError("only squaring is supported")
        return square(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    """A learnable leaf tensor."""
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)


def _node(data, parents, backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, needs, parents if needs else (), backward if needs else None)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.logaddexp(0.0, a.data), (a,), lambda g: (g * _sigmoid(a.data),))


# -- reductions and shape ------------------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _node(out, (a,), back)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def select_channel(a, index: int) -> Tensor:
    """``a[:, index, :]`` for a (batch, channels, length) tensor."""
    a = as_tensor(a)

    def back(g):
        full = np.zeros_like(a.data)
        full[:, index, :] = g
        return (full,)

    return _node(a.data[:, index, :], (a,), back)


# -- layers ---------------------------------------------------------------------

def conv1d(x, weight, bias=None) -> Tensor:
    """Stride-1, 'same'-padded 1-D cross-correlation.

    ``x``: (B, C, L); ``weight``: (O, C, K) with K odd; ``bias``: (O,).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    B, C, L = x.shape
    O, C_w, K = weight.shape
    if C_w != C:
        raise DataError(f"conv1d: input has {C} channels, weight expects {C_w}")
    if K % 2 == 0:
        raise DataError(f"conv1d: kernel size must be odd, got {K}")
    pad = K // 2
    if K == 1:
        cols = x.data.transpose(0, 2, 1).reshape(B * L, C)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
        # (B, C, L, K) -> (B, L, C, K) -> (B*L, C*K)
        cols = sliding_window_view(xp, K, axis=2).transpose(0, 2, 1, 3).reshape(B * L, C * K)
    wmat = weight.data.reshape(O, C * K)
    out = cols @ wmat.T
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data
    out = out.reshape(B, L, O).transpose(0, 2, 1)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g2 = g.transpose(0, 2, 1).reshape(B * L, O)
        gw = (g2.T @ cols).reshape(O, C, K) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(B, L, C, K)
            if K == 1:
                gx = dcols[..., 0].transpose(0, 2, 1)
            else:
                # col2im in channels-last layout, then back to (B, C, L)
                gxp = np.zeros((B, L + 2 * pad, C))
                for k in range(K):
                    gxp[:, k : k + L, :] += dcols[:, :, :, k]
                gx = gxp[:, pad : pad + L, :].transpose(0, 2, 1)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return _node(out, parents, back)


def dropout(x, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: kept units are scaled by ``1 / (1 - p)`` at train time."""
    x = as_tensor(x)
    if not 0 <= p < 1:
        raise DataError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0:
        return x
    if rng is None:
        raise DataError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _node(x.data * mask, (x,), lambda g: (g * mask,))


def linear_op(x, tag: LinearOpTag) -> Tensor:
    """Apply a tagged linear spectral operator along the last axis.

    The backward pass applies the operator's adjoint.
    """
    x = as_tensor(x)
    return _node(signal_ops.apply(tag, x.data), (x,), lambda g: (signal_ops.apply_adjoint(tag, g),))
