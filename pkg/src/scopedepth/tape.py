"""Minimal reverse-mode autodiff over numpy arrays.

A ``Tensor`` records the operation graph as it is built; ``backward()``
replays it in exact reverse topological order, accumulating leaf gradients
additively.  The op set is deliberately closed and small: elementwise
arithmetic, exp/log/softplus/sigmoid/silu/sqrt, 2-D matmul, reshape /
transpose, axis reductions, bilinear resize, and terminal value+gradient
nodes for the loss functions.  Every op is checked against central finite
differences in the test suite.

The module-level helpers (``exp``, ``matmul``, ...) dispatch on input type
so the same forward code can run on raw arrays (inference) or Tensors
(training).
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

__all__ = [
    "Tensor",
    "exp",
    "log",
    "softplus",
    "sigmoid",
    "silu",
    "sqrt",
    "matmul",
    "reshape",
    "transpose",
    "reduce_sum",
    "reduce_mean",
    "bilinear_resize",
    "avg_pool2",
    "patchify",
    "loss_node",
    "resize_weights",
]

ArrayLike = "np.ndarray | Tensor"


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _np_softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _np_sigmoid(x: np.ndarray) -> np.ndarray:
    return special.expit(x)


class Tensor:
    """A numpy array plus the recorded parents needed for reverse mode."""

    __slots__ = ("data", "grad", "_parents")

    # Make numpy defer to the reflected operators instead of building
    # object arrays when an ndarray meets a Tensor.
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(
        self,
        data,
        parents: Sequence[tuple["Tensor", Callable[[np.ndarray], np.ndarray]]] = (),
    ) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(parents)

    # -- graph plumbing ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        """Accumulate gradients into every reachable node.

        ``seed`` defaults to ones (useful only for scalar outputs).
        """
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(topo):
            if node.grad is None:
                continue
            for parent, vjp in node._parents:
                contrib = vjp(node.grad)
                parent.grad = contrib if parent.grad is None else parent.grad + contrib

    # -- elementwise arithmetic --------------------------------------------

    @staticmethod
    def _lift(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = self._lift(other)
        return Tensor(
            self.data + other.data,
            (
                (self, lambda g: _unbroadcast(g, self.data.shape)),
                (other, lambda g: _unbroadcast(g, other.data.shape)),
            ),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, ((self, lambda g: -g),))

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        return Tensor(
            a * b,
            (
                (self, lambda g: _unbroadcast(g * b, a.shape)),
                (other, lambda g: _unbroadcast(g * a, b.shape)),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        return Tensor(
            a / b,
            (
                (self, lambda g: _unbroadcast(g / b, a.shape)),
                (other, lambda g: _unbroadcast(-g * a / (b * b), b.shape)),
            ),
        )

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, exponent: float):
        a = self.data
        return Tensor(
            a**exponent,
            ((self, lambda g: g * exponent * a ** (exponent - 1)),),
        )

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError(f"matmul supports 2-D operands, got {a.shape} @ {b.shape}")
        return Tensor(
            a @ b,
            (
                (self, lambda g: g @ b.T),
                (other, lambda g: a.T @ g),
            ),
        )

    # -- nonlinearities ------------------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return Tensor(out, ((self, lambda g: g * out),))

    def log(self):
        a = self.data
        return Tensor(np.log(a), ((self, lambda g: g / a),))

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor(out, ((self, lambda g: g * 0.5 / out),))

    def softplus(self):
        s = _np_sigmoid(self.data)
        return Tensor(_np_softplus(self.data), ((self, lambda g: g * s),))

    def sigmoid(self):
        s = _np_sigmoid(self.data)
        return Tensor(s, ((self, lambda g: g * s * (1.0 - s)),))

    def silu(self):
        s = _np_sigmoid(self.data)
        a = self.data
        return Tensor(a * s, ((self, lambda g: g * (s + a * s * (1.0 - s))),))

    # -- shape and reductions -------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        orig = self.data.shape
        return Tensor(self.data.reshape(shape), ((self, lambda g: g.reshape(orig)),))

    def transpose(self, axes: Sequence[int]):
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))
        return Tensor(self.data.transpose(axes), ((self, lambda g: g.transpose(inverse)),))

    def sum(self, axis=None, keepdims: bool = False):
        if axis is not None and not isinstance(axis, int):
            raise ValueError("sum supports a single integer axis")
        a = self.data

        def vjp(g: np.ndarray) -> np.ndarray:
            if axis is None:
                return np.full(a.shape, g)
            gg = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(gg, a.shape).copy()

        return Tensor(a.sum(axis=axis, keepdims=keepdims), ((self, vjp),))

    def mean(self, axis=None, keepdims: bool = False):
        if axis is not None and not isinstance(axis, int):
            raise ValueError("mean supports a single integer axis")
        a = self.data
        count = a.size if axis is None else a.shape[axis]

        def vjp(g: np.ndarray) -> np.ndarray:
            if axis is None:
                return np.full(a.shape, np.asarray(g) / count)
            gg = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(gg / count, a.shape).copy()

        return Tensor(a.mean(axis=axis, keepdims=keepdims), ((self, vjp),))


# -- dual-backend helpers -----------------------------------------------------


def exp(x):
    return x.exp() if isinstance(x, Tensor) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, Tensor) else np.log(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Tensor) else np.sqrt(x)


def softplus(x):
    return x.softplus() if isinstance(x, Tensor) else _np_softplus(np.asarray(x, dtype=np.float64))


def sigmoid(x):
    return x.sigmoid() if isinstance(x, Tensor) else _np_sigmoid(np.asarray(x, dtype=np.float64))


def silu(x):
    if isinstance(x, Tensor):
        return x.silu()
    x = np.asarray(x, dtype=np.float64)
    return x * _np_sigmoid(x)


def matmul(a, b):
    if isinstance(a, Tensor) or isinstance(b, Tensor):
        return Tensor._lift(a) @ Tensor._lift(b)
    return a @ b


def reshape(x, shape):
    return x.reshape(shape) if isinstance(x, Tensor) else np.reshape(x, shape)


def transpose(x, axes):
    return x.transpose(axes) if isinstance(x, Tensor) else np.transpose(x, axes)


def reduce_sum(x, axis=None, keepdims: bool = False):
    return x.sum(axis=axis, keepdims=keepdims) if isinstance(x, Tensor) else np.sum(x, axis=axis, keepdims=keepdims)


def reduce_mean(x, axis=None, keepdims: bool = False):
    return x.mean(axis=axis, keepdims=keepdims) if isinstance(x, Tensor) else np.mean(x, axis=axis, keepdims=keepdims)


@lru_cache(maxsize=128)
def resize_weights(size_in: int, size_out: int) -> np.ndarray:
    """1-D bilinear interpolation matrix (size_out x size_in), half-pixel centers."""
    w = np.zeros((size_out, size_in))
    if size_in == 1:
        w[:, 0] = 1.0
        return w
    ratio = size_in / size_out
    for i in range(size_out):
        src = (i + 0.5) * ratio - 0.5
        lo = int(np.floor(src))
        frac = src - lo
        lo_c = min(max(lo, 0), size_in - 1)
        hi_c = min(max(lo + 1, 0), size_in - 1)
        w[i, lo_c] += 1.0 - frac
        w[i, hi_c] += frac
    w.flags.writeable = False
    return w


def bilinear_resize(x, out_hw: tuple[int, int]):
    """Bilinear resize of an (H, W, C) grid to (out_h, out_w, C).

    Implemented as two constant interpolation matrices, so the gradient is
    the exact adjoint.
    """
    h_out, w_out = out_hw
    shape = x.shape
    if len(shape) != 3:
        raise ValueError(f"expected (H, W, C), got {shape}")
    h_in, w_in, c = shape
    if (h_in, w_in) == (h_out, w_out):
        return x
    rows = resize_weights(h_in, h_out)
    cols = resize_weights(w_in, w_out)

    if not isinstance(x, Tensor):
        return np.einsum("oh,hwc,pw->opc", rows, x, cols, optimize=True)

    data = np.einsum("oh,hwc,pw->opc", rows, x.data, cols, optimize=True)

    def vjp(g: np.ndarray) -> np.ndarray:
        # adjoint of the separable interpolation: rows^T g cols
        return np.einsum("ho,opc,wp->hwc", rows.T, g, cols.T, optimize=True)

    return Tensor(data, ((x, vjp),))


def avg_pool2(x):
    """2x2 average pooling of an (H, W, C) grid; H and W must be even."""
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    blocked = reshape(x, (h // 2, 2, w // 2, 2, c))
    return reduce_mean(reduce_mean(blocked, axis=3), axis=1)


def patchify(x, patch: int):
    """(H, W, C) -> (H/p * W/p, p*p*C) token grid."""
    h, w, c = x.shape
    if h % patch or w % patch:
        raise ValueError(f"patch size {patch} does not divide {h}x{w}")
    blocked = reshape(x, (h // patch, patch, w // patch, patch, c))
    ordered = transpose(blocked, (0, 2, 1, 3, 4))
    return reshape(ordered, (h // patch * (w // patch), patch * patch * c))


def loss_node(value: float, inputs: Sequence[Tensor], grads: Sequence[np.ndarray]) -> Tensor:
    """Terminal scalar node with externally supplied analytic gradients.

    ``grads[i]`` must be d(value)/d(inputs[i]); backward multiplies it by
    the upstream scalar gradient.
    """
    if len(inputs) != len(grads):
        raise ValueError("inputs and grads must align")
    parents = []
    for inp, gr in zip(inputs, grads):
        arr = np.asarray(gr, dtype=np.float64)
        if arr.shape != inp.data.shape:
            raise ValueError(f"gradient shape {arr.shape} != input shape {inp.data.shape}")
        parents.append((inp, lambda g, a=arr: np.asarray(g) * a))
    return Tensor(np.asarray(float(value)), parents)
