"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps an ndarray and records, for every operation that produced
it, its parent tensors together with vector-Jacobian-product closures.
``backward()`` walks the graph once in reverse topological order and
accumulates gradients; a tensor consumed by k operations receives the sum of
the k contributions. Repeated ``backward()`` calls without ``zero grad``
accumulate into ``.grad``, which is what optimizers expect.

Floating dtype is preserved through every operation: models run in float32,
gradient checks may build float64 graphs.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """N-dimensional array node in a reverse-mode differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        # tuple of (parent Tensor, vjp: out_grad -> parent_grad)
        self._parents = ()

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        live = tuple((p, vjp) for p, vjp in parents if p.requires_grad)
        out.requires_grad = bool(live)
        out._parents = live
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values, cut out of the graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- backward pass ---------------------------------------------------------

    def backward(self):
        """Populate ``.grad`` for every reachable requires_grad tensor.

        Only defined for scalar outputs; seeds with d(out)/d(out) = 1.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            for parent, vjp in node._parents:
                pg = vjp(g)
                acc = pending.get(id(parent))
                pending[id(parent)] = pg if acc is None else acc + pg

    # -- arithmetic -------------------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))

    def __add__(self, other):
        other = Tensor._lift(other)
        a, b = self.data, other.data
        return Tensor._from_op(a + b, [
            (self, lambda g: _unbroadcast(g, a.shape)),
            (other, lambda g: _unbroadcast(g, b.shape)),
        ])

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._lift(other)
        a, b = self.data, other.data
        return Tensor._from_op(a - b, [
            (self, lambda g: _unbroadcast(g, a.shape)),
            (other, lambda g: _unbroadcast(-g, b.shape)),
        ])

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __neg__(self):
        return Tensor._from_op(-self.data, [(self, lambda g: -g)])

    def __mul__(self, other):
        other = Tensor._lift(other)
        a, b = self.data, other.data
        return Tensor._from_op(a * b, [
            (self, lambda g: _unbroadcast(g * b, a.shape)),
            (other, lambda g: _unbroadcast(g * a, b.shape)),
        ])

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        a, b = self.data, other.data
        return Tensor._from_op(a / b, [
            (self, lambda g: _unbroadcast(g / b, a.shape)),
            (other, lambda g: _unbroadcast(-g * a / (b * b), b.shape)),
        ])

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        a = self.data
        out = a ** exponent
        return Tensor._from_op(out, [
            (self, lambda g: g * exponent * a ** (exponent - 1)),
        ])

    def __matmul__(self, other):
        other = Tensor._lift(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeError("matmul", "ndim", "2-D operands", (a.ndim, b.ndim))
        if a.shape[1] != b.shape[0]:
            raise ShapeError("matmul", "inner axis", a.shape[1], b.shape[0])
        return Tensor._from_op(a @ b, [
            (self, lambda g: g @ b.T),
            (other, lambda g: a.T @ g),
        ])

    # -- reductions ---------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self.data
        out = a.sum(axis=axis, keepdims=keepdims, dtype=a.dtype)

        def vjp(g):
            if axis is None:
                return np.broadcast_to(g, a.shape).astype(a.dtype, copy=True)
            gg = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(gg, a.shape).astype(a.dtype, copy=True)

        return Tensor._from_op(np.asarray(out), [(self, vjp)])

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self.data
        n = a.size if axis is None else np.prod(
            [a.shape[ax] for ax in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- elementwise functions ------------------------------------------------------

    def log(self) -> "Tensor":
        a = self.data
        return Tensor._from_op(np.log(a), [(self, lambda g: g / a)])

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._from_op(out, [(self, lambda g: g * out)])

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return Tensor._from_op(out, [(self, lambda g: g * (0.5 / out))])

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor._from_op(out, [(self, lambda g: g * (1.0 - out * out))])

    def sigmoid(self) -> "Tensor":
        out = 1.0 / (1.0 + np.exp(-self.data))
        return Tensor._from_op(out, [(self, lambda g: g * out * (1.0 - out))])

    def leaky_relu(self, slope: float = 0.2) -> "Tensor":
        a = self.data
        scale = np.where(a >= 0, a.dtype.type(1.0), a.dtype.type(slope))
        return Tensor._from_op(a * scale, [(self, lambda g: g * scale)])

    def relu(self) -> "Tensor":
        return self.leaky_relu(0.0)

    def clip(self, lo: float, hi: float) -> "Tensor":
        """Clamp values; subgradient is identity inside [lo, hi], zero outside."""
        a = self.data
        inside = ((a >= lo) & (a <= hi)).astype(a.dtype)
        return Tensor._from_op(np.clip(a, lo, hi), [(self, lambda g: g * inside)])

    # -- shape manipulation ------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self.data
        return Tensor._from_op(a.reshape(shape), [
            (self, lambda g: g.reshape(a.shape)),
        ])


def concat(tensors, axis: int = 1) -> Tensor:
    """Concatenate along ``axis``; gradient splits back to the inputs."""
    tensors = [Tensor._lift(t) for t in tensors]
    datas = [t.data for t in tensors]
    ref = datas[0].shape
    for i, d in enumerate(datas[1:], start=1):
        if d.ndim != len(ref):
            raise ShapeError("concat", "ndim", len(ref), d.ndim)
        for ax in range(d.ndim):
            if ax != axis % d.ndim and d.shape[ax] != ref[ax]:
                raise ShapeError("concat", f"axis {ax}", ref[ax], d.shape[ax])
    out = np.concatenate(datas, axis=axis)
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    parents = []
    for i, t in enumerate(tensors):
        def vjp(g, i=i):
            return np.split(g, splits, axis=axis)[i]
        parents.append((t, vjp))
    return Tensor._from_op(out, parents)
