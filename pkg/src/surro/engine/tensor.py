"""Tape-free dynamic graph: every op output remembers its parents and a
closure mapping the output gradient to parent gradients."""
from __future__ import annotations

import contextlib

import numpy as np

from ..errors import InvalidArgument, ShapeError, StaleTape

MAX_DIMS = 3

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_leaf", "_consumed", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim > MAX_DIMS:
            raise ShapeError(f"tensors are limited to {MAX_DIMS} dims, got {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._leaf = True
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # elementwise sugar; implementations live in functional
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.add(self, F.neg(as_tensor(other)))

    def __rsub__(self, other):
        from . import functional as F
        return F.add(as_tensor(other), F.neg(self))

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import functional as F
        return F.neg(self)

    def __pow__(self, exponent: float):
        from . import functional as F
        return F.power(self, exponent)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    """Wrap an op result, recording the graph edge when any parent is tracked.

    ``backward_fn(g)`` returns one gradient (or None) per parent.
    """
    if data.ndim > MAX_DIMS:
        raise ShapeError(f"op produced {data.ndim}-dim result")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._leaf = False
    out._consumed = False
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Reverse-mode accumulation into ``.grad`` of every tracked leaf.

    The recorded graph is released afterwards; a second call on the same
    output raises StaleTape.
    """
    if loss._consumed:
        raise StaleTape("graph already consumed by a previous backward(); re-run forward")
    if not loss.requires_grad:
        raise InvalidArgument("output is not attached to any tracked tensor")
    if loss.data.size != 1:
        raise ShapeError("backward() needs a scalar output")
    order = _topo_order(loss)
    for node in order:
        if not node._leaf and node._backward is None:
            raise StaleTape("graph already consumed by a previous backward(); re-run forward")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._leaf:
            if g is not None:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is not None:
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if pg.shape != p.data.shape:
                    raise ShapeError(f"gradient shape {pg.shape} != {p.data.shape}")
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        node._backward = None
        node._parents = ()
        node._consumed = True
    loss._consumed = True
