"""Dense float64 tensors with reverse-mode differentiation.

A ``Tensor`` wraps a row-major ``numpy.ndarray``. Operations on tensors that
require gradients record a ``Node`` holding the parents and a closure that
maps the output gradient to parent gradients. Node ids come from a global
counter, so sorting by id descending is a valid reverse topological order.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager

import numpy as np

from ..errors import GraphError

_ids = itertools.count()
_local = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_local, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording for the current thread."""
    prev = is_grad_enabled()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = prev


class Node:
    __slots__ = ("id", "op", "parents", "backward", "consumed")

    def __init__(self, op, parents, backward):
        self.id = next(_ids)
        self.op = op
        self.parents = parents
        self.backward = backward
        self.consumed = False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node", "name", "__weakref__")
    __array_priority__ = 1000  # numpy defers binary ops to Tensor

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.node = None
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t.node = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def set_requires_grad(self, flag: bool) -> "Tensor":
        """Toggle trainability of a leaf; the gradient buffer follows the flag."""
        if self.node is not None:
            raise GraphError("only leaf tensors can change requires_grad")
        self.requires_grad = bool(flag)
        self.grad = np.zeros_like(self.data) if flag else None
        return self

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; implementations live in functional
    def __add__(self, other):
        return _F.add(self, other)

    def __radd__(self, other):
        return _F.add(other, self)

    def __sub__(self, other):
        return _F.sub(self, other)

    def __rsub__(self, other):
        return _F.sub(other, self)

    def __mul__(self, other):
        return _F.mul(self, other)

    def __rmul__(self, other):
        return _F.mul(other, self)

    def __truediv__(self, other):
        return _F.div(self, other)

    def __rtruediv__(self, other):
        return _F.div(other, self)

    def __neg__(self):
        return _F.neg(self)

    def __pow__(self, p):
        return _F.power(self, p)

    def __matmul__(self, other):
        return _F.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return _F.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return _F.mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _F.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _F.transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=np.float64), False)


def make_result(data: np.ndarray, parents: tuple, op: str, backward_fn) -> Tensor:
    """Wrap an op output, recording a node when any parent needs gradients."""
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor._wrap(data, track)
    if track:
        out.node = Node(op, parents, backward_fn)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    The traversed nodes are released afterwards, so calling this again on the
    same graph raises ``GraphError``.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    if loss.node is None:
        loss.grad += 1.0
        return

    nodes = {}
    stack = [loss.node]
    while stack:
        node = stack.pop()
        if node.id in nodes:
            continue
        if node.consumed:
            raise GraphError("graph already released by an earlier backward; run a new forward")
        nodes[node.id] = node
        for p in node.parents:
            if p.node is not None and p.requires_grad:
                stack.append(p.node)

    grads = {loss.node.id: np.ones_like(loss.data)}
    for nid in sorted(nodes, reverse=True):
        node = nodes[nid]
        g = grads.pop(nid, None)
        if g is not None:
            parent_grads = node.backward(g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if p.node is None:
                    p.grad += pg
                elif p.node.id in grads:
                    grads[p.node.id] = grads[p.node.id] + pg
                else:
                    grads[p.node.id] = pg
        node.backward = None
        node.parents = ()
        node.consumed = True


from . import functional as _F  # noqa: E402  (circular: functional imports Tensor)
