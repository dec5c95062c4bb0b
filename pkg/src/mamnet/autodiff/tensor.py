"""Tensor type and the reverse-mode engine.

Every op result remembers its parents and a closure that maps the output
gradient to parent gradients.  Results carry a monotonically increasing
sequence number, so sorting reachable nodes by it (descending) replays the
chain rule in reverse execution order.
"""
from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_counter = itertools.count()
_state = threading.local()


def default_dtype() -> np.dtype:
    return getattr(_state, "dtype", np.dtype(np.float32))


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily change the dtype new tensors are created with.

    Float64 is used by the gradient checker; everything else runs float32.
    """
    prev = default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = prev


class NonFiniteError(FloatingPointError):
    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by op '{op}'")
        self.op = op


@contextlib.contextmanager
def check_finite(enabled: bool = True) -> Iterator[None]:
    prev = getattr(_state, "check_finite", False)
    _state.check_finite = enabled
    try:
        yield
    finally:
        _state.check_finite = prev


@contextlib.contextmanager
def record() -> Iterator[list]:
    """Collect the names of ops executed inside the block, in order."""
    prev = getattr(_state, "trace", None)
    trace: list = []
    _state.trace = trace
    try:
        yield trace
    finally:
        _state.trace = prev


@contextlib.contextmanager
def record_branches() -> Iterator[list]:
    """Collect the branch masks of piecewise ops (relu, clamp) run inside the block.

    Two evaluations with equal lists took the same linear piece everywhere.
    """
    prev = getattr(_state, "branches", None)
    branches: list = []
    _state.branches = branches
    try:
        yield branches
    finally:
        _state.branches = prev


def note_branch(mask: np.ndarray) -> None:
    branches = getattr(_state, "branches", None)
    if branches is not None:
        branches.append(np.packbits(mask).tobytes())


_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or default_dtype())
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.op = "leaf"
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self._seq = next(_counter)

    @property
    def shape(self) -> tuple:
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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self.shape)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        backward(self)

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.neg(self)


def _raise_item(shape):
    raise ValueError(f"item() needs a single-element tensor, got shape {shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    op: str,
) -> Tensor:
    """Wrap an op's forward output and hook it into the graph."""
    trace = getattr(_state, "trace", None)
    if trace is not None:
        trace.append(op)
    if getattr(_state, "check_finite", False) and not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out._seq = next(_counter)
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    nodes = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in nodes:
            continue
        nodes[id(node)] = node
        stack.extend(p for p in node._parents if p.requires_grad)
    order = sorted(nodes.values(), key=lambda n: n._seq, reverse=True)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in order:
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
