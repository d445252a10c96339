"""Reverse-mode differentiation on top of numpy arrays.

Every differentiable operation executed while gradient recording is enabled
appends a :class:`Node` to the thread's active :class:`Tape`. Calling
:func:`backward` on a scalar walks that tape once, in exact reverse order, and
deposits gradients on the leaf tensors that asked for them.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ContractError, StateError

_local = threading.local()


def _state():
    if not hasattr(_local, "grad_enabled"):
        _local.grad_enabled = True
        _local.tape = None
        _local.dtype = np.float32
    return _local


def default_dtype():
    return _state().dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the float type new tensors are created with.

    Used by gradient checks, which need float64 to resolve central
    differences; everything else runs in float32.
    """
    st = _state()
    prev = st.dtype
    st.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        st.dtype = prev


@contextlib.contextmanager
def no_grad():
    st = _state()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def is_grad_enabled() -> bool:
    return _state().grad_enabled


class Node:
    __slots__ = ("inputs", "output", "backward_fn", "tape", "index")

    def __init__(self, inputs, output, backward_fn, tape, index):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.tape = tape
        self.index = index


class Tape:
    """Ordered record of operations of one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False

    def __len__(self):
        return len(self.nodes)

    def record(self, inputs, output, backward_fn) -> Node:
        if self.consumed:
            raise StateError("cannot record onto a tape that was already consumed")
        node = Node(tuple(inputs), output, backward_fn, self, len(self.nodes))
        self.nodes.append(node)
        return node

    def __enter__(self):
        st = _state()
        self._prev = st.tape
        st.tape = self
        return self

    def __exit__(self, *exc):
        _state().tape = self._prev
        return False


def active_tape() -> Tape:
    st = _state()
    if st.tape is None or st.tape.consumed:
        st.tape = Tape()
    return st.tape


class DTensor:
    """n-dimensional float array with optional gradient tracking.

    Images use channels-first layout (C, H, W), optionally with a leading
    batch axis.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=default_dtype(), copy=True) if not (
            isinstance(data, np.ndarray) and data.dtype == default_dtype()
        ) else data
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.tape_node: Optional[Node] = None

    # basic introspection
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "DTensor":
        return DTensor(self.data, requires_grad=False)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"DTensor(shape={self.shape}{flag})"

    def backward(self):
        backward(self)

    # operator sugar, implemented in ops
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

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self):
        from . import ops
        return ops.sum(self)

    def mean(self):
        from . import ops
        return ops.mean(self)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(x) -> DTensor:
    if isinstance(x, DTensor):
        return x
    return DTensor(x)


def make_result(data: np.ndarray, inputs: Sequence[DTensor],
                backward_fn: Callable[[np.ndarray], tuple]) -> DTensor:
    """Wrap ``data`` as an op output, recording a tape node when needed.

    ``backward_fn`` maps the output gradient to a tuple with one entry per
    input (``None`` for inputs that need no gradient).
    """
    out = DTensor(np.asarray(data, dtype=default_dtype()))
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.tape_node = active_tape().record(inputs, out, backward_fn)
    return out


def backward(loss: DTensor) -> None:
    """Populate ``grad`` on every leaf reachable from the scalar ``loss``."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    node = loss.tape_node
    if node is None:
        raise StateError("loss was not produced under an active tape")
    tape = node.tape
    if tape.consumed:
        raise StateError("tape already consumed by a previous backward pass")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for n in reversed(tape.nodes[: node.index + 1]):
        g = grads.pop(id(n.output), None)
        if g is None:
            continue
        in_grads = n.backward_fn(g)
        for t, gi in zip(n.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            gi = np.asarray(gi, dtype=t.data.dtype)
            if gi.shape != t.shape:
                gi = gi.reshape(t.shape)
            if t.tape_node is None:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += gi
            else:
                prev = grads.get(id(t))
                grads[id(t)] = gi.copy() if prev is None else prev + gi
    tape.consumed = True
    for n in tape.nodes:
        n.inputs = ()
        n.backward_fn = None
    tape.nodes.clear()
    st = _state()
    if st.tape is tape:
        st.tape = None
