"""Dense tensor with a tape-based reverse-mode autodiff."""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

DTYPE = np.float64


class _TapeState(threading.local):
    def __init__(self):
        self.nodes = []
        self.enabled = True


_state = _TapeState()


class _Node:
    __slots__ = ("out", "parents", "backward", "op")

    def __init__(self, out, parents, backward, op):
        self.out = out
        self.parents = parents
        self.backward = backward
        self.op = op


class Tensor:
    """A float64 array plus an optional gradient.

    Operations on tensors with ``requires_grad`` are recorded on the
    thread-local tape; :meth:`backward` replays it in reverse and clears it.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=DTYPE)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self):
        return self.shape[0]

    def backward(self, grad=None):
        """Accumulate gradients of this tensor into every reachable input."""
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=DTYPE).reshape(self.shape)
        nodes = _state.nodes
        try:
            for node in reversed(nodes):
                g = node.out.grad
                if g is None:
                    continue
                grads = node.backward(g)
                for parent, pg in zip(node.parents, grads):
                    if pg is None or not parent.requires_grad:
                        continue
                    pg = _unbroadcast(pg, parent.shape)
                    parent.grad = pg if parent.grad is None else parent.grad + pg
        finally:
            nodes.clear()

    # operators are bound in ops.py to avoid an import cycle


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def grad_enabled():
    return _state.enabled


def record(out_data, parents, backward, op=""):
    """Wrap ``out_data`` and put it on the tape if any parent needs a gradient."""
    needs = _state.enabled and any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        _state.nodes.append(_Node(out, tuple(parents), backward, op))
    return out


@contextmanager
def no_grad():
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def clear_tape():
    _state.nodes.clear()


def tape_size():
    return len(_state.nodes)


def tape_ops():
    return [n.op for n in _state.nodes]
