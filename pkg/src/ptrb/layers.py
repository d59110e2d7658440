"""Named parameter storage and the small layer functions built on it."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .numerics import Tensor, ops


class ParamStore:
    """Ordered map of trainable tensors plus non-trainable buffers.

    ``state`` holds per-parameter optimizer moments and ``step`` the number
    of optimizer updates applied so far.
    """

    def __init__(self):
        self.params = OrderedDict()
        self.buffers = OrderedDict()
        self.state = {}
        self.step = 0

    def add(self, name, value):
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def add_buffer(self, name, value):
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate buffer name {name!r}")
        self.buffers[name] = np.array(value, dtype=np.float64)
        return self.buffers[name]

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def get(self, name, default=None):
        return self.params.get(name, default)

    def __len__(self):
        return len(self.params)

    def named_parameters(self):
        return self.params.items()

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def num_parameters(self):
        return int(sum(t.size for t in self.params.values()))

    def copy(self):
        out = ParamStore()
        for k, t in self.params.items():
            out.add(k, t.data.copy())
        for k, b in self.buffers.items():
            out.add_buffer(k, b.copy())
        out.state = {k: {n: v.copy() for n, v in s.items()} for k, s in self.state.items()}
        out.step = self.step
        return out


# ------------------------------------------------------------ initializers

def init_linear(store, prefix, fan_in, fan_out, rng, bias=True):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    bound = 1.0 / np.sqrt(fan_in)
    store.add(f"{prefix}.weight", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    if bias:
        store.add(f"{prefix}.bias", rng.uniform(-bound, bound, size=fan_out))


def init_layer_norm(store, prefix, dim):
    store.add(f"{prefix}.gamma", np.ones(dim))
    store.add(f"{prefix}.beta", np.zeros(dim))


def init_batch_norm(store, prefix, dim):
    init_layer_norm(store, prefix, dim)
    store.add_buffer(f"{prefix}.running_mean", np.zeros(dim))
    store.add_buffer(f"{prefix}.running_var", np.ones(dim))


def init_mlp2(store, prefix, d_in, hidden, d_out, rng):
    init_linear(store, f"{prefix}.fc1", d_in, hidden, rng)
    init_linear(store, f"{prefix}.fc2", hidden, d_out, rng)


def init_attention(store, prefix, dim, rng):
    init_linear(store, f"{prefix}.qkv", dim, 3 * dim, rng)
    init_linear(store, f"{prefix}.proj", dim, dim, rng)


# ------------------------------------------------------------------ layers

def linear(store, prefix, x):
    return ops.linear(x, store[f"{prefix}.weight"], store.get(f"{prefix}.bias"))


def layer_norm(store, prefix, x, eps=1e-5):
    return ops.layer_norm(x, store[f"{prefix}.gamma"], store[f"{prefix}.beta"], eps)


def batch_norm(store, prefix, x, training, momentum=0.1):
    return ops.batch_norm(
        x, store[f"{prefix}.gamma"], store[f"{prefix}.beta"],
        store.buffers[f"{prefix}.running_mean"], store.buffers[f"{prefix}.running_var"],
        training, momentum,
    )


def mlp2(store, prefix, x, act=ops.gelu):
    return linear(store, f"{prefix}.fc2", act(linear(store, f"{prefix}.fc1", x)))


def multi_head_attention(store, prefix, x, heads):
    """Self-attention over the second-to-last axis of ``x`` (..., L, D)."""
    *lead, L, D = x.shape
    if D % heads:
        raise ValueError(f"channel {D} not divisible by {heads} heads")
    dh = D // heads
    nb = int(np.prod(lead)) if lead else 1
    qkv = linear(store, f"{prefix}.qkv", ops.reshape(x, (nb, L, D)))
    qkv = ops.transpose(ops.reshape(qkv, (nb, L, 3, heads, dh)), (2, 0, 3, 1, 4))
    q, k, v = qkv[0], qkv[1], qkv[2]                       # (nb, H, L, dh)
    scores = ops.matmul(q, ops.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
    attn = ops.softmax(scores, axis=-1)
    out = ops.matmul(attn, v)                              # (nb, H, L, dh)
    out = ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (nb, L, D))
    out = linear(store, f"{prefix}.proj", out)
    return ops.reshape(out, tuple(lead) + (L, D))
