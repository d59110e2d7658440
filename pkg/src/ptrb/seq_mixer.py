"""Inter-group selective state-space (Mamba) layers and an attention baseline.

Dataflow of one layer, with ``n = LN(E)``::

    x, g   = split(n @ W_in)                 # two linear views of n
    z      = DWConv(x)                       # causal depth-wise conv
    u      = silu(z)
    delta  = softplus(dt(u)), B(u), C(u)     # input-dependent SSM params
    y      = scan(u, delta, A, B, C) + skip*u
    out    = (LN_y(y) * silu(g)) @ W_out + E
"""

from __future__ import annotations

import numpy as np

from . import layers
from .layers import init_attention, init_layer_norm, init_linear
from .numerics import Tensor, ops

PREFIX = "mixer"


def init_mamba_layer(store, prefix, cfg, rng):
    d, di, s, r = cfg.channel, cfg.inner_dim, cfg.state_dim, cfg.resolved_dt_rank
    init_layer_norm(store, f"{prefix}.ln", d)
    init_linear(store, f"{prefix}.in_proj", d, 2 * di, rng, bias=False)
    bound = 1.0 / np.sqrt(cfg.conv_width)
    store.add(f"{prefix}.conv.weight", rng.uniform(-bound, bound, size=(cfg.conv_width, di)))
    store.add(f"{prefix}.conv.bias", rng.uniform(-bound, bound, size=di))
    init_linear(store, f"{prefix}.x_proj", di, r + 2 * s, rng, bias=False)
    std = r ** -0.5
    store.add(f"{prefix}.dt_proj.weight", rng.uniform(-std, std, size=(r, di)))
    dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=di))
    store.add(f"{prefix}.dt_proj.bias", dt + np.log(-np.expm1(-dt)))  # softplus^-1(dt)
    store.add(f"{prefix}.A_log", np.log(np.tile(np.arange(1, s + 1, dtype=np.float64), (di, 1))))
    store.add(f"{prefix}.skip", np.ones(di))
    init_layer_norm(store, f"{prefix}.out_ln", di)
    init_linear(store, f"{prefix}.out_proj", di, d, rng, bias=False)


def init_mixer(store, cfg, rng):
    for i in range(cfg.mamba_depth):
        init_mamba_layer(store, f"{PREFIX}.layers.{i}", cfg, rng)


def selective_scan(u, delta, A, B, C, skip):
    """``h_t = exp(delta_t*A) h_{t-1} + delta_t*B_t*u_t``, ``y_t = <C_t, h_t> + skip*u_t``.

    ``A`` is the (negative) continuous decay, shape ``(Din, S)``. Raises
    :class:`ptrb.numerics.ScanError` naming the first non-finite step.
    """
    return ops.selective_scan(u, delta, A, B, C, skip)


def mamba_layer(store, prefix, E, cfg):
    """One residual Mamba block over ``E`` of shape ``([batch,] L, D)``."""
    di, s, r = cfg.inner_dim, cfg.state_dim, cfg.resolved_dt_rank
    n = layers.layer_norm(store, f"{prefix}.ln", E)
    xg = layers.linear(store, f"{prefix}.in_proj", n)
    x, gate_in = xg[..., :di], xg[..., di:]
    z = ops.depthwise_conv1d(x, store[f"{prefix}.conv.weight"], store[f"{prefix}.conv.bias"])
    u = ops.silu(z)
    params = layers.linear(store, f"{prefix}.x_proj", u)
    dt_low, B, C = params[..., :r], params[..., r:r + s], params[..., r + s:]
    delta = ops.softplus(layers.linear(store, f"{prefix}.dt_proj", dt_low))
    A = ops.neg(ops.exp(store[f"{prefix}.A_log"]))
    y = ops.selective_scan(u, delta, A, B, C, store[f"{prefix}.skip"])
    branch = layers.layer_norm(store, f"{prefix}.out_ln", y)
    mixed = ops.mul(branch, ops.silu(gate_in))
    return ops.add(layers.linear(store, f"{prefix}.out_proj", mixed), E)


def encode_sequence(store, E0, cfg, depth=None):
    x = E0 if isinstance(E0, Tensor) else Tensor(E0)
    for i in range(cfg.mamba_depth if depth is None else depth):
        x = mamba_layer(store, f"{PREFIX}.layers.{i}", x, cfg)
    return x


def init_attention_mixer(store, prefix, dim, rng):
    init_attention(store, prefix, dim, rng)


def attention_mixer(store, prefix, tokens, heads):
    """Single multi-head self-attention layer (quadratic in sequence length)."""
    x = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
    return layers.multi_head_attention(store, prefix, x, heads)
