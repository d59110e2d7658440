"""Intra-group Transformer: per-point embeddings, T pre-LN layers, symmetric pooling."""

from __future__ import annotations

import numpy as np

from . import layers
from .layers import init_attention, init_layer_norm, init_linear, init_mlp2
from .numerics import Tensor, ops

PREFIX = "encoder"


def init_group_encoder(store, cfg, rng):
    d, h = cfg.channel, cfg.embed_hidden
    init_mlp2(store, f"{PREFIX}.point_embed", 3, h, d, rng)
    init_mlp2(store, f"{PREFIX}.point_pos", 3, h, d, rng)
    for i in range(cfg.encoder_depth):
        init_transformer_layer(store, f"{PREFIX}.layers.{i}", d, rng)
    init_mlp2(store, "pos_embed", 3, h, d, rng)


def init_transformer_layer(store, prefix, dim, rng):
    init_layer_norm(store, f"{prefix}.ln1", dim)
    init_attention(store, f"{prefix}.attn", dim, rng)
    init_layer_norm(store, f"{prefix}.ln2", dim)
    init_linear(store, f"{prefix}.fc1", dim, 4 * dim, rng)
    init_linear(store, f"{prefix}.fc2", 4 * dim, dim, rng)


def embed_points(store, groups):
    """(..., K, 3) centered coordinates -> (..., K, D) tokens."""
    x = groups if isinstance(groups, Tensor) else Tensor(groups)
    return ops.add(layers.mlp2(store, f"{PREFIX}.point_embed", x),
                   layers.mlp2(store, f"{PREFIX}.point_pos", x))


def transformer_layer(store, prefix, tokens, heads):
    x = tokens
    x = x + layers.multi_head_attention(store, f"{prefix}.attn",
                                        layers.layer_norm(store, f"{prefix}.ln1", x), heads)
    hidden = ops.gelu(layers.linear(store, f"{prefix}.fc1",
                                    layers.layer_norm(store, f"{prefix}.ln2", x)))
    return x + layers.linear(store, f"{prefix}.fc2", hidden)


def canonical_order(groups):
    """Per-group permutation sorting members lexicographically by (x, y, z).

    The encoder is permutation-invariant in exact arithmetic; fixing the
    member order also fixes the floating-point summation order, so the
    result is bit-identical under any input permutation.
    """
    g = np.asarray(groups)
    flat = g.reshape(-1, g.shape[-2], 3)
    order = np.stack([np.lexsort((p[:, 2], p[:, 1], p[:, 0])) for p in flat])
    return order.reshape(g.shape[:-1])


def encode_group(store, groups, cfg):
    """(..., K, 3) -> (..., D) group embeddings."""
    g = np.asarray(groups.data if isinstance(groups, Tensor) else groups, dtype=np.float64)
    order = canonical_order(g)
    g = np.take_along_axis(g, order[..., None], axis=-2)
    x = embed_points(store, g)
    for i in range(cfg.encoder_depth):
        x = transformer_layer(store, f"{PREFIX}.layers.{i}", x, cfg.heads)
    if cfg.group_pool == "max":
        return ops.max(x, axis=-2)
    return ops.mean(x, axis=-2)


def embed_keypoint_positions(store, keypoints):
    """(..., G, 3) keypoints -> (..., G, D) positional embeddings."""
    x = keypoints if isinstance(keypoints, Tensor) else Tensor(keypoints)
    return layers.mlp2(store, "pos_embed", x)
