"""Importance scores, bi-directional importance-aware ordering and pooling.

Each group embedding is mapped to a unit vector in a shared space; so is
the pooled global feature. Their cosine is the regression target for a
small head that predicts a score per group from the embedding alone. The
scores drive both the sequence order fed to the mixer and the pooling
weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers
from .layers import init_batch_norm, init_linear
from .numerics import Tensor, ops

EMBED_PROJ = "importance.embed_proj"
GLOBAL_PROJ = "importance.global_proj"
HEAD = "importance.head"


@dataclass
class GroupState:
    E: Tensor                    # (..., G, D)
    I: Tensor                    # (..., G)
    e_proj: Tensor               # (..., G, P)
    s_target: np.ndarray | None = None


@dataclass
class OrderedSequence:
    perm: np.ndarray             # (..., L)
    E0: Tensor                   # (..., L, D)
    scores: Tensor               # (..., L)


@dataclass
class GlobalFeature:
    f: Tensor                    # (..., D)
    f_proj: Tensor | None = None
    degenerate: np.ndarray | None = None


def init_importance(store, cfg, rng):
    for prefix in (EMBED_PROJ, GLOBAL_PROJ):
        init_linear(store, f"{prefix}.fc1", cfg.channel, cfg.proj_hidden, rng)
        init_batch_norm(store, f"{prefix}.bn", cfg.proj_hidden)
        init_linear(store, f"{prefix}.fc2", cfg.proj_hidden, cfg.proj_dim, rng)
    init_linear(store, f"{HEAD}.fc1", cfg.channel, cfg.proj_hidden, rng)
    init_batch_norm(store, f"{HEAD}.bn", cfg.proj_hidden)
    init_linear(store, f"{HEAD}.fc2", cfg.proj_hidden, 1, rng)


def _two_layer(store, prefix, x, training, momentum):
    h = layers.linear(store, f"{prefix}.fc1", x)
    h = ops.relu(layers.batch_norm(store, f"{prefix}.bn", h, training, momentum))
    return layers.linear(store, f"{prefix}.fc2", h)


def project(store, prefix, x, training=False, momentum=0.1):
    """linear -> BatchNorm -> ReLU -> linear -> L2 normalize (batch stats over all rows)."""
    return ops.l2_normalize(_two_layer(store, prefix, x, training, momentum))


def project_embedding(store, e, training=False, momentum=0.1):
    return project(store, EMBED_PROJ, e, training, momentum)


def project_global(store, f, training=False, momentum=0.1):
    return project(store, GLOBAL_PROJ, f, training, momentum)


def predict_importance(store, e, training=False, momentum=0.1):
    """(..., D) embeddings -> (...) unbounded scores."""
    s = _two_layer(store, HEAD, e, training, momentum)
    return ops.reshape(s, s.shape[:-1])


def cosine_target(e_proj, f_proj):
    """Cosine similarity of unit vectors; broadcasts ``f_proj`` over groups."""
    e = e_proj.data if isinstance(e_proj, Tensor) else np.asarray(e_proj)
    f = f_proj.data if isinstance(f_proj, Tensor) else np.asarray(f_proj)
    if e.ndim > f.ndim:
        f = np.expand_dims(f, -2)
    return (e * f).sum(-1)


def importance_loss(I, S):
    """Mean smooth-L1 between predicted scores and (detached) cosine targets."""
    S = S.data if isinstance(S, Tensor) else np.asarray(S, dtype=np.float64)
    return ops.smooth_l1(I, Tensor(S))


def alignment_loss(e_proj, f_proj, temperature=1.0):
    """Cross-entropy of matching each projected group to its own cloud's global.

    ``e_proj`` is (N, G, P) and ``f_proj`` (N, P); logits for group (n, g)
    are its dot products with every f_proj[m] divided by ``temperature``.
    """
    N, G, P = e_proj.shape
    flat = ops.reshape(e_proj, (N * G, P))
    logits = ops.matmul(flat, ops.transpose(f_proj, (1, 0)))
    if temperature != 1.0:
        logits = logits * (1.0 / temperature)
    labels = np.repeat(np.arange(N), G)
    return ops.cross_entropy(logits, labels)


# ---------------------------------------------------------------- ordering

def importance_permutation(scores, bidirectional=True):
    """Descending order (ties: smaller index first), then its exact reverse."""
    s = np.asarray(scores, dtype=np.float64)
    idx = np.arange(s.shape[-1])
    rows = s.reshape(-1, s.shape[-1])
    desc = np.stack([np.lexsort((idx, -row)) for row in rows]).reshape(s.shape)
    if not bidirectional:
        return desc
    return np.concatenate([desc, desc[..., ::-1]], axis=-1)


def reorder(embeddings, positions, scores, perm):
    """Gather embeddings + positions and scores along the group axis by ``perm``."""
    ax = embeddings.ndim - 2
    idx = perm[..., None]
    E0 = ops.add(ops.gather(embeddings, idx, ax), ops.gather(positions, idx, ax))
    sc = scores if isinstance(scores, Tensor) else Tensor(scores)
    return OrderedSequence(perm, E0, ops.gather(sc, perm, sc.ndim - 1))


def bio_reorder(embeddings, positions, scores, bidirectional=True):
    """Bi-directional (or, with ``bidirectional=False``, single) importance ordering."""
    sd = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    perm = importance_permutation(sd, bidirectional)
    return reorder(embeddings, positions, scores, perm)


# ----------------------------------------------------------------- pooling

def iap_pool(E_final, scores, mode="clamp"):
    """Importance-aware pooling over the sequence axis.

    ``clamp``: sum of embeddings weighted by max(score, 0), so negative-score
    tokens are dropped and the rest reweighted. ``step``: plain sum of the
    positive-score tokens.
    """
    sc = scores if isinstance(scores, Tensor) else Tensor(scores)
    if E_final.shape[:-1] != sc.shape:
        raise ops.DimensionError(f"iap_pool: {E_final.shape} vs scores {sc.shape}")
    if mode == "clamp":
        w = ops.relu(sc)
    elif mode == "step":
        w = Tensor((sc.data > 0).astype(np.float64))
    else:
        raise ValueError(f"unknown IAP mode {mode!r}")
    w = ops.reshape(w, w.shape + (1,))
    return ops.sum(ops.mul(E_final, w), axis=-2)


def iap_degenerate(scores):
    sd = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    return ~(sd > 0).any(-1)


def pool_baseline(E_final, scores, strategy):
    if strategy == "avg":
        return ops.mean(E_final, axis=-2)
    if strategy == "max":
        return ops.max(E_final, axis=-2)
    if strategy == "wsum":
        sc = scores if isinstance(scores, Tensor) else Tensor(scores)
        return ops.sum(ops.mul(E_final, ops.reshape(sc, sc.shape + (1,))), axis=-2)
    raise ValueError(f"unknown pooling strategy {strategy!r}")


def pool(E_final, scores, strategy):
    if strategy == "iap":
        return iap_pool(E_final, scores, "clamp")
    if strategy == "iap_step":
        return iap_pool(E_final, scores, "step")
    return pool_baseline(E_final, scores, strategy)
