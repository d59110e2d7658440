"""End-to-end classifier: grouping, group encoder, ordering, mixer, pooling, head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import geometry, group_encoder, importance, layers, seq_mixer
from ..importance import GlobalFeature, GroupState, OrderedSequence
from ..layers import ParamStore, init_linear
from ..numerics import Tensor, ops, stream


class ModelError(ValueError):
    pass


@dataclass
class ForwardResult:
    logits: Tensor                    # (N, C)
    global_feature: GlobalFeature
    group_state: GroupState
    ordered: OrderedSequence
    grouped: list


@dataclass
class LossBreakdown:
    task: Tensor
    importance: Tensor
    alignment: Tensor
    total: Tensor

    def values(self):
        return {k: float(getattr(self, k).data) for k in ("task", "importance", "alignment", "total")}


def init_params(cfg, seed=None):
    rng = stream(cfg.seed if seed is None else seed, "init")
    store = ParamStore()
    group_encoder.init_group_encoder(store, cfg, rng)
    importance.init_importance(store, cfg, rng)
    seq_mixer.init_mixer(store, cfg, rng)
    init_linear(store, "head.fc1", cfg.channel, cfg.head_hidden, rng)
    init_linear(store, "head.fc2", cfg.head_hidden, cfg.num_classes, rng)
    return store


def group_points(points, cfg):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 2:
        pts = pts[None]
    if pts.shape[1] < max(cfg.num_groups, cfg.group_size):
        raise ModelError(f"clouds have {pts.shape[1]} points; need at least "
                         f"{max(cfg.num_groups, cfg.group_size)}")
    grouped = [geometry.group_cloud(p, cfg.num_groups, cfg.group_size, cfg.fps_seed_index)
               for p in pts]
    return grouped


def order_sequence(E, pos, I, keypoints, cfg, rng=None):
    if cfg.ordering in ("bio", "sio"):
        return importance.bio_reorder(E, pos, I, bidirectional=cfg.ordering == "bio")
    if cfg.ordering == "random" and rng is None:
        rng = stream(cfg.seed, "order")
    perm = np.stack([geometry.order_baseline(kp, cfg.ordering, rng, cfg.curve_bits)
                     for kp in keypoints])
    return importance.reorder(E, pos, I, perm)


def classify(params, f, cfg, training=False, rng=None):
    h = ops.relu(layers.linear(params, "head.fc1", f))
    h = ops.dropout(h, cfg.head_dropout, rng, training and rng is not None)
    return layers.linear(params, "head.fc2", h)


def forward_from_groups(params, cfg, E, pos, I, keypoints=None, training=False, rng=None):
    """Everything downstream of the group embeddings.

    Returns ``(logits, GlobalFeature, OrderedSequence)``.
    """
    ordered = order_sequence(E, pos, I, keypoints, cfg, rng)
    x = ordered.E0
    if training and cfg.dropout > 0 and rng is not None:
        x = ops.dropout(x, cfg.dropout, rng)
    x = seq_mixer.encode_sequence(params, x, cfg)
    f = importance.pool(x, ordered.scores, cfg.pooling)
    degenerate = importance.iap_degenerate(ordered.scores) if cfg.pooling.startswith("iap") else None
    f_proj = importance.project_global(params, f, training, cfg.bn_momentum)
    logits = classify(params, f, cfg, training, rng)
    return logits, GlobalFeature(f, f_proj, degenerate), ordered


def forward(points, cfg, params, mode="eval", rng=None):
    """Batched forward over clouds ``(N, P, 3)`` (a single ``(P, 3)`` cloud is a batch of one)."""
    if mode not in ("train", "eval"):
        raise ModelError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    grouped = group_points(points, cfg)
    keypoints = np.stack([g.keypoints for g in grouped])
    groups = np.stack([g.groups for g in grouped])
    E = group_encoder.encode_group(params, groups, cfg)
    pos = group_encoder.embed_keypoint_positions(params, keypoints)
    e_proj = importance.project_embedding(params, E, training, cfg.bn_momentum)
    I = importance.predict_importance(params, E, training, cfg.bn_momentum)
    logits, gf, ordered = forward_from_groups(params, cfg, E, pos, I, keypoints, training, rng)
    S = importance.cosine_target(e_proj, gf.f_proj)
    state = GroupState(E, I, e_proj, S)
    return ForwardResult(logits, gf, state, ordered, grouped)


def combine_losses(task, imp, align, cfg):
    """``alpha*task + beta*importance + gamma*alignment`` as a LossBreakdown."""
    total = task * float(cfg.alpha) + imp * float(cfg.beta) + align * float(cfg.gamma)
    return LossBreakdown(task, imp, align, total)


def total_loss(result, labels, cfg):
    """Weighted sum of the task, importance and alignment losses."""
    task = ops.cross_entropy(result.logits, labels)
    gs = result.group_state
    imp = importance.importance_loss(gs.I, gs.s_target)
    align = importance.alignment_loss(gs.e_proj, result.global_feature.f_proj, cfg.temperature)
    return combine_losses(task, imp, align, cfg)
