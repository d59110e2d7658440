"""AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np


class OptimizerError(RuntimeError):
    pass


def adamw_step(store, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
    """Apply one AdamW update in place to every parameter holding a gradient.

    All gradients are checked before anything is modified, so a non-finite
    gradient aborts the step and leaves the store untouched.
    """
    for name, p in store.named_parameters():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise OptimizerError(f"non-finite gradient for parameter {name!r}; step aborted")
    b1, b2 = betas
    store.step += 1
    t = store.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in store.named_parameters():
        g = p.grad
        if g is None:
            continue
        st = store.state.get(name)
        if st is None:
            st = store.state[name] = {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
        m, v = st["m"], st["v"]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if weight_decay:
            p.data *= 1.0 - lr * weight_decay
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return store


def lr_at(epoch, cfg):
    """Learning rate at a (possibly fractional) epoch."""
    base, low = cfg.lr, cfg.lr_min
    warm, total = cfg.warmup_epochs, cfg.epochs
    if warm > 0 and epoch < warm:
        return base * epoch / warm
    if total <= warm:
        return base
    frac = min(max((epoch - warm) / (total - warm), 0.0), 1.0)
    return low + 0.5 * (base - low) * (1.0 + math.cos(math.pi * frac))
