"""Wall-clock scaling of the two sequence mixers' cores with sequence length."""

from __future__ import annotations

import time

import numpy as np
from threadpoolctl import threadpool_limits

from .numerics import Tensor, no_grad, ops, stream

MIXERS = ("attention", "ssm")


def _attention_inputs(L, dim, rng):
    return [Tensor(rng.normal(size=(1, L, dim))) for _ in range(3)]


def _attention(q, k, v):
    scores = ops.matmul(q, ops.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(q.shape[-1]))
    return ops.matmul(ops.softmax(scores, axis=-1), v)


def _ssm_inputs(L, dim, rng, state=16):
    u = Tensor(rng.normal(size=(1, L, dim)))
    delta = Tensor(rng.uniform(1e-3, 1e-1, size=(1, L, dim)))
    A = Tensor(-np.tile(np.arange(1.0, state + 1), (dim, 1)))
    B = Tensor(rng.normal(size=(1, L, state)))
    C = Tensor(rng.normal(size=(1, L, state)))
    skip = Tensor(np.ones(dim))
    return [u, delta, A, B, C, skip]


def time_mixer(mixer, L, dim, repeats=5, warmup=2, seed=0):
    """Median seconds of one eval-mode core evaluation at length ``L``."""
    rng = stream(seed, "bench", mixer, L)
    if mixer == "attention":
        fn, args = _attention, _attention_inputs(L, dim, rng)
    elif mixer == "ssm":
        fn, args = ops.selective_scan, _ssm_inputs(L, dim, rng)
    else:
        raise ValueError(f"unknown mixer {mixer!r}; choose from {MIXERS}")
    times = []
    with no_grad():
        for i in range(warmup + repeats):
            t0 = time.perf_counter()
            fn(*args)
            if i >= warmup:
                times.append(time.perf_counter() - t0)
    return float(np.median(times))


def loglog_slope(lengths, seconds):
    slope, _ = np.polyfit(np.log(np.asarray(lengths, float)), np.log(np.asarray(seconds, float)), 1)
    return float(slope)


def run_benchmark(mixer, lengths, dim=64, repeats=5, seed=0):
    """``(rows, slope)`` with rows of ``(length, median_seconds)``; runs on one thread."""
    with threadpool_limits(limits=1):
        rows = [(int(L), time_mixer(mixer, int(L), dim, repeats, seed=seed)) for L in lengths]
    return rows, loglog_slope([r[0] for r in rows], [r[1] for r in rows])
