"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats 5]

Prints median milliseconds per call and the speedup for the selective scan
(forward and backward) and farthest point sampling, after checking that
both backends agree.
"""

import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from ptrb._kernels import fallback, get_backend


def median_ms(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(times))


def scan_case(rng, nb, L, D, S):
    u = rng.normal(size=(nb, L, D))
    delta = rng.uniform(1e-3, 0.1, size=(nb, L, D))
    A = -np.tile(np.arange(1.0, S + 1), (D, 1))
    B = rng.normal(size=(nb, L, S))
    C = rng.normal(size=(nb, L, S))
    skip = np.ones(D)
    return u, delta, A, B, C, skip


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    try:
        compiled = get_backend("compiled")
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return
    rng = np.random.default_rng(0)
    rows = []
    for nb, L, D, S in [(1, 256, 64, 16), (16, 32, 64, 16), (1, 2048, 64, 16)]:
        u, delta, A, B, C, skip = scan_case(rng, nb, L, D, S)
        yc, hc, _ = compiled.scan_forward(u, delta, A, B, C, skip, True)
        yp, hp, _ = fallback.scan_forward(u, delta, A, B, C, skip, True)
        assert np.allclose(yc, yp, rtol=1e-10, atol=1e-12)
        gy = rng.normal(size=u.shape)
        label = f"scan b={nb} L={L} D={D} S={S}"
        rows.append((label + " fwd",
                     median_ms(lambda: compiled.scan_forward(u, delta, A, B, C, skip, False), args.repeats),
                     median_ms(lambda: fallback.scan_forward(u, delta, A, B, C, skip, False), args.repeats)))
        rows.append((label + " bwd",
                     median_ms(lambda: compiled.scan_backward(gy, u, delta, A, B, C, skip, hc), args.repeats),
                     median_ms(lambda: fallback.scan_backward(gy, u, delta, A, B, C, skip, hp), args.repeats)))
    for n, m in [(256, 16), (1024, 256), (4096, 512)]:
        pts = rng.normal(size=(n, 3))
        assert np.array_equal(compiled.fps(pts, m, 0), fallback.fps(pts, m, 0))
        rows.append((f"fps N={n} G={m}",
                     median_ms(lambda: compiled.fps(pts, m, 0), args.repeats),
                     median_ms(lambda: fallback.fps(pts, m, 0), args.repeats)))
    print(f"{'kernel':40s} {'compiled ms':>12s} {'python ms':>12s} {'speedup':>8s}")
    for label, c, p in rows:
        print(f"{label:40s} {c:12.3f} {p:12.3f} {p / c:8.1f}x")


if __name__ == "__main__":
    with threadpool_limits(limits=1):
        main()
