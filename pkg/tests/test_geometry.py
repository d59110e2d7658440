import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ptrb import _kernels
from ptrb._kernels import fallback
from ptrb.geometry import (GeometryError, PointCloud, curve_codes, fps, group_cloud, hilbert_code,
                           hilbert_decode, knn_group, morton_code, morton_decode, normalize_cloud,
                           order_baseline, quantize)
from ptrb.numerics import stream


def fps_oracle(points, g, seed):
    """O(N*G) greedy max-min selection written without vectorization."""
    picked = [seed]
    n = len(points)
    while len(picked) < g:
        best, best_d = None, -1.0
        for j in range(n):
            d = min(sum((points[j][a] - points[p][a]) ** 2 for a in range(3)) for p in picked)
            if d > best_d:
                best, best_d = j, d
        picked.append(best)
    return picked


def morton_oracle(cell, bits):
    code = 0
    for b in range(bits - 1, -1, -1):
        for axis in range(3):
            code = (code << 1) | ((cell[axis] >> b) & 1)
    return code


# ----------------------------------------------------------- normalization


def test_normalize_examples():
    np.testing.assert_array_equal(normalize_cloud([[5.0, 5, 5]]).points, [[0, 0, 0]])
    pts = np.array([[-1.0, 0, 0], [1.0, 0, 0]])
    np.testing.assert_array_equal(normalize_cloud(pts).points, pts)
    np.testing.assert_array_equal(normalize_cloud(np.full((4, 3), 2.5)).points, np.zeros((4, 3)))


def test_normalize_rejects_bad_input():
    with pytest.raises(GeometryError):
        normalize_cloud([[0.0, np.nan, 1.0]])
    with pytest.raises(GeometryError):
        normalize_cloud(np.zeros((0, 3)))
    with pytest.raises(GeometryError):
        PointCloud(np.zeros((3, 2)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.just(3)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_normalize_postconditions_and_idempotence(raw):
    if np.ptp(raw, axis=0).max() < 1e-6:
        return
    p = normalize_cloud(raw).points
    assert np.abs(p.mean(0)).max() < 1e-6
    assert abs(np.linalg.norm(p, axis=1).max() - 1) < 1e-6
    np.testing.assert_allclose(normalize_cloud(p).points, p, atol=1e-6)


# --------------------------------------------------------------------- fps


def test_fps_collinear_example():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [10.0, 0, 0]])
    assert list(fps(pts, 2, 0)) == [0, 3]


def test_fps_all_points_seed_first(rng):
    pts = rng.normal(size=(7, 3))
    out = fps(pts, 7, 4)
    assert out[0] == 4 and sorted(out) == list(range(7))


def test_fps_ties_pick_smallest_index():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]])
    assert list(fps(pts, 2, 0)) == [0, 1]


def test_fps_matches_oracle_random(rng):
    for _ in range(40):
        n = int(rng.integers(1, 40))
        pts = rng.normal(size=(n, 3))
        g = int(rng.integers(1, n + 1))
        s = int(rng.integers(0, n))
        assert list(fps(pts, g, s)) == fps_oracle(pts.tolist(), g, s)


def test_fps_backends_agree(rng):
    pts = rng.normal(size=(200, 3))
    ref = fallback.fps(pts, 50, 3)
    assert np.array_equal(_kernels.fps(pts, 50, 3), ref)


def test_fps_errors(rng):
    pts = rng.normal(size=(5, 3))
    with pytest.raises(GeometryError):
        fps(pts, 6)
    with pytest.raises(GeometryError):
        fps(pts, 2, seed_index=5)


# --------------------------------------------------------------------- knn


def test_knn_k1_is_keypoint(rng):
    pts = rng.normal(size=(10, 3))
    gc = knn_group(pts, [3, 7], 1)
    np.testing.assert_array_equal(gc.groups, np.zeros((2, 1, 3)))
    np.testing.assert_array_equal(gc.member_indices[:, 0], [3, 7])


def test_knn_line_example():
    pts = np.array([[0.0, 0, 0], [3.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    gc = knn_group(pts, [0], 2)
    d = [abs(p[0] - 0.0) for p in pts]
    expect = sorted(range(4), key=lambda i: (d[i], i))[:2]
    assert list(gc.member_indices[0]) == expect == [0, 2]


def test_knn_ties_by_index():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]])
    assert list(knn_group(pts, [0], 3).member_indices[0]) == [0, 1, 2]


def test_grouped_cloud_invariants(rng):
    pts = rng.normal(size=(60, 3))
    gc = group_cloud(pts, 8, 6)
    for g in range(8):
        kp = gc.keypoints[g]
        assert any(np.array_equal(kp, p) for p in pts)
        np.testing.assert_allclose(gc.groups[g] + kp, pts[gc.member_indices[g]], atol=1e-9)
        d = np.linalg.norm(pts - kp, axis=1)
        inside = d[gc.member_indices[g]]
        outside = np.delete(d, gc.member_indices[g])
        assert outside.min() >= inside.max()
        assert list(np.diff(inside) >= 0) == [True] * 5


def test_knn_error(rng):
    with pytest.raises(GeometryError):
        knn_group(rng.normal(size=(3, 3)), [0], 4)


# ------------------------------------------------------------------ curves


def test_morton_examples():
    assert morton_code((0, 0, 0), 4) == 0
    assert morton_code((1, 0, 1), 1) == 5
    assert hilbert_code((0, 0, 0), 3) == 0


@pytest.mark.parametrize("bits", [1, 2, 3])
def test_morton_matches_oracle_and_is_bijective(bits):
    n = 1 << bits
    codes = set()
    for cell in itertools.product(range(n), repeat=3):
        c = morton_code(cell, bits)
        assert c == morton_oracle(cell, bits)
        assert tuple(morton_decode(c, bits)) == cell
        codes.add(c)
    assert codes == set(range(n ** 3))


@pytest.mark.parametrize("bits", [1, 2, 3])
def test_hilbert_bijective_and_adjacent(bits):
    n = 1 << bits
    inverse = {}
    for cell in itertools.product(range(n), repeat=3):
        c = hilbert_code(cell, bits)
        assert tuple(hilbert_decode(c, bits)) == cell
        inverse[c] = cell
    assert set(inverse) == set(range(n ** 3))
    for c in range(n ** 3 - 1):
        a, b = inverse[c], inverse[c + 1]
        assert sum(abs(x - y) for x, y in zip(a, b)) == 1


def test_quantize_clamps_to_grid(rng):
    pts = rng.normal(size=(50, 3))
    q = quantize(pts, 3)
    assert q.min() >= 0 and q.max() <= 7
    assert q.dtype.kind == "i"


# ---------------------------------------------------------------- ordering


def test_order_single_keypoint():
    for strategy in ("random", "xyz", "morton", "hilbert"):
        assert list(order_baseline(np.zeros((1, 3)), strategy, stream(0, "o"))) == [0]


def test_order_xyz_example():
    kp = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]])
    assert list(order_baseline(kp, "xyz")) == [0, 2, 1]


@pytest.mark.parametrize("kind", ["morton", "hilbert"])
def test_order_curve_matches_code_sort(kind, rng):
    kp = rng.normal(size=(30, 3))
    codes = curve_codes(kp, kind, 4)
    expect = sorted(range(30), key=lambda i: (codes[i], i))
    assert list(order_baseline(kp, kind, bits=4)) == expect


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2 ** 32 - 1))
def test_order_outputs_are_permutations(g, seed):
    kp = np.random.default_rng(seed).normal(size=(g, 3))
    for strategy in ("random", "xyz", "morton", "hilbert"):
        assert sorted(order_baseline(kp, strategy, stream(seed, "o"))) == list(range(g))


def test_order_random_needs_rng_and_unknown_strategy():
    with pytest.raises(GeometryError):
        order_baseline(np.zeros((2, 3)), "random")
    with pytest.raises(GeometryError):
        order_baseline(np.zeros((2, 3)), "spiral")
