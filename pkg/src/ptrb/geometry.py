"""Point-cloud normalization, FPS/KNN grouping, and space-filling-curve orderings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

ORDERINGS = ("random", "xyz", "morton", "hilbert")


class GeometryError(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) < 1:
            raise GeometryError(f"expected an (N, 3) array with N >= 1, got {self.points.shape}")

    def __len__(self):
        return len(self.points)


@dataclass
class GroupedCloud:
    keypoints: np.ndarray        # (G, 3)
    groups: np.ndarray           # (G, K, 3), keypoint-centered
    member_indices: np.ndarray   # (G, K)
    keypoint_indices: np.ndarray  # (G,)

    @property
    def num_groups(self):
        return self.keypoints.shape[0]

    @property
    def group_size(self):
        return self.groups.shape[1]


def normalize_cloud(raw, label=None):
    """Center on the centroid and scale so the farthest point has norm 1."""
    pts = np.asarray(raw, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise GeometryError(f"expected an (N, 3) array with N >= 1, got {pts.shape}")
    if not np.isfinite(pts).all():
        raise GeometryError("point cloud contains non-finite coordinates")
    pts = pts - pts.mean(axis=0)
    scale = np.sqrt((pts * pts).sum(1)).max()
    if scale > 0:
        pts = pts / scale
    else:
        pts = np.zeros_like(pts)
    return PointCloud(pts, label)


def _points(cloud):
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def fps(cloud, n_samples, seed_index=0):
    """Greedy farthest point sampling; returns indices in pick order.

    Each pick maximizes the distance to its nearest already-picked point,
    ties going to the smallest index.
    """
    pts = np.ascontiguousarray(_points(cloud))
    n = len(pts)
    if n_samples > n:
        raise GeometryError(f"cannot sample {n_samples} keypoints from {n} points")
    if not 0 <= seed_index < n:
        raise GeometryError(f"seed index {seed_index} out of range for {n} points")
    if n_samples <= 0:
        return np.empty(0, dtype=np.int64)
    return np.asarray(_kernels.fps(pts, int(n_samples), int(seed_index)), dtype=np.int64)


def knn_group(cloud, keypoint_indices, k):
    """Group the ``k`` nearest points around each keypoint (itself included).

    Members are sorted by distance, then index, and stored relative to the
    keypoint.
    """
    pts = _points(cloud)
    n = len(pts)
    if k > n:
        raise GeometryError(f"group size {k} exceeds point count {n}")
    kidx = np.asarray(keypoint_indices, dtype=np.int64)
    keypoints = pts[kidx]
    diff = pts[None, :, :] - keypoints[:, None, :]
    dist = (diff * diff).sum(-1)                      # (G, N)
    order = np.argsort(dist, axis=1, kind="stable")   # stable: ties by index
    members = order[:, :k]
    groups = pts[members] - keypoints[:, None, :]
    return GroupedCloud(keypoints, groups, members, kidx)


def group_cloud(cloud, n_groups, k, seed_index=0):
    return knn_group(cloud, fps(cloud, n_groups, seed_index), k)


# ------------------------------------------------------------ curve codes

def quantize(points, bits, bounds=None):
    """Map points to integer cells of a ``2**bits`` grid over a bounding cube.

    The cube spans the points' bounding box along its longest side (or the
    explicit ``(lo, side)`` given in ``bounds``); coordinates outside clamp.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if bounds is None:
        lo = pts.min(0)
        side = float((pts.max(0) - lo).max())
    else:
        lo, side = np.asarray(bounds[0], dtype=np.float64), float(bounds[1])
    n = 1 << bits
    if side <= 0:
        return np.zeros(pts.shape, dtype=np.int64)
    cells = np.floor((pts - lo) / side * n).astype(np.int64)
    return np.clip(cells, 0, n - 1)


def morton_code(cell, bits):
    """Interleave bits of an integer cell, x first from the most significant bit."""
    x, y, z = (int(c) for c in cell)
    code = 0
    for i in range(bits - 1, -1, -1):
        code = (code << 3) | (((x >> i) & 1) << 2) | (((y >> i) & 1) << 1) | ((z >> i) & 1)
    return code


def morton_decode(code, bits):
    x = y = z = 0
    for i in range(bits):
        x |= ((code >> (3 * i + 2)) & 1) << i
        y |= ((code >> (3 * i + 1)) & 1) << i
        z |= ((code >> (3 * i)) & 1) << i
    return x, y, z


def _axes_to_transpose(X, bits):
    # Skilling, "Programming the Hilbert curve" (2004), in-place on a list.
    n = len(X)
    M = 1 << (bits - 1)
    Q = M
    while Q > 1:
        P = Q - 1
        for i in range(n):
            if X[i] & Q:
                X[0] ^= P
            else:
                t = (X[0] ^ X[i]) & P
                X[0] ^= t
                X[i] ^= t
        Q >>= 1
    for i in range(1, n):
        X[i] ^= X[i - 1]
    t = 0
    Q = M
    while Q > 1:
        if X[n - 1] & Q:
            t ^= Q - 1
        Q >>= 1
    for i in range(n):
        X[i] ^= t
    return X


def _transpose_to_axes(X, bits):
    n = len(X)
    N = 2 << (bits - 1)
    t = X[n - 1] >> 1
    for i in range(n - 1, 0, -1):
        X[i] ^= X[i - 1]
    X[0] ^= t
    Q = 2
    while Q != N:
        P = Q - 1
        for i in range(n - 1, -1, -1):
            if X[i] & Q:
                X[0] ^= P
            else:
                t = (X[0] ^ X[i]) & P
                X[0] ^= t
                X[i] ^= t
        Q <<= 1
    return X


def hilbert_code(cell, bits):
    """3D Hilbert index of an integer cell via the transpose algorithm."""
    X = _axes_to_transpose([int(c) for c in cell], bits)
    # transposed form: bit i of X[j] is code bit 3*i + (2 - j)
    return morton_code(X, bits)


def hilbert_decode(code, bits):
    return tuple(_transpose_to_axes(list(morton_decode(code, bits)), bits))


def curve_codes(points, kind, bits=10, bounds=None):
    cells = quantize(points, bits, bounds)
    fn = morton_code if kind == "morton" else hilbert_code
    return np.array([fn(c, bits) for c in cells], dtype=np.int64)


def order_baseline(keypoints, strategy, rng=None, bits=10):
    """Permutation of keypoint indices under a non-learned ordering strategy."""
    if isinstance(keypoints, GroupedCloud):
        keypoints = keypoints.keypoints
    kp = np.asarray(keypoints, dtype=np.float64)
    g = len(kp)
    idx = np.arange(g)
    if strategy == "random":
        if rng is None:
            raise GeometryError("random ordering needs an rng stream")
        return rng.permutation(g)
    if strategy == "xyz":
        return np.lexsort((idx, kp[:, 2], kp[:, 1], kp[:, 0]))
    if strategy in ("morton", "hilbert"):
        return np.lexsort((idx, curve_codes(kp, strategy, bits)))
    raise GeometryError(f"unknown ordering strategy {strategy!r}")
