"""Index-space kernels for point networks: sampling, grouping, interpolation.

These operate on plain numpy coordinate arrays and return indices/weights;
gradients never flow through index selection.
"""

from __future__ import annotations

import numpy as np


def farthest_point_sample(xyz: np.ndarray, k: int, seed_index: int = 0) -> np.ndarray:
    """Greedy max-min selection of k point indices, starting at seed_index.

    If k exceeds the cloud size, indices repeat cyclically.
    """
    n = xyz.shape[0]
    if n == 0:
        raise ValueError("farthest_point_sample on an empty cloud")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        base = _fps_exact(xyz, n, seed_index)
        reps = -(-k // n)
        return np.tile(base, reps)[:k]
    return _fps_exact(xyz, k, seed_index)


def _fps_exact(xyz: np.ndarray, k: int, seed_index: int) -> np.ndarray:
    n = xyz.shape[0]
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = seed_index
    dist = np.sum((xyz - xyz[seed_index]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        np.minimum(dist, np.sum((xyz - xyz[nxt]) ** 2, axis=1), out=dist)
    return chosen


def ball_query_group(xyz: np.ndarray, centroids: np.ndarray, radius: float,
                     cap: int) -> np.ndarray:
    """(C, cap) indices of up-to-`cap` points within `radius` of each centroid.

    First-found (ascending index) order; short groups are padded with their own
    first member, and empty groups fall back to the centroid's nearest point.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    n_c = centroids.shape[0]
    out = np.empty((n_c, cap), dtype=np.intp)
    chunk = max(1, int(4e6 // max(xyz.shape[0], 1)))  # bound the distance matrix
    for lo in range(0, n_c, chunk):
        hi = min(lo + chunk, n_c)
        d2 = np.sum((centroids[lo:hi, None, :] - xyz[None, :, :]) ** 2, axis=2)
        within = d2 <= radius * radius
        nearest = np.argmin(d2, axis=1)
        for c in range(hi - lo):
            idx = np.flatnonzero(within[c])[:cap]
            if idx.size == 0:
                out[lo + c, :] = nearest[c]
            else:
                out[lo + c, :idx.size] = idx
                out[lo + c, idx.size:] = idx[0]
    return out


def three_nn_interpolate(coarse_xyz: np.ndarray, fine_xyz: np.ndarray,
                         eps: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """3-NN inverse-square-distance weights for upsampling coarse features.

    Returns (indices (F, m), weights (F, m)) with m = min(3, |coarse|); the
    weights of each fine point sum to 1.
    """
    if coarse_xyz.shape[0] == 0:
        raise ValueError("interpolation needs a non-empty coarse level")
    m = min(3, coarse_xyz.shape[0])
    d2 = np.sum((fine_xyz[:, None, :] - coarse_xyz[None, :, :]) ** 2, axis=2)
    idx = np.argsort(d2, axis=1)[:, :m]
    nd2 = np.take_along_axis(d2, idx, axis=1)
    w = 1.0 / (nd2 + eps)
    w /= w.sum(axis=1, keepdims=True)
    return idx, w
