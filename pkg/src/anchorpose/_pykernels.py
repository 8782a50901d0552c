"""Numpy implementations of the hot loops, used when the extension is absent.

Arithmetic is ordered the same way as in ``_ckernels.pyx`` so both backends
agree to the last bit on ordinary inputs.
"""

import numpy as np

COINCIDENT = 1e-9

# Upper bound on the number of pairwise entries materialised at once.
_CHUNK_ENTRIES = 1 << 20


def _row_chunks(n, m):
    step = max(1, _CHUNK_ENTRIES // max(m, 1))
    for start in range(0, n, step):
        yield start, min(n, start + step)


def nearest_neighbors(a, b):
    """For each row of ``a`` return the distance to and index of its nearest row in ``b``.

    Ties resolve to the lowest index in ``b``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(b) == 0:
        raise ValueError("reference set is empty")
    dist = np.empty(len(a), dtype=np.float64)
    idx = np.empty(len(a), dtype=np.int64)
    for lo, hi in _row_chunks(len(a), len(b)):
        diff = a[lo:hi, None, :] - b[None, :, :]
        d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
        j = np.argmin(d2, axis=1)
        idx[lo:hi] = j
        dist[lo:hi] = np.sqrt(d2[np.arange(hi - lo), j])
    return dist, idx


def count_inliers(hyps, points, dirs, theta):
    """Number of field points whose direction cone contains each hypothesis."""
    hyps = np.asarray(hyps, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    counts = np.zeros(len(hyps), dtype=np.int64)
    for lo, hi in _row_chunks(len(hyps), len(points)):
        u = hyps[lo:hi, None, :] - points[None, :, :]
        counts[lo:hi] = _cone(u, dirs[None, :, :], theta).sum(axis=1)
    return counts


def inlier_mask(h, points, dirs, theta):
    h = np.asarray(h, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    return _cone(h[None, :] - points, dirs, theta)


def _cone(u, dirs, theta):
    norm = np.sqrt(u[..., 0] * u[..., 0] + u[..., 1] * u[..., 1] + u[..., 2] * u[..., 2])
    dot = u[..., 0] * dirs[..., 0] + u[..., 1] * dirs[..., 1] + u[..., 2] * dirs[..., 2]
    coincident = norm < COINCIDENT
    with np.errstate(divide="ignore", invalid="ignore"):
        inside = dot / norm >= theta
    return coincident | inside


def max_pairwise_distance(points):
    points = np.asarray(points, dtype=np.float64)
    best = 0.0
    for lo, hi in _row_chunks(len(points), len(points)):
        diff = points[lo:hi, None, :] - points[None, :, :]
        d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
        if d2.size:
            best = max(best, float(d2.max()))
    return float(np.sqrt(best))
