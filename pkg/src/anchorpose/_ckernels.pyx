# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: nearest neighbours, inlier cones, pairwise extent.

Every function here has a numpy twin in ``_pykernels`` with the same
signature; ``anchorpose.kernels`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

# Distances below this count as coincident with the hypothesis.
cdef double COINCIDENT = 1e-9


def nearest_neighbors(const double[:, ::1] a, const double[:, ::1] b):
    """For each row of ``a`` return the distance to and index of its nearest row in ``b``.

    Ties resolve to the lowest index in ``b``.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j, best_j
    cdef double ax, ay, az, dx, dy, dz, d2, best
    dist = np.empty(n, dtype=np.float64)
    idx = np.empty(n, dtype=np.int64)
    cdef double[::1] dist_v = dist
    cdef cnp.int64_t[::1] idx_v = idx
    if m == 0:
        raise ValueError("reference set is empty")
    with nogil:
        for i in range(n):
            ax = a[i, 0]
            ay = a[i, 1]
            az = a[i, 2]
            best = 1e300
            best_j = 0
            for j in range(m):
                dx = ax - b[j, 0]
                dy = ay - b[j, 1]
                dz = az - b[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best:
                    best = d2
                    best_j = j
            dist_v[i] = sqrt(best)
            idx_v[i] = best_j
    return dist, idx


def count_inliers(const double[:, ::1] hyps, const double[:, ::1] points,
                  const double[:, ::1] dirs, double theta):
    """Number of field points whose direction cone contains each hypothesis."""
    cdef Py_ssize_t n = hyps.shape[0]
    cdef Py_ssize_t k = points.shape[0]
    cdef Py_ssize_t i, j
    cdef double hx, hy, hz, ux, uy, uz, norm
    cdef cnp.int64_t c
    counts = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] counts_v = counts
    with nogil:
        for i in range(n):
            hx = hyps[i, 0]
            hy = hyps[i, 1]
            hz = hyps[i, 2]
            c = 0
            for j in range(k):
                ux = hx - points[j, 0]
                uy = hy - points[j, 1]
                uz = hz - points[j, 2]
                norm = sqrt(ux * ux + uy * uy + uz * uz)
                if norm < COINCIDENT:
                    c += 1
                elif (ux * dirs[j, 0] + uy * dirs[j, 1] + uz * dirs[j, 2]) / norm >= theta:
                    c += 1
            counts_v[i] = c
    return counts


def inlier_mask(const double[::1] h, const double[:, ::1] points,
                const double[:, ::1] dirs, double theta):
    cdef Py_ssize_t k = points.shape[0]
    cdef Py_ssize_t j
    cdef double ux, uy, uz, norm
    mask = np.zeros(k, dtype=np.bool_)
    cdef cnp.npy_bool[::1] mask_v = mask
    with nogil:
        for j in range(k):
            ux = h[0] - points[j, 0]
            uy = h[1] - points[j, 1]
            uz = h[2] - points[j, 2]
            norm = sqrt(ux * ux + uy * uy + uz * uz)
            if norm < COINCIDENT:
                mask_v[j] = 1
            elif (ux * dirs[j, 0] + uy * dirs[j, 1] + uz * dirs[j, 2]) / norm >= theta:
                mask_v[j] = 1
    return mask


def max_pairwise_distance(const double[:, ::1] points):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, d2, best = 0.0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dx = points[i, 0] - points[j, 0]
                dy = points[i, 1] - points[j, 1]
                dz = points[i, 2] - points[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 > best:
                    best = d2
    return sqrt(best)
