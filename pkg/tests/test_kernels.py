import numpy as np
import pytest
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from anchorpose import kernels


def brute_cone(h, points, dirs, theta):
    out = np.zeros(len(points), dtype=bool)
    for k, (p, v) in enumerate(zip(points, dirs)):
        d = h - p
        n = np.sqrt(d @ d)
        out[k] = n < 1e-9 or (d @ v) / n >= theta
    return out


def unit(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_backend_registry():
    assert kernels.BACKEND in kernels.BACKENDS
    assert "python" in kernels.BACKENDS
    with pytest.raises(ValueError, match="not available"):
        kernels.get_backend("fortran")


def test_nearest_neighbors_matches_kdtree(rng, backend):
    a, b = rng.standard_normal((300, 3)), rng.standard_normal((400, 3))
    dist, idx = kernels.nearest_neighbors(a, b, backend=backend)
    ref_d, ref_i = cKDTree(b).query(a)
    np.testing.assert_allclose(dist, ref_d, rtol=1e-12)
    assert np.array_equal(idx, ref_i)


def test_nearest_neighbors_lowest_index_tie(backend):
    a = np.zeros((1, 3))
    b = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0]])
    _, idx = kernels.nearest_neighbors(a, b, backend=backend)
    assert idx[0] == 0


def test_inlier_mask_matches_brute(rng, backend):
    pts = rng.uniform(-1, 1, (200, 3))
    dirs = unit(rng, 200)
    h = rng.uniform(-1, 1, 3)
    assert np.array_equal(kernels.inlier_mask(h, pts, dirs, 0.5, backend=backend), brute_cone(h, pts, dirs, 0.5))


def test_inlier_mask_point_on_hypothesis(backend):
    pts = np.zeros((1, 3))
    dirs = np.array([[1.0, 0, 0]])
    assert kernels.inlier_mask(np.zeros(3), pts, dirs, 0.99, backend=backend)[0]


def test_count_inliers_matches_mask(rng, backend):
    pts = rng.uniform(-1, 1, (150, 3))
    dirs = unit(rng, 150)
    hyps = rng.uniform(-1, 1, (20, 3))
    counts = kernels.count_inliers(hyps, pts, dirs, 0.3, backend=backend)
    ref = [brute_cone(h, pts, dirs, 0.3).sum() for h in hyps]
    assert counts.tolist() == ref


def test_max_pairwise_distance(rng, backend):
    pts = rng.standard_normal((500, 3))
    assert kernels.max_pairwise_distance(pts, backend=backend) == pytest.approx(pdist(pts).max(), rel=1e-15)


def test_backends_bit_identical(rng):
    if len(kernels.BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    a, b = rng.standard_normal((500, 3)), rng.standard_normal((700, 3))
    dirs = unit(rng, 700)
    for name in ("nearest_neighbors",):
        c = getattr(kernels, name)(a, b, backend="cython")
        p = getattr(kernels, name)(a, b, backend="python")
        assert all(np.array_equal(x, y) for x, y in zip(c, p))
    c = kernels.count_inliers(a[:50], b, dirs, 0.9, backend="cython")
    p = kernels.count_inliers(a[:50], b, dirs, 0.9, backend="python")
    assert np.array_equal(c, p)
    assert kernels.max_pairwise_distance(b, backend="cython") == kernels.max_pairwise_distance(b, backend="python")


def test_shape_validation():
    with pytest.raises(ValueError, match=r"\(n, 3\)"):
        kernels.nearest_neighbors(np.zeros((3, 2)), np.zeros((3, 3)))
