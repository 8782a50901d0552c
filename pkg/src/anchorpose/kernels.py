"""Backend selection for the hot loops.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
numpy implementations in ``_pykernels`` are used. Both expose the same four
functions. ``BACKEND`` names the one in effect.
"""

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

BACKEND = "cython" if _ckernels is not None else "python"
_impl = BACKENDS[BACKEND]


def _as_rows(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array, got shape {a.shape}")
    return a


def get_backend(name):
    """Return the kernel module registered under ``name`` ('cython' or 'python')."""
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}") from None


def nearest_neighbors(a, b, backend=None):
    impl = _impl if backend is None else get_backend(backend)
    return impl.nearest_neighbors(_as_rows(a), _as_rows(b))


def count_inliers(hyps, points, dirs, theta, backend=None):
    impl = _impl if backend is None else get_backend(backend)
    return impl.count_inliers(_as_rows(hyps), _as_rows(points), _as_rows(dirs), float(theta))


def inlier_mask(h, points, dirs, theta, backend=None):
    impl = _impl if backend is None else get_backend(backend)
    h = np.ascontiguousarray(h, dtype=np.float64).reshape(3)
    return impl.inlier_mask(h, _as_rows(points), _as_rows(dirs), float(theta))


def max_pairwise_distance(points, backend=None):
    impl = _impl if backend is None else get_backend(backend)
    return float(impl.max_pairwise_distance(_as_rows(points)))
