"""Quaternion and rotation-matrix arithmetic on SO(3).

Conventions
-----------
- Quaternions are float64 arrays ``(w, x, y, z)`` of shape ``(4,)`` or
  ``(..., 4)``; every function here accepts batches.
- Hamilton product: ``compose(a, b)`` is the rotation ``a`` applied after
  ``b``, i.e. ``R(a) @ R(b)``.
- Returned quaternions are canonical: ``w >= 0``, and when ``w == 0`` the
  first nonzero of ``(x, y, z)`` is positive. ``q`` and ``-q`` are the same
  rotation, so canonical form makes equality testing well defined.
- Tangent vectors are axis-angle 3-vectors (norm = angle in radians).
"""

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

# Half-angle series cutoff for exp/log near the identity.
_SMALL_ANGLE = 1e-8
# |w| below this is rounding noise of a half turn (cos(pi/2) evaluates to 6e-17)
_HALF_TURN_W = 1e-15


def identity():
    return IDENTITY.copy()


def canonicalize(q):
    """Return the canonical sign of ``q`` (unit norm is assumed, not enforced)."""
    q = np.array(q, dtype=np.float64)
    flat = q.reshape(-1, 4)
    # sign decided by the first nonzero component in (w, x, y, z) order
    nonzero = flat != 0.0
    first = np.argmax(nonzero, axis=1)
    lead = flat[np.arange(len(flat)), first]
    flat[lead < 0] *= -1.0
    return flat.reshape(q.shape)


def normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return canonicalize(q / np.linalg.norm(q, axis=-1, keepdims=True))


def negate(q):
    """Antipodal quaternion; represents the same rotation, not canonical."""
    return -np.asarray(q, dtype=np.float64)


def inverse(q):
    q = np.asarray(q, dtype=np.float64)
    return canonicalize(q * np.array([1.0, -1.0, -1.0, -1.0]))


def _hamilton(a, b):
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def compose(a, b):
    """Rotation ``a`` applied after ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return canonicalize(_hamilton(a, b))


def rotate(q, p):
    """Rotate point(s) ``p`` of shape ``(..., 3)`` by ``q``.

    ``q`` is either a single quaternion or broadcasts against ``p``.
    """
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    w = q[..., :1]
    v = q[..., 1:]
    t = 2.0 * np.cross(v, p)
    return p + w * t + np.cross(v, t)


def dot(a, b):
    return np.sum(np.asarray(a, dtype=np.float64) * np.asarray(b, dtype=np.float64), axis=-1)


def geodesic_angle(a, b):
    """Intrinsic distance between two rotations, in ``[0, pi]`` radians.

    Equal to ``2 * arccos(|a . b|)`` for unit quaternions, but evaluated as
    ``4 * atan2(|a - s b|, |a + s b|)`` with ``s = sign(a . b)`` (the
    half-angle identity for unit vectors). That form keeps full precision
    near 0, where arccos loses about eight digits.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = np.where(dot(a, b) < 0.0, -1.0, 1.0)[..., None]
    diff = np.linalg.norm(a - s * b, axis=-1)
    summ = np.linalg.norm(a + s * b, axis=-1)
    return 4.0 * np.arctan2(diff, summ)


def angle(q):
    """Rotation angle of ``q`` (distance to the identity)."""
    return geodesic_angle(q, IDENTITY)


def exp_map(omega):
    """Axis-angle vector -> canonical unit quaternion."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.linalg.norm(omega, axis=-1, keepdims=True)
    half = 0.5 * theta
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(theta < _SMALL_ANGLE, 0.5 - theta**2 / 48.0, np.sin(half) / theta)
    q = np.concatenate([np.cos(half), scale * omega], axis=-1)
    return canonicalize(q)


def log_map(q):
    """Canonical unit quaternion -> axis-angle vector with norm in ``[0, pi]``.

    At pi the axis is not unique; the lexicographically largest of the two
    candidates is returned. A ``w`` within rounding of zero counts as pi.
    """
    q = np.array(q, dtype=np.float64)
    half_turn = np.abs(q[..., :1]) < _HALF_TURN_W
    q = np.where(half_turn, np.concatenate([np.zeros_like(q[..., :1]), q[..., 1:]], axis=-1), q)
    q = canonicalize(q)
    w = q[..., :1]
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1, keepdims=True)
    theta = 2.0 * np.arctan2(s, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(s < _SMALL_ANGLE, 2.0 / w, theta / s)
    return scale * v


def from_axis_angle(axis, theta):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    return exp_map(axis * np.asarray(theta, dtype=np.float64)[..., None])


def quat_to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return m.reshape(q.shape[:-1] + (3, 3))


def matrix_to_quat(m, tol=1e-6):
    """Rotation matrix -> canonical quaternion.

    Raises ``ValueError`` if ``m`` is not orthonormal with determinant +1
    within ``tol``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(m.T @ m - np.eye(3))) > tol:
        raise ValueError("matrix is not orthonormal")
    det = np.linalg.det(m)
    if abs(det - 1.0) > tol:
        raise ValueError(f"matrix determinant is {det:.6g}, not +1 (reflection?)")

    # Shepperd: branch on the largest of the four squared components
    tr = np.trace(m)
    cands = np.array([tr, m[0, 0], m[1, 1], m[2, 2]])
    k = int(np.argmax(cands))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return normalize(np.array(q))


def random_rotation(rng, size=None):
    """Uniform rotation(s) from a normalized 4D Gaussian.

    ``rng`` is a ``numpy.random.Generator``; no global state is touched.
    """
    shape = (4,) if size is None else (size, 4)
    return normalize(rng.standard_normal(shape))
