"""Rotation anchors: the tetrahedral, octahedral and icosahedral subgroups of SO(3)."""

import enum
import functools
import itertools
from dataclasses import dataclass

import numpy as np

from . import so3

PHI = (1.0 + np.sqrt(5.0)) / 2.0

# Anchors count as the same rotation below this geodesic angle.
_SAME = 1e-9


class AnchorGroupKind(enum.Enum):
    TETRA12 = "tetra12"
    OCTA24 = "octa24"
    ICOSA60 = "icosa60"

    @property
    def size(self):
        return {"tetra12": 12, "octa24": 24, "icosa60": 60}[self.value]

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown anchor group {name!r}; expected one of {choices}") from None


GROUP_NAMES = tuple(k.value for k in AnchorGroupKind)


@dataclass(frozen=True)
class AnchorSet:
    kind: AnchorGroupKind
    quats: np.ndarray
    min_pairwise_angle: float
    covering_radius: float = float("nan")

    def __post_init__(self):
        self.quats.setflags(write=False)

    def __len__(self):
        return len(self.quats)


def _signed_perms(base, even_only=False):
    """All sign flips of the nonzero entries of ``base`` over (even) permutations."""
    out = []
    for perm in itertools.permutations(range(4)):
        if even_only and _parity(perm):
            continue
        v = np.array([base[i] for i in perm])
        nz = np.flatnonzero(v)
        for signs in itertools.product((1.0, -1.0), repeat=len(nz)):
            w = v.copy()
            w[nz] *= signs
            out.append(w)
    return out


def _parity(perm):
    inversions = sum(1 for i in range(4) for j in range(i + 1, 4) if perm[i] > perm[j])
    return inversions % 2


def _dedupe(quats):
    """Canonicalize and drop duplicate rotations; identity first, rest lexicographic."""
    quats = so3.canonicalize(np.asarray(quats))
    unique = []
    for q in quats:
        if not any(so3.geodesic_angle(q, u) < _SAME for u in unique):
            unique.append(q)
    unique = np.array(unique)
    ident = [i for i, q in enumerate(unique) if so3.angle(q) < _SAME]
    rest = [q for i, q in enumerate(unique) if i not in ident]
    # round so float noise cannot reorder equal keys
    rest.sort(key=lambda q: tuple(np.round(q, 12)))
    return np.vstack([so3.IDENTITY] + rest)


def _tetra_quats():
    h = 0.5
    quats = [[1.0, 0.0, 0.0, 0.0]]
    quats += [[h, sx * h, sy * h, sz * h] for sx, sy, sz in itertools.product((1, -1), repeat=3)]
    quats += [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    return quats


def _octa_quats():
    r = 1.0 / np.sqrt(2.0)
    quats = _tetra_quats()
    # 90 and 270 degrees about the coordinate axes
    for axis in range(3):
        for s in (1.0, -1.0):
            q = [r, 0.0, 0.0, 0.0]
            q[1 + axis] = s * r
            quats.append(q)
    # 180 degrees about the six edge diagonals
    for a, b in itertools.combinations(range(3), 2):
        for s in (1.0, -1.0):
            q = [0.0, 0.0, 0.0, 0.0]
            q[1 + a] = r
            q[1 + b] = s * r
            quats.append(q)
    return quats


def _icosa_quats():
    # binary icosahedral group: 24 Hurwitz units plus the even permutations
    # of (0, +-1, +-1/phi, +-phi) / 2
    quats = _signed_perms([1.0, 0.0, 0.0, 0.0])
    quats += _signed_perms([0.5, 0.5, 0.5, 0.5])
    quats += _signed_perms([0.0, 0.5, 0.5 / PHI, 0.5 * PHI], even_only=True)
    return quats


_BUILDERS = {
    AnchorGroupKind.TETRA12: _tetra_quats,
    AnchorGroupKind.OCTA24: _octa_quats,
    AnchorGroupKind.ICOSA60: _icosa_quats,
}


def pairwise_angles(quats):
    """Matrix of geodesic angles between all members."""
    quats = np.asarray(quats)
    return so3.geodesic_angle(quats[:, None, :], quats[None, :, :])


def min_pairwise_angle(anchor_set):
    quats = anchor_set.quats if isinstance(anchor_set, AnchorSet) else np.asarray(anchor_set)
    ang = pairwise_angles(quats)
    np.fill_diagonal(ang, np.inf)
    return float(ang.min())


def closure_error(anchor_set):
    """Largest distance from any product of two members to its nearest member."""
    q = anchor_set.quats
    products = so3.compose(q[:, None, :], q[None, :, :]).reshape(-1, 4)
    nearest = q[nearest_anchor(products, anchor_set)]
    return float(so3.geodesic_angle(products, nearest).max())


@functools.lru_cache(maxsize=None)
def _generate_cached(kind):
    quats = _dedupe(_BUILDERS[kind]())
    if len(quats) != kind.size:
        raise RuntimeError(f"{kind.value}: built {len(quats)} rotations, expected {kind.size}")
    anchor_set = AnchorSet(kind=kind, quats=quats, min_pairwise_angle=min_pairwise_angle(quats))
    err = closure_error(anchor_set)
    if err > _SAME:
        raise RuntimeError(f"{kind.value}: not closed under composition (error {err:.3g} rad)")
    return anchor_set


def generate(kind):
    """Build the anchor set for ``kind``.

    Identity sits at index 0; the remaining members follow in lexicographic
    order of their canonical quaternions. Raises ``RuntimeError`` if the
    construction fails the closure check.
    """
    return _generate_cached(AnchorGroupKind.parse(kind))


def nearest_anchor(q, anchor_set):
    """Index of the anchor closest to ``q`` (lowest index on ties).

    Accepts a single quaternion or a batch of shape ``(n, 4)``.
    """
    scores = np.abs(np.asarray(q, dtype=np.float64) @ anchor_set.quats.T)
    return np.argmax(scores, axis=-1)


def covering_radius(anchor_set, samples, rng, chunk=100_000):
    """Monte-Carlo estimate of the largest distance from a rotation to its nearest anchor."""
    if samples < 100_000:
        raise ValueError("covering radius needs at least 1e5 samples")
    worst = 0.0
    remaining = samples
    while remaining > 0:
        n = min(chunk, remaining)
        q = so3.random_rotation(rng, size=n)
        nearest = anchor_set.quats[nearest_anchor(q, anchor_set)]
        worst = max(worst, float(so3.geodesic_angle(q, nearest).max()))
        remaining -= n
    return worst


def with_covering_radius(anchor_set, samples, rng):
    """Copy of ``anchor_set`` carrying a covering-radius estimate."""
    return AnchorSet(
        kind=anchor_set.kind,
        quats=anchor_set.quats.copy(),
        min_pairwise_angle=anchor_set.min_pairwise_angle,
        covering_radius=covering_radius(anchor_set, samples, rng),
    )


def to_json(anchor_set):
    return {"kind": anchor_set.kind.value, "quats": anchor_set.quats.tolist()}
