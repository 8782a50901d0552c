"""3D RANSAC voting for an object center from per-point unit vectors.

Each hypothesis is the midpoint of the shortest segment between two sampled
lines. Hypotheses are scored by how many field points have the hypothesis
inside their direction cone; the winner's inliers are refined by linear
least squares.

Randomness: hypothesis ``k`` (global generation index) samples its point pair
from its own Philox stream keyed on ``(seed, k)``. Results therefore do not
depend on how a round is split across threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class DegenerateFieldError(ValueError):
    pass


@dataclass(frozen=True)
class VectorField:
    points: np.ndarray
    dirs: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=np.float64)
        v = np.ascontiguousarray(self.dirs, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape != v.shape:
            raise ValueError(f"points {p.shape} and dirs {v.shape} must both be (K, 3)")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("field contains non-finite values")
        norms = np.linalg.norm(v, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-9)
        if len(bad):
            raise ValueError(f"dirs[{bad[0]}] is not unit norm (|v| = {norms[bad[0]]!r})")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "dirs", v)

    def __len__(self):
        return len(self.points)

    def to_json(self):
        return {"points": self.points.tolist(), "dirs": self.dirs.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["points"], dtype=np.float64), np.array(obj["dirs"], dtype=np.float64))


@dataclass(frozen=True)
class RansacConfig:
    theta: float = 0.99
    batch_size: int = 128
    max_rounds: int = 20
    success_prob: float = 0.99
    parallel_tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not -1.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (-1, 1)")
        if self.batch_size < 1 or self.max_rounds < 1:
            raise ValueError("batch_size and max_rounds must be >= 1")
        if not 0.0 < self.success_prob < 1.0:
            raise ValueError("success_prob must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")


@dataclass(frozen=True)
class Hypothesis:
    point: np.ndarray
    inlier_count: int
    source_index: int


@dataclass(frozen=True)
class VoteResult:
    center: np.ndarray
    inlier_indices: np.ndarray
    hypotheses_evaluated: int
    rounds: int
    best: Hypothesis
    refined: bool = True
    rejected_pairs: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "center": self.center.tolist(),
            "inlier_indices": self.inlier_indices.tolist(),
            "inlier_count": int(len(self.inlier_indices)),
            "hypotheses_evaluated": self.hypotheses_evaluated,
            "rounds": self.rounds,
            "refined": self.refined,
            "rejected_pairs": self.rejected_pairs,
            "best_hypothesis": {
                "point": self.best.point.tolist(),
                "inlier_count": self.best.inlier_count,
                "source_index": self.best.source_index,
            },
        }


def make_field(points, center):
    """Unit vectors from each point toward ``center``."""
    points = np.asarray(points, dtype=np.float64)
    offset = np.asarray(center, dtype=np.float64) - points
    dist = np.linalg.norm(offset, axis=1)
    close = np.flatnonzero(dist < 1e-9)
    if len(close):
        raise ValueError(f"point {close[0]} coincides with the center")
    return VectorField(points, offset / dist[:, None])


def pair_hypothesis(p1, v1, p2, v2, parallel_tolerance=1e-6):
    """Midpoint of the shortest segment between two lines, or None if near-parallel."""
    p1, v1, p2, v2 = (np.asarray(a, dtype=np.float64) for a in (p1, v1, p2, v2))
    c = float(v1 @ v2)
    if abs(c) > 1.0 - parallel_tolerance:
        return None
    w = p1 - p2
    d1 = float(v1 @ w)
    d2 = float(v2 @ w)
    denom = 1.0 - c * c
    s = (c * d2 - d1) / denom
    t = (d2 - c * d1) / denom
    return 0.5 * ((p1 + s * v1) + (p2 + t * v2))


def _pair_hypotheses(p1, v1, p2, v2, parallel_tolerance):
    """Vectorized ``pair_hypothesis``; rows that are near-parallel come back NaN."""
    c = np.einsum("ij,ij->i", v1, v2)
    w = p1 - p2
    d1 = np.einsum("ij,ij->i", v1, w)
    d2 = np.einsum("ij,ij->i", v2, w)
    ok = np.abs(c) <= 1.0 - parallel_tolerance
    denom = np.where(ok, 1.0 - c * c, 1.0)
    s = (c * d2 - d1) / denom
    t = (d2 - c * d1) / denom
    h = 0.5 * ((p1 + s[:, None] * v1) + (p2 + t[:, None] * v2))
    h[~ok] = np.nan
    return h


def count_inliers(h, field, theta=0.99):
    """Points whose cone ``(h - p) . v / |h - p| >= theta`` contains ``h``; returns (count, indices)."""
    mask = kernels.inlier_mask(h, field.points, field.dirs, theta)
    idx = np.flatnonzero(mask)
    return len(idx), idx


def refine_least_squares(points, dirs, max_cond=1e12):
    """Point minimizing the summed squared distance to the lines ``p_k + s v_k``."""
    points = np.asarray(points, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    if len(points) < 2:
        raise np.linalg.LinAlgError("least-squares center needs at least two lines")
    proj = np.eye(3)[None, :, :] - dirs[:, :, None] * dirs[:, None, :]
    a = proj.sum(axis=0)
    b = np.einsum("kij,kj->i", proj, points)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > max_cond:
        raise np.linalg.LinAlgError(f"lines are near-parallel (condition number {cond:.3g})")
    return np.linalg.solve(a, b)


def sample_pair(seed, index, k):
    """Two distinct point indices for hypothesis ``index``; duplicates are redrawn."""
    rng = np.random.Generator(np.random.Philox(key=[seed, index]))
    i = int(rng.integers(k))
    j = int(rng.integers(k))
    while j == i:
        j = int(rng.integers(k))
    return i, j


def _score_chunks(hyps, field, theta, threads):
    if threads <= 1 or len(hyps) < 2:
        return kernels.count_inliers(hyps, field.points, field.dirs, theta)
    chunks = np.array_split(np.arange(len(hyps)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda c: kernels.count_inliers(hyps[c], field.points, field.dirs, theta), chunks)
        return np.concatenate(list(parts))


def _success_probability(inlier_ratio, n_hyps):
    return 1.0 - (1.0 - inlier_ratio**2) ** n_hyps


def ransac_vote(field, config=RansacConfig(), threads=1):
    """Estimate the common center the field's vectors point at.

    Runs up to ``max_rounds`` rounds of ``batch_size`` hypotheses and stops
    early once ``1 - (1 - w^2)^H >= success_prob``, with ``w`` the best
    inlier ratio so far and ``H`` the number of valid hypotheses. Ties in
    inlier count go to the earliest hypothesis. If the winner has fewer than
    two inliers its raw point is returned with ``refined=False``.
    """
    k = len(field)
    if k < 2:
        raise ValueError(f"voting needs at least two points, got {k}")

    best = None
    evaluated = 0
    rejected = 0
    rounds = 0
    for rnd in range(config.max_rounds):
        rounds = rnd + 1
        base = rnd * config.batch_size
        pairs = np.array([sample_pair(config.seed, base + b, k) for b in range(config.batch_size)])
        hyps = _pair_hypotheses(field.points[pairs[:, 0]], field.dirs[pairs[:, 0]],
                                field.points[pairs[:, 1]], field.dirs[pairs[:, 1]],
                                config.parallel_tolerance)
        valid = np.flatnonzero(~np.isnan(hyps[:, 0]))
        rejected += config.batch_size - len(valid)
        evaluated += len(valid)
        if len(valid):
            counts = _score_chunks(hyps[valid], field, config.theta, threads)
            # argmax returns the first maximum, i.e. the lowest source index
            j = int(np.argmax(counts))
            if best is None or counts[j] > best.inlier_count:
                best = Hypothesis(point=hyps[valid[j]], inlier_count=int(counts[j]),
                                  source_index=int(base + valid[j]))
        if best is not None and _success_probability(best.inlier_count / k, evaluated) >= config.success_prob:
            break

    if best is None:
        raise DegenerateFieldError("degenerate field: every sampled pair was near-parallel")

    _, inliers = count_inliers(best.point, field, config.theta)
    center = best.point
    refined = False
    if len(inliers) >= 2:
        try:
            center = refine_least_squares(field.points[inliers], field.dirs[inliers])
            refined = True
        except np.linalg.LinAlgError:
            refined = False
    return VoteResult(center=np.asarray(center, dtype=np.float64), inlier_indices=inliers,
                      hypotheses_evaluated=evaluated, rounds=rounds, best=best,
                      refined=refined, rejected_pairs=rejected)
