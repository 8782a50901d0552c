"""Rotation and translation objectives for anchor-based pose regression.

Uncertainty-weighted rotation loss, anchor range regularizer, smooth L1 for
center directions, and best-anchor selection. Losses that need gradients
get them analytically where closed form is simple; ``grad_fd`` is the
independent check.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels, so3

SIGMA_MIN = 1e-6


@dataclass(frozen=True)
class LossWeights:
    reg: float = 2.0
    trans: float = 5.0

    def __post_init__(self):
        if not (self.reg > 0 and self.trans > 0):
            raise ValueError("loss weights must be positive")


@dataclass(frozen=True)
class AnchorPrediction:
    """Per-anchor deviation quaternions (N, 4) and uncertainty scores (N,)."""

    deviations: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        dev = so3.normalize(np.asarray(self.deviations, dtype=np.float64).reshape(-1, 4))
        sig = np.asarray(self.sigmas, dtype=np.float64).reshape(-1)
        if len(dev) != len(sig):
            raise ValueError(f"{len(dev)} deviations but {len(sig)} sigmas")
        object.__setattr__(self, "deviations", dev)
        object.__setattr__(self, "sigmas", sig)

    def __len__(self):
        return len(self.sigmas)


@dataclass(frozen=True)
class AnchorEvaluation:
    index: int
    loss: float
    normalized: float


def relative_points(r, gt, points):
    """Model points under ``gt^-1 r``; losses are left-invariant so this suffices."""
    return so3.rotate(so3.compose(so3.inverse(gt), r), points)


def shape_match_loss(r, gt, model):
    """Mean model-point displacement between rotations ``r`` and ``gt`` (meters).

    Symmetric models use closest-point matching, asymmetric ones the fixed
    point-to-point correspondence.
    """
    moved = relative_points(r, gt, model.points)
    if model.symmetric:
        dist, _ = kernels.nearest_neighbors(moved, model.points)
        return float(dist.mean())
    return float(np.linalg.norm(moved - model.points, axis=1).mean())


def normalized_shape_match(r, gt, model):
    return shape_match_loss(r, gt, model) / model.diameter


def total_rotation(i, deviation, anchor_set):
    """Deviation applied on top of anchor ``i``."""
    if not 0 <= i < len(anchor_set):
        raise IndexError(f"anchor index {i} out of range for {len(anchor_set)} anchors")
    return so3.compose(deviation, anchor_set.quats[i])


def _check_lengths(pred, anchor_set):
    if len(pred) != len(anchor_set):
        raise ValueError(f"prediction has {len(pred)} anchors, anchor set has {len(anchor_set)}")


def _check_sigmas(sigmas):
    bad = np.flatnonzero((sigmas < SIGMA_MIN) | (sigmas > 1.0) | ~np.isfinite(sigmas))
    if len(bad):
        i = int(bad[0])
        raise ValueError(f"sigma[{i}] = {sigmas[i]!r} outside [{SIGMA_MIN}, 1]")


def evaluate_anchors(pred, gt, anchor_set, model):
    """Per-anchor shape-match loss of the total rotations, in index order."""
    _check_lengths(pred, anchor_set)
    total = so3.compose(pred.deviations, anchor_set.quats)
    out = []
    for i, r in enumerate(total):
        loss = shape_match_loss(r, gt, model)
        out.append(AnchorEvaluation(index=i, loss=loss, normalized=loss / model.diameter))
    return out


def uncertainty_terms(sigmas, normalized):
    """Per-anchor negative log-likelihood ``ln s + d / s``."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    normalized = np.asarray(normalized, dtype=np.float64)
    return np.log(sigmas) + normalized / sigmas


def uncertainty_grad(sigmas, normalized):
    """Derivative of ``uncertainty_terms`` with respect to each sigma."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    return 1.0 / sigmas - np.asarray(normalized, dtype=np.float64) / sigmas**2


def probabilistic_loss(pred, gt, anchor_set, model):
    """Sum over anchors of ``ln s_i + d_i / s_i``; returns (loss, evaluations)."""
    _check_lengths(pred, anchor_set)
    _check_sigmas(pred.sigmas)
    evals = evaluate_anchors(pred, gt, anchor_set, model)
    d = np.array([e.normalized for e in evals])
    return float(uncertainty_terms(pred.sigmas, d).sum()), evals


def regularization_loss(pred, anchor_set):
    """Hinge penalty for total rotations that leave their anchor's region.

    Term ``i`` is ``max(0, max_{j != i} |<q_i, a_j>| - |<q_i, a_i>|)``.
    Absolute dot products identify ``q`` with ``-q``.
    """
    _check_lengths(pred, anchor_set)
    total = so3.compose(pred.deviations, anchor_set.quats)
    sims = np.abs(total @ anchor_set.quats.T)
    own = np.diag(sims).copy()
    np.fill_diagonal(sims, -np.inf)
    return float(np.maximum(0.0, sims.max(axis=1) - own).sum())


def smooth_l1_vectors(pred_dirs, gt_dirs, beta=1.0):
    """Huber-style loss averaged over points and components."""
    pred_dirs = np.asarray(pred_dirs, dtype=np.float64)
    gt_dirs = np.asarray(gt_dirs, dtype=np.float64)
    if pred_dirs.shape != gt_dirs.shape:
        raise ValueError(f"shape mismatch: {pred_dirs.shape} vs {gt_dirs.shape}")
    e = np.abs(pred_dirs - gt_dirs)
    per = np.where(e < beta, 0.5 * e**2 / beta, e - 0.5 * beta)
    return float(per.mean())


def total_loss(rot, reg, trans, weights=LossWeights()):
    return rot + weights.reg * reg + weights.trans * trans


def select_best(pred, anchor_set):
    """Anchor with the smallest uncertainty (lowest index on ties) and its total rotation."""
    _check_lengths(pred, anchor_set)
    i = int(np.argmin(pred.sigmas))
    return i, total_rotation(i, pred.deviations[i], anchor_set)


def grad_fd(objective, x, eps=1e-6):
    """Central-difference gradient of a scalar ``objective`` at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for k in range(x.size):
        step = np.zeros_like(x)
        step.flat[k] = eps
        hi = objective(x + step)
        lo = objective(x - step)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(f"objective not finite near component {k}")
        g.flat[k] = (hi - lo) / (2.0 * eps)
    return g
