"""ADD-family pose errors and accuracy/AUC aggregation."""

from dataclasses import dataclass

import numpy as np

from . import kernels, so3


@dataclass(frozen=True)
class PoseError:
    add: float
    adds: float
    rot_angle: float
    trans_err: float

    def to_json(self):
        return {"add": self.add, "adds": self.adds, "rot_angle": self.rot_angle, "trans_err": self.trans_err}


@dataclass(frozen=True)
class EvalReport:
    per_object: dict
    curve: list

    def to_json(self):
        return {
            "per_object": {k: dict(v) for k, v in sorted(self.per_object.items())},
            "curve": [[t, a] for t, a in self.curve],
        }


def add_error(pred, gt, model):
    """Mean distance between model points under the two poses (fixed correspondence)."""
    diff = pred.apply(model.points) - gt.apply(model.points)
    return float(np.linalg.norm(diff, axis=1).mean())


def adds_error(pred, gt, model):
    """Mean distance from each predicted model point to the closest ground-truth one."""
    dist, _ = kernels.nearest_neighbors(pred.apply(model.points), gt.apply(model.points))
    return float(dist.mean())


def add_auto(pred, gt, model):
    """ADD-S for symmetric models, ADD otherwise."""
    return adds_error(pred, gt, model) if model.symmetric else add_error(pred, gt, model)


def _errors(errors):
    errors = np.asarray(errors, dtype=np.float64).reshape(-1)
    if errors.size == 0:
        raise ValueError("error list is empty")
    return errors


def accuracy_at_threshold(errors, threshold):
    """Fraction of errors strictly below ``threshold``."""
    errors = _errors(errors)
    return float(np.count_nonzero(errors < threshold) / errors.size)


def auc(errors, max_threshold=0.1):
    """Area under the accuracy-threshold curve on [0, max_threshold], normalized to [0, 1].

    Integrates the step function exactly: each error ``e`` is counted on
    ``(e, max_threshold]``, contributing ``max(0, 1 - e / max_threshold)``.
    """
    errors = _errors(errors)
    if not max_threshold > 0:
        raise ValueError("max_threshold must be positive")
    covered = np.clip(1.0 - errors / max_threshold, 0.0, 1.0)
    # NaN/inf errors (failed instances) never count as hits
    covered = np.where(np.isfinite(errors), covered, 0.0)
    return float(covered.mean())


def accuracy_curve(errors, thresholds):
    thresholds = np.asarray(thresholds, dtype=np.float64).reshape(-1)
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    errors = _errors(errors)
    return [(float(t), accuracy_at_threshold(errors, t)) for t in thresholds]


def decoupled_errors(pred, gt, model):
    return PoseError(
        add=add_error(pred, gt, model),
        adds=adds_error(pred, gt, model),
        rot_angle=float(so3.geodesic_angle(pred.rotation, gt.rotation)),
        trans_err=float(np.linalg.norm(pred.translation - gt.translation)),
    )


def evaluate(records, diameters, add_frac=0.1, auc_max=0.1, thresholds=None):
    """Aggregate ``(object_id, error)`` pairs into an EvalReport.

    Accuracy per object uses ``add_frac * diameter``; AUC uses ``auc_max``
    meters. The curve pools all objects over ``thresholds`` (default: 101
    evenly spaced points on [0, auc_max]).
    """
    if thresholds is None:
        thresholds = np.linspace(0.0, auc_max, 101)
    by_object = {}
    for obj_id, err in records:
        by_object.setdefault(obj_id, []).append(err)
    per_object = {}
    for obj_id in sorted(by_object):
        errs = np.array(by_object[obj_id], dtype=np.float64)
        per_object[obj_id] = {
            "accuracy": accuracy_at_threshold(errs, add_frac * diameters[obj_id]),
            "auc": auc(errs, auc_max),
            "n": int(errs.size),
        }
    pooled = [err for _, err in records]
    curve = accuracy_curve(pooled, thresholds) if pooled else []
    return EvalReport(per_object=per_object, curve=curve)
