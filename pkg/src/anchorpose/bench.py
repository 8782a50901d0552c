"""Deterministic end-to-end harness on synthetic scenes.

Each instance places the object at a random pose, builds the per-point
center-direction field the way a network would predict it (with outliers
and angular noise), votes for the translation, fits the rotation and scores
the result. All randomness comes from ``seed`` through named sub-streams per
instance, so a report can be replayed byte-for-byte from its config echo.
"""

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, metrics, model_io, optim, so3, voting

ANCHOR_CHOICES = ("none", "tetra12", "octa24", "icosa60")
_STREAMS = {"pose": 0, "cloud": 1, "noise": 2, "ransac": 3, "fit": 4}


@dataclass(frozen=True)
class BenchConfig:
    """Harness settings. ``shape`` is a ShapeSpec JSON dict; ``model_path`` (a PLY) wins over it."""

    shape: dict = field(default_factory=lambda: {"kind": "blob", "dims": [0.05], "n": 500})
    model_path: str = None
    symmetric: bool = None
    n_points: int = 500
    outlier_fraction: float = 0.0
    dir_noise_deg: float = 0.0
    rot_noise_deg: float = 0.0
    n_instances: int = 10
    anchors: str = "icosa60"
    ransac: dict = field(default_factory=lambda: dataclasses.asdict(voting.RansacConfig()))
    seed: int = 0
    add_frac: float = 0.1
    auc_max: float = 0.1
    n_thresholds: int = 101

    def __post_init__(self):
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1)")
        if self.dir_noise_deg < 0 or self.rot_noise_deg < 0:
            raise ValueError("noise levels must be non-negative")
        if self.n_points < 2 or self.n_instances < 1 or self.n_thresholds < 2:
            raise ValueError("n_points >= 2, n_instances >= 1 and n_thresholds >= 2 are required")
        if self.anchors not in ANCHOR_CHOICES:
            raise ValueError(f"anchors must be one of {ANCHOR_CHOICES}, got {self.anchors!r}")
        if not (self.add_frac > 0 and self.auc_max > 0):
            raise ValueError("add_frac and auc_max must be positive")
        if not 0 <= self.seed < 2**63:
            raise ValueError("seed must be a non-negative 63-bit integer")
        # store the full ransac settings so the config echo is self-contained
        object.__setattr__(self, "ransac", dataclasses.asdict(self.ransac_config()))
        if self.model_path is None:
            model_io.ShapeSpec.from_json(self.shape)

    def ransac_config(self, seed=None):
        if not isinstance(self.ransac, dict):
            raise ValueError("ransac must be a JSON object of RansacConfig fields")
        fields = dict(self.ransac)
        if seed is not None:
            fields["seed"] = seed
        return voting.RansacConfig(**fields)

    def to_json(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ValueError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class BenchReport:
    config: BenchConfig
    model_id: str
    diameter: float
    records: list
    aggregate: metrics.EvalReport
    version: str = __version__

    @property
    def failed(self):
        return sum(1 for r in self.records if r["failed"])

    def to_json(self):
        return {
            "tool": "anchorpose",
            "version": self.version,
            "config": self.config.to_json(),
            "model": {"id": self.model_id, "diameter_m": self.diameter},
            "n_failed": self.failed,
            "aggregate": self.aggregate.to_json(),
            "records": self.records,
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2) + "\n"


def load_model(config):
    if config.model_path is not None:
        return model_io.load_ply(config.model_path, symmetric=config.symmetric)
    spec = model_io.ShapeSpec.from_json(config.shape)
    rng = stream(config.seed, -1, "cloud")
    return model_io.generate(spec, rng, symmetric=config.symmetric)


def stream(seed, instance, name):
    """Generator for the named sub-stream of one instance (``instance=-1`` is run-level)."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(instance + 1, _STREAMS[name]))
    return np.random.Generator(np.random.PCG64(seq))


def perturb_directions(dirs, noise_deg, rng):
    """Rotate each unit vector by a Gaussian angle (std ``noise_deg``) about a random perpendicular axis."""
    if noise_deg == 0:
        return dirs
    axis = np.cross(dirs, rng.standard_normal(dirs.shape))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    ang = np.radians(noise_deg) * rng.standard_normal(len(dirs))
    # Rodrigues with axis perpendicular to the vector
    out = dirs * np.cos(ang)[:, None] + np.cross(axis, dirs) * np.sin(ang)[:, None]
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def corrupt_field(field_, outlier_fraction, noise_deg, rng):
    """Replace ``round(f * K)`` directions with random ones and jitter the rest."""
    k = len(field_)
    n_out = int(round(outlier_fraction * k))
    dirs = field_.dirs.copy()
    outliers = np.sort(rng.choice(k, size=n_out, replace=False)) if n_out else np.zeros(0, dtype=np.int64)
    keep = np.setdiff1d(np.arange(k), outliers)
    dirs[keep] = perturb_directions(dirs[keep], noise_deg, rng)
    if n_out:
        rand = rng.standard_normal((n_out, 3))
        dirs[outliers] = rand / np.linalg.norm(rand, axis=1, keepdims=True)
    return voting.VectorField(field_.points, dirs), outliers


def _fit_rotation(model, target, config, rng):
    if config.anchors == "none":
        res = optim.fit_direct(model, target, so3.random_rotation(rng))
    else:
        res, _ = optim.fit_anchored(model, target, config.anchors)
    return res


def run_instance(model, config, index):
    """One synthetic scene; failures come back as a record with ``failed=True``."""
    pose_rng = stream(config.seed, index, "pose")
    gt = model_io.Pose(so3.random_rotation(pose_rng), pose_rng.uniform(-0.5, 0.5, size=3))
    cloud_rng = stream(config.seed, index, "cloud")
    replace = config.n_points > len(model)
    picks = np.sort(cloud_rng.choice(len(model), size=config.n_points, replace=replace))
    rec = {"instance": index, "gt": gt.to_json(), "failed": False}
    try:
        cloud = gt.apply(model.points[picks])
        clean = voting.make_field(cloud, gt.translation)
        noise_rng = stream(config.seed, index, "noise")
        field_, outliers = corrupt_field(clean, config.outlier_fraction, config.dir_noise_deg, noise_rng)
        rseed = int(stream(config.seed, index, "ransac").integers(2**63))
        vote = voting.ransac_vote(field_, config.ransac_config(seed=rseed))
        # the rotation is fitted against a target that carries the rotation noise
        target = gt.rotation
        if config.rot_noise_deg > 0:
            omega = np.radians(config.rot_noise_deg) * noise_rng.standard_normal(3) / math.sqrt(3.0)
            target = so3.compose(so3.exp_map(omega), gt.rotation)
        fit = _fit_rotation(model, target, config, stream(config.seed, index, "fit"))
        est = model_io.Pose(fit.rotation, vote.center)
        err = metrics.decoupled_errors(est, gt, model)
    except (ValueError, np.linalg.LinAlgError) as exc:
        rec.update(failed=True, error=f"{type(exc).__name__}: {exc}", metric_error_m=None)
        return rec
    rec.update(
        estimate=est.to_json(),
        errors=err.to_json(),
        metric_error_m=err.adds if model.symmetric else err.add,
        vote={"inliers": int(len(vote.inlier_indices)), "outliers_injected": int(len(outliers)),
              "hypotheses": vote.hypotheses_evaluated, "rounds": vote.rounds, "refined": vote.refined},
        fit={"anchor": fit.anchor, "normalized_loss": fit.normalized_loss, "iters": fit.iters,
             "converged": fit.converged},
    )
    return rec


def aggregate(records, model_id, diameter, config):
    """EvalReport over the records; failed instances count as infinite error."""
    errs = [(model_id, math.inf if r["metric_error_m"] is None else r["metric_error_m"]) for r in records]
    thresholds = np.linspace(0.0, config.auc_max, config.n_thresholds)
    return metrics.evaluate(errs, {model_id: diameter}, add_frac=config.add_frac,
                            auc_max=config.auc_max, thresholds=thresholds)


def run_bench(config, threads=1):
    """Run every instance and assemble the report in instance order."""
    model = load_model(config)
    indices = range(config.n_instances)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda i: run_instance(model, config, i), indices))
    else:
        records = [run_instance(model, config, i) for i in indices]
    return BenchReport(config=config, model_id=model.id, diameter=model.diameter, records=records,
                       aggregate=aggregate(records, model.id, model.diameter, config))


def write_curve_csv(path, curve):
    lines = ["threshold_m,accuracy"] + [f"{t!r},{a!r}" for t, a in curve]
    Path(path).write_text("\n".join(lines) + "\n")


def emit_report(report, out_dir, formats=("json", "csv")):
    """Write ``report.json`` and/or ``curve_add.csv`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if "json" in formats:
        p = out / "report.json"
        p.write_text(report.dumps())
        paths.append(p)
    if "csv" in formats:
        p = out / "curve_add.csv"
        write_curve_csv(p, report.aggregate.curve)
        paths.append(p)
    return paths
