"""Command-line entry point: ``anchorpose {anchors,fit,vote,eval,bench}``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 internal
invariant violation.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, anchors, bench, metrics, model_io, optim, so3, voting

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


class InvariantError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="master random seed")
    parser.add_argument("--threads", type=int, default=default, help="worker threads (default 1)")
    parser.add_argument("--config", type=Path, default=default, help="JSON file with BenchConfig fields")
    parser.add_argument("--out", type=Path, default=default, help="output directory")


def _shape_arg(text):
    """``kind:d1,d2[,d3]`` -> ShapeSpec JSON dict (point count set by --points)."""
    kind, _, dims = text.partition(":")
    try:
        values = [float(v) for v in dims.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shape dimensions in {text!r}") from None
    return {"kind": kind, "dims": values}


def build_parser():
    parser = _Parser(prog="anchorpose", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=True)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("anchors", parents=[common], help="dump or verify an anchor group")
    p.add_argument("action", choices=("dump", "verify"))
    p.add_argument("--group", choices=anchors.GROUP_NAMES, default=None,
                   help="group to dump (required) or verify (default: all)")
    p.add_argument("--samples", type=int, default=200_000, help="covering-radius samples for verify")

    def model_flags(p):
        p.add_argument("--model", type=Path, help="ASCII PLY model (sidecar .meta.json honored)")
        p.add_argument("--shape", type=_shape_arg, help="synthetic model, e.g. box:0.05,0.05,0.1")
        p.add_argument("--points", type=int, default=None, help="points for --shape (default 500)")
        sym = p.add_mutually_exclusive_group()
        sym.add_argument("--symmetric", dest="symmetric", action="store_true", default=None)
        sym.add_argument("--asymmetric", dest="symmetric", action="store_false")

    p = sub.add_parser("fit", parents=[common], help="fit rotations to random targets")
    model_flags(p)
    p.add_argument("--anchors", choices=bench.ANCHOR_CHOICES, default=None)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--tol", type=float, default=optim.SUCCESS_TOL, help="normalized-loss success tolerance")

    p = sub.add_parser("vote", parents=[common], help="RANSAC center vote on a field file")
    p.add_argument("field", type=Path, help='JSON {"points": [...], "dirs": [...]}')
    p.add_argument("--theta", type=float, default=voting.RansacConfig.theta)
    p.add_argument("--batch", type=int, default=voting.RansacConfig.batch_size)
    p.add_argument("--max-rounds", type=int, default=voting.RansacConfig.max_rounds)

    p = sub.add_parser("eval", parents=[common], help="score predicted poses against ground truth")
    p.add_argument("--gt", type=Path, required=True, help="JSON Lines ground-truth poses")
    p.add_argument("--pred", type=Path, required=True, help="JSON Lines predicted poses")
    p.add_argument("--models", type=Path, required=True, help="directory of <object_id>.ply files")
    p.add_argument("--auc-max", type=float, default=0.1)
    p.add_argument("--add-frac", type=float, default=0.1)
    p.add_argument("--thresholds", type=int, default=101, help="points on the accuracy curve")

    p = sub.add_parser("bench", parents=[common], help="end-to-end synthetic benchmark")
    model_flags(p)
    p.add_argument("--anchors", choices=bench.ANCHOR_CHOICES, default=None)
    p.add_argument("--instances", type=int, default=None)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--outliers", type=float, default=None, help="outlier fraction in [0, 1)")
    p.add_argument("--dir-noise", type=float, default=None, help="direction noise std (degrees)")
    p.add_argument("--rot-noise", type=float, default=None, help="rotation noise std (degrees)")
    return parser


# -- helpers -------------------------------------------------------------------

def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _read_jsonl(path):
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    out = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{n}: invalid JSON: {exc.msg}") from None
    return out


def _load_config(args):
    if getattr(args, "config", None) is None:
        return {}
    obj = _read_json(args.config)
    if not isinstance(obj, dict):
        raise ConfigError(f"{args.config}: expected a JSON object")
    return obj


def _emit(obj, args, name):
    text = json.dumps(obj, indent=2) + "\n"
    out = getattr(args, "out", None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    sys.stdout.write(text)


def _model_from_args(args, cfg):
    symmetric = args.symmetric if args.symmetric is not None else cfg.get("symmetric")
    path = args.model or cfg.get("model_path")
    if path is not None:
        try:
            return model_io.load_ply(path, symmetric=symmetric)
        except FileNotFoundError:
            raise DataError(f"{path}: no such file") from None
    shape = dict(args.shape or cfg.get("shape") or {"kind": "blob", "dims": [0.05]})
    if args.points is not None:
        shape["n"] = args.points
    try:
        spec = model_io.ShapeSpec.from_json(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad shape: {exc}") from None
    return model_io.generate(spec, bench.stream(_seed(args, cfg), -1, "cloud"), symmetric=symmetric)


def _seed(args, cfg):
    seed = getattr(args, "seed", None)
    return int(cfg.get("seed", 0) if seed is None else seed)


# -- subcommands ---------------------------------------------------------------

def cmd_anchors(args):
    if args.action == "dump":
        if args.group is None:
            raise ConfigError("anchors dump needs --group")
        _emit(anchors.to_json(anchors.generate(args.group)), args, f"anchors_{args.group}.json")
        return EXIT_OK
    rng = np.random.default_rng(_seed(args, {}))
    expected = {"tetra12": (12, 120.0), "octa24": (24, 90.0), "icosa60": (60, 72.0)}
    groups = [args.group] if args.group else list(anchors.GROUP_NAMES)
    report, ok = {}, True
    for g in groups:
        s = anchors.generate(g)
        size, min_deg = expected[g]
        entry = {
            "size": len(s),
            "closure_error": anchors.closure_error(s),
            "min_pairwise_angle_deg": math.degrees(s.min_pairwise_angle),
            "covering_radius_deg": math.degrees(anchors.covering_radius(s, args.samples, rng)),
        }
        entry["ok"] = (entry["size"] == size and entry["closure_error"] < 1e-9
                       and abs(entry["min_pairwise_angle_deg"] - min_deg) < 1e-9)
        ok &= entry["ok"]
        report[g] = entry
    radii = [report[g]["covering_radius_deg"] for g in groups]
    report["covering_radius_decreasing"] = all(a > b for a, b in zip(radii, radii[1:]))
    ok &= report["covering_radius_decreasing"]
    _emit(report, args, "anchors_verify.json")
    if not ok:
        raise InvariantError("anchor group verification failed")
    return EXIT_OK


def cmd_fit(args):
    cfg = _load_config(args)
    model = _model_from_args(args, cfg)
    kind = args.anchors or cfg.get("anchors", "icosa60")
    if kind not in bench.ANCHOR_CHOICES:
        raise ConfigError(f"unknown anchors {kind!r}")
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    threads = getattr(args, "threads", None) or 1
    rng = np.random.default_rng(_seed(args, cfg))
    records = []
    for t in range(args.trials):
        gt = so3.random_rotation(rng)
        init = so3.random_rotation(rng)
        if kind == "none":
            res = optim.fit_direct(model, gt, init)
        else:
            res, _ = optim.fit_anchored(model, gt, kind, threads=threads)
        rec = {"trial": t, "gt_wxyz": gt.tolist(), **res.to_json(), "success": res.normalized_loss < args.tol}
        records.append(rec)
    losses = [r["normalized_loss"] for r in records]
    summary = {
        "model": model.id, "symmetric": model.symmetric, "anchors": kind, "trials": args.trials,
        "tol": args.tol, "success_rate": sum(r["success"] for r in records) / args.trials,
        "median_normalized_loss": float(np.median(losses)),
    }
    _emit({"records": records, "summary": summary}, args, "fit.json")
    return EXIT_OK


def cmd_vote(args):
    obj = _read_json(args.field)
    try:
        field_ = voting.VectorField.from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.field}: bad vector field: {exc}") from None
    try:
        cfg = voting.RansacConfig(theta=args.theta, batch_size=args.batch, max_rounds=args.max_rounds,
                                  seed=_seed(args, {}))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        res = voting.ransac_vote(field_, cfg, threads=getattr(args, "threads", None) or 1)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if res.hypotheses_evaluated > cfg.batch_size * cfg.max_rounds:
        raise InvariantError("evaluated more hypotheses than the budget allows")
    _emit(res.to_json(), args, "vote.json")
    return EXIT_OK


def _load_models(directory, ids):
    models = {}
    for obj_id in sorted(ids):
        path = Path(directory) / f"{obj_id}.ply"
        if not path.exists():
            raise DataError(f"no model file for object {obj_id!r} ({path})")
        models[obj_id] = model_io.load_ply(path, model_id=obj_id)
    return models


def cmd_eval(args):
    gt_rows, pred_rows = _read_jsonl(args.gt), _read_jsonl(args.pred)
    if len(gt_rows) != len(pred_rows):
        raise DataError(f"{len(gt_rows)} ground-truth records but {len(pred_rows)} predictions")
    if not (args.auc_max > 0 and args.add_frac > 0 and args.thresholds >= 2):
        raise ConfigError("--auc-max and --add-frac must be positive, --thresholds >= 2")
    try:
        ids = {r["object_id"] for r in gt_rows}
        models = _load_models(args.models, ids)
        records = []
        for n, (g, p) in enumerate(zip(gt_rows, pred_rows), 1):
            if g["object_id"] != p["object_id"]:
                raise DataError(f"record {n}: object_id {g['object_id']!r} vs {p['object_id']!r}")
            model = models[g["object_id"]]
            err = metrics.add_auto(model_io.Pose.from_json(p), model_io.Pose.from_json(g), model)
            records.append((g["object_id"], err))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad pose record: {exc!r}") from None
    report = metrics.evaluate(records, {k: m.diameter for k, m in models.items()}, add_frac=args.add_frac,
                              auc_max=args.auc_max, thresholds=np.linspace(0, args.auc_max, args.thresholds))
    _emit(report.to_json(), args, "eval.json")
    if args.out is not None:
        bench.write_curve_csv(args.out / "curve_add.csv", report.curve)
    return EXIT_OK


def _bench_config(args):
    cfg = _load_config(args)
    overrides = {
        "model_path": str(args.model) if args.model else None,
        "shape": args.shape and {**args.shape, "n": args.points or 500},
        "symmetric": args.symmetric,
        "anchors": args.anchors,
        "n_instances": args.instances,
        "n_points": args.n_points,
        "outlier_fraction": args.outliers,
        "dir_noise_deg": args.dir_noise,
        "rot_noise_deg": args.rot_noise,
        "seed": getattr(args, "seed", None),
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return bench.BenchConfig.from_json(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad bench config: {exc}") from None


def cmd_bench(args):
    config = _bench_config(args)
    try:
        report = bench.run_bench(config, threads=getattr(args, "threads", None) or 1)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from None
    if len(report.records) != config.n_instances:
        raise InvariantError("record count does not match n_instances")
    recomputed = bench.aggregate(report.records, report.model_id, report.diameter, config)
    if recomputed.to_json() != report.aggregate.to_json():
        raise InvariantError("aggregate does not match per-instance records")
    out = getattr(args, "out", None) or Path(".")
    bench.emit_report(report, out)
    summary = {"out": str(out), "n_failed": report.failed, **report.aggregate.to_json()["per_object"]}
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {"anchors": cmd_anchors, "fit": cmd_fit, "vote": cmd_vote, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, model_io.PlyError, voting.DegenerateFieldError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
