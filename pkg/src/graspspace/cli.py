"""Command-line interface, one subcommand per workflow stage.

Exit codes: 0 success, 1 usage error, 2 validation error (bad input files,
configs or arguments), 3 planning or training failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .dataset import load_csv, merge, save_csv, synth_primitives
from .errors import (
    DivergenceError,
    GraspSpaceError,
    InsufficientPrimitivesError,
    NoSuccessError,
    PlanningFailure,
)
from .mathcore import Pose, quat_from_axis_angle, pose_compose
from .objects import resolve_object
from .pipeline import (
    ThresholdPolicy,
    dataset_stats,
    evaluate_records,
    extend_dataset,
    latent_sweep_report,
    pick_thresholds,
    plan_grasp,
    run_trials,
    stats_line,
    write_text,
)
from .vae import load_model, save_model, train

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_FAILURE = 0, 1, 2, 3
FAILURES = (PlanningFailure, DivergenceError, InsufficientPrimitivesError, NoSuccessError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _rng(args, cfg: RunConfig) -> np.random.Generator:
    return np.random.default_rng(cfg.seed)


def cmd_synth(args) -> None:
    cfg = _config(args)
    obj = resolve_object(args.object)
    total = args.count if args.count is not None else cfg.primitive_count(obj.name)
    ds = synth_primitives(obj, cfg.primitive_per_type, _rng(args, cfg), cfg.eval, total=total)
    save_csv(ds, args.out)
    print(f"{obj.name}: {len(ds)} primitives -> {args.out}")


def cmd_ingest(args) -> None:
    """Validate hand-authored primitives and write them with measured quality."""
    cfg = _config(args)
    obj = resolve_object(args.object)
    ds = load_csv(args.csv, object_name=obj.name, provenance="primitive")
    ds.check_object(obj)
    records = evaluate_records(obj, ds.records, cfg.eval, cfg.seed, cfg.workers)
    out = type(ds)(tuple(records), obj.name, "primitive")
    save_csv(out, args.out)
    print(f"{obj.name}: {len(out)} primitives ingested, {stats_line(dataset_stats(out))}")


def _train_cmd(args, kind: str) -> None:
    cfg = _config(args)
    ds = load_csv(args.data)
    arch = cfg.hgg_arch if kind == "hgg" else cfg.qgg_arch
    tc = cfg.hgg_train if kind == "hgg" else cfg.qgg_train
    if args.epochs is not None:
        tc = replace(tc, epochs=args.epochs)
    model, history = train(arch, ds, replace(tc, seed=cfg.seed))
    save_model(model, args.out)
    print(f"{kind} trained on {len(ds)} records, final loss {history[-1]:.6g} -> {args.out}")


def cmd_extend(args) -> None:
    cfg = _config(args)
    obj = resolve_object(args.object)
    hgg = load_model(args.hgg, require="hgg")
    prims = load_csv(args.primitives, object_name=obj.name)
    per_stable = args.per_stable if args.per_stable is not None else cfg.per_stable
    ext = extend_dataset(hgg, obj, prims, per_stable, cfg.eval, _rng(args, cfg), cfg.workers, cfg.seed)
    save_csv(ext, args.out)
    print(f"{obj.name}: {len(ext)} records, {stats_line(dataset_stats(ext))} -> {args.out}")


def _thresholds(args, cfg, data):
    policy = ThresholdPolicy.parse(args.threshold) if args.threshold else cfg.threshold
    return pick_thresholds(data, policy)


def cmd_plan(args) -> None:
    cfg = _config(args)
    obj = resolve_object(args.object)
    stable = obj.stable_pose(args.stable_id)
    qgg = load_model(args.qgg, require="qgg")
    thr = _thresholds(args, cfg, load_csv(args.data, object_name=obj.name))[stable.id]
    x, y, yaw = args.pose
    world = pose_compose(Pose([x, y, 0.0], quat_from_axis_angle([0, 0, 1], yaw)), stable.object_pose_on_table)
    plan = plan_grasp(qgg, stable, world, thr, _rng(args, cfg), cfg.eval, cfg.workspace, cfg.planner)
    print(",".join(plan.record.row()))
    print(f"predicted {plan.predicted_quality:.6g} threshold {thr:.6g} samples {plan.samples} "
          f"threshold_passes {plan.threshold_passes} checks {plan.checks}")


def cmd_trials(args) -> None:
    cfg = _config(args)
    obj = resolve_object(args.object)
    qgg = load_model(args.qgg, require="qgg")
    data = load_csv(args.data, object_name=obj.name)
    trials = cfg.trials if args.poses is None else replace(cfg.trials, per_stable=args.poses)
    report = run_trials(qgg, obj, _thresholds(args, cfg, data), _rng(args, cfg), cfg.eval, trials,
                        cfg.workspace, cfg.planner, cfg.seed)
    out = Path(args.out)
    write_text(out / "trials.csv", report.trials_csv())
    write_text(out / "summary.csv", report.summary_csv())
    write_text(out / "summary.txt", report.summary_text())
    print(report.summary_text(), end="")


def cmd_sweep(args) -> None:
    obj = resolve_object(args.object)
    model = load_model(args.model)
    prims = load_csv(args.primitives, object_name=obj.name) if args.primitives else None
    sweep = latent_sweep_report(model, obj.stable_pose(args.stable_id), args.n, prims)
    write_text(args.out, sweep.to_csv())
    if prims is not None:
        write_text(Path(args.out).with_suffix(".primitives.csv"), sweep.overlay_csv())
    print(f"{args.n} sweep rows -> {args.out}")


def cmd_report(args) -> None:
    sets = [load_csv(p) for p in args.data]
    lines = []
    for p, ds in zip(args.data, sets):
        lines.append(f"{ds.object_name} {ds.provenance} ({p}): {stats_line(dataset_stats(ds))}")
        for sid in ds.stable_pose_ids():
            lines.append(f"  pose {sid}: {stats_line(dataset_stats(ds.for_stable_pose(sid)))}")
    text = "\n".join(lines) + "\n"
    if args.out:
        write_text(args.out, text)
    print(text, end="")


def cmd_run(args) -> None:
    from .runner import run_pipeline

    cfg = _config(args)
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    runs = run_pipeline(cfg, log=lambda s: print(s, file=sys.stderr))
    print("".join(r.report.summary_text() for r in runs), end="")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graspspace", description="Grasp-space learning pipeline.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.set_defaults(func=fn)
        return sp

    sp = add("synth-primitives", cmd_synth, "synthesize primitive grasps for an object")
    sp.add_argument("--object", required=True, help="builtin name or object JSON file")
    sp.add_argument("--count", type=int)
    sp.add_argument("--out", required=True)

    sp = add("ingest", cmd_ingest, "validate and evaluate a hand-authored primitive CSV")
    sp.add_argument("--object", required=True)
    sp.add_argument("--csv", required=True)
    sp.add_argument("--out", required=True)

    for kind in ("hgg", "qgg"):
        sp = add(f"train-{kind}", lambda a, k=kind: _train_cmd(a, k), f"train the {kind.upper()} model")
        sp.add_argument("--data", required=True)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--out", required=True)

    sp = add("extend", cmd_extend, "sample and evaluate HGG grasps")
    sp.add_argument("--object", required=True)
    sp.add_argument("--hgg", required=True)
    sp.add_argument("--primitives", required=True)
    sp.add_argument("--per-stable", type=int)
    sp.add_argument("--out", required=True)

    sp = add("plan", cmd_plan, "plan one grasp for an object pose")
    sp.add_argument("--object", required=True)
    sp.add_argument("--qgg", required=True)
    sp.add_argument("--data", required=True, help="extended dataset the threshold is taken from")
    sp.add_argument("--stable-id", type=int, required=True)
    sp.add_argument("--pose", type=float, nargs=3, metavar=("X", "Y", "YAW"), default=(0.6, 0.0, 0.0))
    sp.add_argument("--threshold", help="fixed(v) or percentile(p)")

    sp = add("trials", cmd_trials, "run a planning trial campaign")
    sp.add_argument("--object", required=True)
    sp.add_argument("--qgg", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--poses", type=int, help="object poses per stable pose")
    sp.add_argument("--threshold")
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("sweep", cmd_sweep, "decode an even latent sweep")
    sp.add_argument("--object", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--stable-id", type=int, required=True)
    sp.add_argument("--n", type=int, default=91)
    sp.add_argument("--primitives")
    sp.add_argument("--out", required=True)

    sp = add("report", cmd_report, "quality statistics of dataset files")
    sp.add_argument("data", nargs="+")
    sp.add_argument("--out")

    sp = add("run", cmd_run, "run the whole pipeline from a configuration")
    sp.add_argument("--out", help="override the output directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:   # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        args.func(args)
    except FAILURES as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (GraspSpaceError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
