"""Full workflow for a run configuration: primitives, HGG, extension, QGG, trials.

Each object gets its own output directory.  Every random stream is derived
from the run seed, the object's position in the selection and the stage, so
stages can be rerun in isolation and two runs with one seed write identical
files.  Wall-clock timings are logged, never written to disk.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import RunConfig
from .dataset import GraspDataset, save_csv, synth_primitives
from .objects import SdfObject, resolve_object
from .pipeline import (
    TrialReport,
    dataset_stats,
    extend_dataset,
    latent_sweep_report,
    pick_thresholds,
    run_trials,
    stats_line,
    write_text,
)
from .vae import VaeModel, save_model, train

STAGES = ("primitives", "hgg", "extend", "qgg", "trials")
SWEEP_POINTS = 91


def stage_seed(seed: int, object_index: int, stage: str) -> int:
    """Deterministic 63-bit seed for one stage of one object."""
    ss = np.random.SeedSequence([seed, object_index, STAGES.index(stage)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass
class ObjectRun:
    obj: SdfObject
    primitives: GraspDataset
    hgg: VaeModel
    extended: GraspDataset
    qgg: VaeModel
    thresholds: dict
    report: TrialReport
    timings: dict = field(default_factory=dict)

    @property
    def generated(self) -> GraspDataset:
        n = len(self.primitives)
        return GraspDataset(self.extended.records[n:], self.obj.name, "generated")


def run_object(cfg: RunConfig, obj: SdfObject, index: int, out: Optional[Path] = None,
               log: Callable[[str], None] = lambda s: None) -> ObjectRun:
    seeds = {s: stage_seed(cfg.seed, index, s) for s in STAGES}
    timings = {}

    t = time.perf_counter()
    prims = synth_primitives(obj, cfg.primitive_per_type, np.random.default_rng(seeds["primitives"]),
                             cfg.eval, total=cfg.primitive_count(obj.name))
    timings["primitives"] = time.perf_counter() - t
    log(f"{obj.name}: {len(prims)} primitives ({timings['primitives']:.1f} s)")

    t = time.perf_counter()
    hgg, _ = train(cfg.hgg_arch, prims, replace(cfg.hgg_train, seed=seeds["hgg"]))
    timings["hgg"] = time.perf_counter() - t
    log(f"{obj.name}: HGG trained ({timings['hgg']:.1f} s)")

    t = time.perf_counter()
    ext = extend_dataset(hgg, obj, prims, cfg.per_stable, cfg.eval,
                         np.random.default_rng(seeds["extend"]), cfg.workers, seeds["extend"])
    timings["extend"] = time.perf_counter() - t
    log(f"{obj.name}: extended to {len(ext)} records ({timings['extend']:.1f} s)")

    t = time.perf_counter()
    qgg, _ = train(cfg.qgg_arch, ext, replace(cfg.qgg_train, seed=seeds["qgg"]))
    timings["qgg"] = time.perf_counter() - t
    log(f"{obj.name}: QGG trained ({timings['qgg']:.1f} s)")

    t = time.perf_counter()
    thresholds = pick_thresholds(ext, cfg.threshold)
    report = run_trials(qgg, obj, thresholds, np.random.default_rng(seeds["trials"]), cfg.eval,
                        cfg.trials, cfg.workspace, cfg.planner, seeds["trials"])
    report.primitive_stats = dataset_stats(prims)
    report.generated_stats = dataset_stats(GraspDataset(ext.records[len(prims):], obj.name, "generated"))
    timings["trials"] = time.perf_counter() - t
    log(f"{obj.name}: {len(report.trials)} trials ({timings['trials']:.1f} s)")

    run = ObjectRun(obj, prims, hgg, ext, qgg, thresholds, report, timings)
    if out is not None:
        write_object_outputs(run, out / obj.name)
    return run


def write_object_outputs(run: ObjectRun, d: Path) -> None:
    d.mkdir(parents=True, exist_ok=True)
    save_csv(run.primitives, d / "primitives.csv")
    save_csv(run.extended, d / "extended.csv")
    save_model(run.hgg, d / "hgg.npz")
    save_model(run.qgg, d / "qgg.npz")
    write_text(d / "trials.csv", run.report.trials_csv())
    write_text(d / "summary.csv", run.report.summary_csv())
    write_text(d / "summary.txt", run.report.summary_text())
    for stable in run.obj.stable_poses:
        for kind, model in (("hgg", run.hgg), ("qgg", run.qgg)):
            sweep = latent_sweep_report(model, stable, SWEEP_POINTS, run.primitives)
            write_text(d / f"sweep_{kind}_pose{stable.id}.csv", sweep.to_csv())
            write_text(d / f"sweep_{kind}_pose{stable.id}_primitives.csv", sweep.overlay_csv())


def run_pipeline(cfg: RunConfig, write: bool = True,
                 log: Callable[[str], None] = lambda s: None) -> list[ObjectRun]:
    """Run every selected object and, with ``write``, fill ``cfg.output_dir``."""
    objects = [resolve_object(name) for name in cfg.objects]
    out = cfg.output_path if write else None
    runs = [run_object(cfg, obj, i, out, log) for i, obj in enumerate(objects)]
    if write:
        write_text(out / "report.txt", "".join(r.report.summary_text() for r in runs))
    return runs


def describe(runs: list[ObjectRun]) -> str:
    lines = []
    for r in runs:
        lines.append(f"{r.obj.name}: primitives {stats_line(dataset_stats(r.primitives))}")
        lines.append(f"{r.obj.name}: generated {stats_line(dataset_stats(r.generated))}")
    return "\n".join(lines) + "\n"
