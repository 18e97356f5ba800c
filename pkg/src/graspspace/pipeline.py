"""Dataset extension, threshold choice, grasp planning and trial reports.

The planner samples latents from the prior, keeps grasps whose predicted
quality clears a threshold, checks them against the table and the robot's
reach, and executes the best of a handful of admissible candidates.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import GraspDataset, GraspRecord, normalize_many
from .errors import NoSuccessError, PlanningFailure, ValidationError
from .evaluation import EvalParams, evaluate_batch, evaluate_grasp, item_rng, metric_noise
from .gripper import APPROACH, FingerState, check_table_collision
from .mathcore import Pose, pose_compose, quat_from_axis_angle
from .objects import SdfObject, StablePose
from .vae import VaeModel, decode, encode, sample_latents, SWEEP_RANGE

DOWN = np.array([0.0, 0.0, -1.0])
MAX_APPROACH_ANGLE = math.radians(135.0)
DECODE_CHUNK = 64


# dataset extension -----------------------------------------------------------

def evaluate_records(obj: SdfObject, records, params: EvalParams = EvalParams(), seed: int = 0,
                     workers: int = 1) -> list[GraspRecord]:
    """Records with their measured quality (0 on failure), in input order.

    Metric noise, when enabled, draws from a generator keyed on the record's
    index so results do not depend on ``workers``.
    """
    records = list(records)
    out = [None] * len(records)
    by_pose: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        by_pose.setdefault(r.stable_pose_id, []).append(i)
    for sid, idx in by_pose.items():
        stable = obj.stable_pose(sid)
        outcomes = evaluate_batch(obj, stable, [records[i].to_config() for i in idx], params, workers)
        for i, o in zip(idx, outcomes):
            q = metric_noise(o, params.noise_amplitude, item_rng(seed, i))
            out[i] = records[i].with_quality(q)
    return out


def extend_dataset(hgg: VaeModel, obj: SdfObject, primitives: GraspDataset, per_stable: int,
                   params: EvalParams = EvalParams(), rng: Optional[np.random.Generator] = None,
                   workers: int = 1, seed: int = 0) -> GraspDataset:
    """Primitives plus ``per_stable`` prior samples per stable pose, all evaluated.

    Records are quantized to their CSV precision before evaluation, so the
    qualities stored in a written file are exactly the ones it would reproduce.
    """
    if per_stable < 0:
        raise ValueError("per_stable must be non-negative")
    rng = rng if rng is not None else np.random.default_rng(seed)
    primitives.check_object(obj)
    generated = []
    for stable in obj.stable_poses:
        latents = sample_latents(per_stable, "prior", rng)
        if per_stable:
            generated.extend(decode(hgg, latents, stable.tabletop_plane_obj).records(stable.id))
    records = evaluate_records(obj, list(primitives.records) + generated, params, seed, workers)
    return GraspDataset(tuple(records), obj.name, "extended")


@dataclass(frozen=True)
class DatasetStats:
    total: int
    successful: int
    median: Optional[float]
    mean: Optional[float]
    max: Optional[float]


def dataset_stats(dataset: GraspDataset) -> DatasetStats:
    q = dataset.qualities()
    ok = q[np.isfinite(q) & (q > 0.0)]
    if ok.size == 0:
        return DatasetStats(len(dataset), 0, None, None, None)
    return DatasetStats(len(dataset), int(ok.size), float(np.median(ok)), float(ok.mean()), float(ok.max()))


# threshold ---------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdPolicy:
    """Either ``fixed`` with a quality value or ``percentile`` with p in [0, 100]."""

    kind: str = "percentile"
    value: float = 60.0

    def __post_init__(self):
        if self.kind not in ("fixed", "percentile"):
            raise ValidationError(f"unknown threshold policy {self.kind!r}")
        if not math.isfinite(self.value):
            raise ValidationError("threshold value must be finite")
        if self.kind == "percentile" and not 0.0 <= self.value <= 100.0:
            raise ValidationError("percentile must lie in [0, 100]")
        if self.kind == "fixed" and self.value < 0.0:
            raise ValidationError("fixed threshold must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "ThresholdPolicy":
        """``"percentile(60)"`` or ``"fixed(0.05)"``."""
        s = text.strip().replace(" ", "")
        for kind in ("fixed", "percentile"):
            if s.startswith(kind + "(") and s.endswith(")"):
                try:
                    return cls(kind, float(s[len(kind) + 1:-1]))
                except ValueError:
                    break
        raise ValidationError(f"bad threshold policy {text!r}; use fixed(v) or percentile(p)")

    def __str__(self) -> str:
        return f"{self.kind}({self.value:g})"


def pick_threshold(dataset: GraspDataset, policy: ThresholdPolicy) -> float:
    """Linear-interpolation percentile of successful qualities, or the fixed value."""
    if policy.kind == "fixed":
        return float(policy.value)
    q = dataset.qualities()
    ok = q[np.isfinite(q) & (q > 0.0)]
    if ok.size == 0:
        raise NoSuccessError("dataset has no successful grasp to take a percentile of")
    return float(np.percentile(ok, policy.value))


def pick_thresholds(dataset: GraspDataset, policy: ThresholdPolicy) -> dict[int, float]:
    """One threshold per stable pose, each from that pose's records only.

    Stable poses differ a lot in attainable quality, so a single percentile
    over the whole object can sit above everything one pose ever reaches.
    """
    return {sid: pick_threshold(dataset.for_stable_pose(sid), policy) for sid in dataset.stable_pose_ids()}


# planning ----------------------------------------------------------------------

@dataclass(frozen=True)
class Workspace:
    """Axis-aligned box the gripper origin must stay inside (world frame)."""

    lo: tuple = (0.25, -0.35, 0.0)
    hi: tuple = (0.95, 0.35, 0.6)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a >= b for a, b in zip(lo, hi)):
            raise ValidationError("workspace box needs three increasing (lo, hi) pairs")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))


def gripper_world_pose(object_world: Pose, record: GraspRecord) -> Pose:
    return pose_compose(object_world, Pose(record.position, record.orientation))


def reachable(gripper_world: Pose, workspace: Workspace = Workspace(),
              max_angle: float = MAX_APPROACH_ANGLE) -> bool:
    """Origin inside the box and approach direction within ``max_angle`` of straight down."""
    p = gripper_world.position
    if np.any(p < workspace.lo) or np.any(p > workspace.hi):
        return False
    approach = gripper_world.rotation @ APPROACH
    return float(np.arccos(np.clip(approach @ DOWN, -1.0, 1.0))) <= max_angle + 1e-12


def admissible(record: GraspRecord, stable: StablePose, object_world: Pose, params: EvalParams,
               workspace: Workspace) -> bool:
    if check_table_collision(params.geometry, record.to_config(), FingerState.open(),
                             stable.tabletop_plane_obj):
        return False
    return reachable(gripper_world_pose(object_world, record), workspace)


@dataclass(frozen=True)
class PlannerParams:
    candidates: int = 3
    sample_cap: int = 10000

    def __post_init__(self):
        if self.candidates < 1 or self.sample_cap < 1:
            raise ValidationError("candidates and sample cap must be positive")


@dataclass(frozen=True)
class PlanResult:
    record: GraspRecord
    predicted_quality: float
    samples: int            # latents drawn
    threshold_passes: int   # samples whose prediction cleared the threshold
    checks: int             # admissibility checks run
    candidates: tuple = ()  # predicted quality of every admissible candidate, in draw order

    def telemetry(self) -> dict:
        return {"samples": self.samples, "threshold_passes": self.threshold_passes, "checks": self.checks}


def plan_grasp(qgg: VaeModel, stable: StablePose, object_world: Pose, threshold: float,
               rng: np.random.Generator, params: EvalParams = EvalParams(),
               workspace: Workspace = Workspace(), planner: PlannerParams = PlannerParams()) -> PlanResult:
    """Sample until ``planner.candidates`` admissible grasps clear ``threshold``.

    Returns the candidate with the highest predicted quality, the earliest on
    ties.  Raises :class:`PlanningFailure` once ``sample_cap`` latents are
    spent, with the counters so far attached.
    """
    if not qgg.arch.has_quality:
        raise ValidationError("planning needs a quality-predicting model")
    plane = stable.tabletop_plane_obj
    found: list[tuple[float, GraspRecord]] = []
    samples = passes = checks = 0
    while len(found) < planner.candidates:
        if samples >= planner.sample_cap:
            raise PlanningFailure(f"only {len(found)} admissible candidates in {samples} samples",
                                  {"samples": samples, "threshold_passes": passes, "checks": checks})
        n = min(DECODE_CHUNK, planner.sample_cap - samples)
        dec = decode(qgg, rng.standard_normal(n), plane)
        records = dec.records(stable.id)
        for rec, pred in zip(records, dec.quality):
            samples += 1
            if pred <= threshold:
                continue
            passes += 1
            checks += 1
            if admissible(rec, stable, object_world, params, workspace):
                found.append((float(pred), rec))
                if len(found) == planner.candidates:
                    break
    best = max(range(len(found)), key=lambda i: (found[i][0], -i))
    pred, rec = found[best]
    return PlanResult(rec, pred, samples, passes, checks, tuple(p for p, _ in found))


# trials ------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialParams:
    per_stable: int = 100
    square: float = 0.10
    center: tuple = (0.6, 0.0)

    def __post_init__(self):
        if self.per_stable < 0 or not self.square > 0.0:
            raise ValidationError("trial count must be non-negative and the square positive")


def random_object_pose(stable: StablePose, rng: np.random.Generator, trials: TrialParams) -> Pose:
    """Stable pose yawed uniformly about the vertical, dropped uniformly in the square."""
    dx, dy = rng.uniform(-trials.square / 2, trials.square / 2, 2)
    yaw = rng.uniform(0.0, 2.0 * math.pi)
    place = Pose([trials.center[0] + dx, trials.center[1] + dy, 0.0],
                 quat_from_axis_angle([0.0, 0.0, 1.0], yaw))
    return pose_compose(place, stable.object_pose_on_table)


@dataclass(frozen=True)
class Trial:
    stable_pose_id: int
    planned: bool
    success: bool
    predicted: Optional[float]
    quality: float
    samples: int
    threshold_passes: int
    checks: int
    failure_reason: str


@dataclass
class StableSummary:
    stable_pose_id: int
    trials: int
    planned: int
    successes: int
    mean_checks: Optional[float]
    mean_relative_error: Optional[float]

    @property
    def success_rate(self) -> Optional[float]:
        return self.successes / self.trials if self.trials else None


def _summarize(sid, trials: list[Trial]) -> StableSummary:
    planned = [t for t in trials if t.planned]
    ok = [t for t in trials if t.success]
    checks = float(np.mean([t.checks for t in planned])) if planned else None
    err = float(np.mean([abs(t.predicted - t.quality) / t.quality for t in ok])) if ok else None
    return StableSummary(sid, len(trials), len(planned), len(ok), checks, err)


@dataclass
class TrialReport:
    object_name: str
    thresholds: dict
    trials: list[Trial] = field(default_factory=list)
    primitive_stats: Optional[DatasetStats] = None
    generated_stats: Optional[DatasetStats] = None

    def by_stable_pose(self) -> list[StableSummary]:
        ids = sorted({t.stable_pose_id for t in self.trials})
        return [_summarize(i, [t for t in self.trials if t.stable_pose_id == i]) for i in ids]

    def overall(self) -> StableSummary:
        return _summarize(None, self.trials)

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["object", "stable_pose_id", "planned", "success", "predicted", "quality",
                    "samples", "threshold_passes", "checks", "failure_reason"])
        for t in self.trials:
            w.writerow([self.object_name, t.stable_pose_id, int(t.planned), int(t.success),
                        _num(t.predicted), _num(t.quality), t.samples, t.threshold_passes, t.checks,
                        t.failure_reason])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["object", "stable_pose_id", "trials", "planned", "successes", "success_rate",
                    "mean_checks", "mean_relative_error"])
        for s in self.by_stable_pose() + [self.overall()]:
            w.writerow([self.object_name, "all" if s.stable_pose_id is None else s.stable_pose_id,
                        s.trials, s.planned, s.successes, _num(s.success_rate), _num(s.mean_checks),
                        _num(s.mean_relative_error)])
        return buf.getvalue()

    def summary_text(self) -> str:
        thr = ", ".join(f"pose {k} {v:.6g}" for k, v in self.thresholds.items())
        lines = [f"{self.object_name}: thresholds {thr}"]
        for label, st in (("primitives", self.primitive_stats), ("generated", self.generated_stats)):
            if st is not None:
                lines.append(f"  {label}: {stats_line(st)}")
        for s in self.by_stable_pose() + [self.overall()]:
            tag = "all poses" if s.stable_pose_id is None else f"pose {s.stable_pose_id}"
            lines.append(f"  {tag}: {s.successes}/{s.trials} successful, "
                         f"{s.trials - s.planned} planning failures, "
                         f"mean checks {_num(s.mean_checks)}, "
                         f"mean relative error {_num(s.mean_relative_error)}")
        return "\n".join(lines) + "\n"


def _num(v) -> str:
    return "" if v is None else f"{v:.6g}"


def stats_line(st: DatasetStats) -> str:
    return (f"{st.successful}/{st.total} successful, median {_num(st.median)}, "
            f"mean {_num(st.mean)}, max {_num(st.max)}")


def _per_pose(threshold, obj: SdfObject) -> dict[int, float]:
    if isinstance(threshold, dict):
        missing = set(obj.stable_pose_ids) - set(threshold)
        if missing:
            raise ValidationError(f"no threshold for stable pose(s) {sorted(missing)}")
        return {sid: float(threshold[sid]) for sid in obj.stable_pose_ids}
    return {sid: float(threshold) for sid in obj.stable_pose_ids}


def run_trials(qgg: VaeModel, obj: SdfObject, threshold, rng: np.random.Generator,
               params: EvalParams = EvalParams(), trials: TrialParams = TrialParams(),
               workspace: Workspace = Workspace(), planner: PlannerParams = PlannerParams(),
               seed: int = 0) -> TrialReport:
    """Plan and execute ``trials.per_stable`` grasps for every stable pose.

    ``threshold`` is a single value or a mapping from stable pose id to value.
    A planning failure counts as an unsuccessful trial with no prediction.
    """
    if trials.per_stable < 1:
        raise ValidationError("trials need at least one object pose per stable pose")
    thresholds = _per_pose(threshold, obj)
    report = TrialReport(obj.name, thresholds)
    index = 0
    for stable in obj.stable_poses:
        thr = thresholds[stable.id]
        for _ in range(trials.per_stable):
            world = random_object_pose(stable, rng, trials)
            try:
                plan = plan_grasp(qgg, stable, world, thr, rng, params, workspace, planner)
            except PlanningFailure as exc:
                t = exc.telemetry
                report.trials.append(Trial(stable.id, False, False, None, 0.0, t["samples"],
                                           t["threshold_passes"], t["checks"], "planning_failure"))
                index += 1
                continue
            outcome = evaluate_grasp(obj, stable, plan.record.to_config(), params)
            quality = metric_noise(outcome, params.noise_amplitude, item_rng(seed, index))
            report.trials.append(Trial(stable.id, True, outcome.success, plan.predicted_quality, quality,
                                       plan.samples, plan.threshold_passes, plan.checks,
                                       outcome.failure_reason.value))
            index += 1
    return report


# latent sweep --------------------------------------------------------------------

SWEEP_COLUMNS = ("l", "x", "y", "z", "qx", "qy", "qz", "qw", "theta")


@dataclass
class SweepReport:
    rows: np.ndarray                  # (n, 9) or (n, 10) with quality
    has_quality: bool
    overlay: Optional[np.ndarray]     # encoded means of primitives: (m, 9) l then fields

    def to_csv(self) -> str:
        cols = SWEEP_COLUMNS + (("quality",) if self.has_quality else ())
        return _table_csv(cols, self.rows)

    def overlay_csv(self) -> str:
        return _table_csv(SWEEP_COLUMNS, self.overlay if self.overlay is not None else np.zeros((0, 9)))


def _table_csv(cols, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([f"{v:.9g}" for v in r])
    return buf.getvalue()


def latent_sweep_report(model: VaeModel, stable: StablePose, n: int,
                        primitives: Optional[GraspDataset] = None, latent_range=SWEEP_RANGE) -> SweepReport:
    """Decoded fields along an even latent sweep, plus encoded primitive means."""
    if n < 2:
        raise ValidationError("a sweep needs at least two points")
    latents = np.linspace(latent_range[0], latent_range[1], n)
    dec = decode(model, latents, stable.tabletop_plane_obj)
    rows = np.column_stack([latents, dec.values[:, :8]])
    if dec.quality is not None:
        rows = np.column_stack([rows, dec.quality])
    overlay = None
    if primitives is not None:
        prims = primitives.for_stable_pose(stable.id)
        if len(prims):
            mean, _ = encode(model, normalize_many(prims.records, model.stats))
            fields = np.array([r.values()[:8] for r in prims.records])
            overlay = np.column_stack([mean.reshape(-1), fields])
    return SweepReport(rows, dec.quality is not None, overlay)


def write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
