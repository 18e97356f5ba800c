"""Grasp records, CSV storage, min-max normalization and primitive synthesis.

A record is one gripper configuration expressed in the object frame together
with the tabletop plane of the stable pose it belongs to, and optionally the
quality measured for it.  Every float stored in a record is rounded to nine
significant digits on construction, so writing a dataset to CSV and reading it
back reproduces it bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import DegenerateStatsError, InsufficientPrimitivesError, ParseError, ValidationError
from .evaluation import EvalParams, evaluate_grasp
from .gripper import GripperConfig, approach_standoff, grip_frame
from .mathcore import Pose, quat_canonical, quat_from_axis_angle, quat_to_matrix
from .metric import tangent_basis
from .objects import SdfObject, StablePose

COLUMNS = ("x", "y", "z", "qx", "qy", "qz", "qw", "theta", "a", "b", "c", "d", "stable_pose_id", "quality")
PROVENANCES = ("primitive", "generated", "extended")
PRIMITIVE_SPREADS = (0.0, math.pi / 6, math.pi / 4, math.pi / 2)
SIG_DIGITS = 9
UNIT_TOL = 1e-6
SPREAD_MAX = math.pi / 2


def quantize(values):
    """Round to nine significant digits, the precision of the CSV format."""
    arr = np.asarray(values, dtype=float)
    flat = [float(f"{v:.{SIG_DIGITS}g}") for v in arr.ravel()]
    return np.array(flat).reshape(arr.shape) if arr.ndim else flat[0]


def _fmt(v: float) -> str:
    return f"{v:.{SIG_DIGITS}g}"


@dataclass(frozen=True)
class GraspRecord:
    """Gripper configuration in the object frame, its tabletop plane and quality."""

    position: np.ndarray
    orientation: np.ndarray
    spread: float
    plane: np.ndarray
    stable_pose_id: int
    quality: Optional[float] = None

    def __post_init__(self):
        pos = quantize(np.asarray(self.position, dtype=float).reshape(3))
        quat = np.asarray(self.orientation, dtype=float).reshape(4)
        plane = quantize(np.asarray(self.plane, dtype=float).reshape(4))
        spread = float(self.spread)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(quat)) and np.all(np.isfinite(plane))
                and math.isfinite(spread)):
            raise ValidationError("record has non-finite fields")
        if abs(np.linalg.norm(quat) - 1.0) > UNIT_TOL:
            raise ValidationError(f"quaternion norm {np.linalg.norm(quat):.9g} is not 1")
        if abs(np.linalg.norm(plane[:3]) - 1.0) > UNIT_TOL:
            raise ValidationError("tabletop plane normal is not unit length")
        spread = quantize(spread)
        if spread < 0.0 or spread > SPREAD_MAX + 1e-8:
            raise ValidationError(f"spread {spread!r} outside [0, pi/2]")
        quality = self.quality
        if quality is not None:
            quality = quantize(float(quality))
            if not math.isfinite(quality) or quality < 0.0:
                raise ValidationError(f"quality {quality!r} must be finite and non-negative")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", quantize(quat_canonical(quat)))
        object.__setattr__(self, "plane", plane)
        object.__setattr__(self, "spread", min(spread, SPREAD_MAX))
        object.__setattr__(self, "stable_pose_id", int(self.stable_pose_id))
        object.__setattr__(self, "quality", quality)

    @classmethod
    def from_config(cls, config: GripperConfig, stable: StablePose, quality=None) -> "GraspRecord":
        return cls(config.pose.position, config.pose.orientation, config.spread,
                   stable.tabletop_plane_obj, stable.id, quality)

    def to_config(self) -> GripperConfig:
        return GripperConfig(Pose(self.position, self.orientation), self.spread)

    def with_quality(self, quality: Optional[float]) -> "GraspRecord":
        return replace(self, quality=quality)

    def values(self) -> np.ndarray:
        """The twelve configuration and plane fields in column order."""
        return np.concatenate([self.position, self.orientation, [self.spread], self.plane])

    def row(self) -> list[str]:
        cells = [_fmt(v) for v in self.values()]
        cells.append(str(self.stable_pose_id))
        cells.append("" if self.quality is None else _fmt(self.quality))
        return cells

    def same_as(self, other: "GraspRecord") -> bool:
        return (np.array_equal(self.values(), other.values())
                and self.stable_pose_id == other.stable_pose_id and self.quality == other.quality)


@dataclass(frozen=True)
class GraspDataset:
    records: tuple[GraspRecord, ...]
    object_name: str = ""
    provenance: str = "primitive"

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraspDataset):
            return NotImplemented
        return (self.object_name == other.object_name and self.provenance == other.provenance
                and len(self) == len(other)
                and all(a.same_as(b) for a, b in zip(self.records, other.records)))

    def stable_pose_ids(self) -> list[int]:
        return sorted({r.stable_pose_id for r in self.records})

    def for_stable_pose(self, stable_id: int) -> "GraspDataset":
        return replace(self, records=tuple(r for r in self.records if r.stable_pose_id == stable_id))

    def qualities(self) -> np.ndarray:
        return np.array([np.nan if r.quality is None else r.quality for r in self.records])

    def check_object(self, obj: SdfObject) -> None:
        unknown = set(self.stable_pose_ids()) - set(obj.stable_pose_ids)
        if unknown:
            raise ValidationError(f"records reference unknown stable poses {sorted(unknown)} of {obj.name}")
        for r in self.records:
            if not np.allclose(r.plane, obj.stable_pose(r.stable_pose_id).tabletop_plane_obj, atol=1e-8):
                raise ValidationError(f"record plane does not match stable pose {r.stable_pose_id}")


def merge(datasets: Iterable[GraspDataset], provenance: str = "extended") -> GraspDataset:
    datasets = list(datasets)
    names = {d.object_name for d in datasets}
    if len(names) > 1:
        raise ValidationError(f"cannot merge datasets of different objects {sorted(names)}")
    records = tuple(r for d in datasets for r in d.records)
    return GraspDataset(records, names.pop() if names else "", provenance)


# CSV -------------------------------------------------------------------------

def save_csv(dataset: GraspDataset, path) -> None:
    """Write ``dataset``; a leading comment line carries object name and provenance."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# object={dataset.object_name} provenance={dataset.provenance}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in dataset.records:
            writer.writerow(r.row())


def _parse_meta(line: str) -> dict:
    meta = {}
    for token in line.lstrip("#").split():
        key, sep, value = token.partition("=")
        if sep:
            meta[key] = value
    return meta


def load_csv(path, object_name: Optional[str] = None, provenance: Optional[str] = None) -> GraspDataset:
    """Read a dataset written by :func:`save_csv` or authored by hand.

    Malformed rows raise :class:`ParseError` with the 1-based file line.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no dataset file at {path}")
    meta: dict = {}
    records = []
    header_seen = False
    with path.open(newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                if not header_seen:
                    meta.update(_parse_meta(text))
                continue
            cells = next(csv.reader([text]))
            if not header_seen:
                if tuple(c.strip() for c in cells) != COLUMNS:
                    raise ParseError(f"expected header {','.join(COLUMNS)}", lineno)
                header_seen = True
                continue
            records.append(_parse_row(cells, lineno))
    if not header_seen:
        raise ParseError("missing header row", 1)
    return GraspDataset(
        tuple(records),
        object_name if object_name is not None else meta.get("object", ""),
        provenance if provenance is not None else meta.get("provenance", "primitive"),
    )


def _parse_row(cells: list[str], lineno: int) -> GraspRecord:
    if len(cells) != len(COLUMNS):
        raise ParseError(f"expected {len(COLUMNS)} fields, found {len(cells)}", lineno)
    try:
        nums = [float(c) for c in cells[:12]]
        stable_id = int(cells[12])
        quality = float(cells[13]) if cells[13].strip() else None
    except ValueError as exc:
        raise ParseError(f"bad number ({exc})", lineno) from None
    try:
        return GraspRecord(nums[0:3], nums[3:7], nums[7], nums[8:12], stable_id, quality)
    except ValidationError as exc:
        raise ValidationError(f"line {lineno}: {exc}") from None


# normalization ---------------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    """Min-max ranges of x, y, z and theta, plus the quality scale.

    Quaternion and plane fields are never rescaled.  ``quality_max`` maps
    qualities onto ``[0, 1]`` for the quality head; it is ``None`` when the
    fitting set holds no positive quality.
    """

    lo: np.ndarray
    hi: np.ndarray
    quality_max: Optional[float] = None

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(4)
        hi = np.asarray(self.hi, dtype=float).reshape(4)
        if np.any(hi <= lo):
            names = [n for n, a, b in zip(("x", "y", "z", "theta"), lo, hi) if b <= a]
            raise DegenerateStatsError(f"constant field(s) {names}: cannot min-max scale")
        if self.quality_max is not None and not self.quality_max > 0.0:
            raise DegenerateStatsError("quality scale must be positive")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "quality_max": self.quality_max}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.array(d["lo"]), np.array(d["hi"]), d.get("quality_max"))


_SCALED = np.array([0, 1, 2, 7])


def fit_norm(dataset: GraspDataset) -> NormStats:
    if len(dataset) == 0:
        raise DegenerateStatsError("cannot fit normalization on an empty dataset")
    vals = np.array([r.values() for r in dataset.records])[:, _SCALED]
    q = dataset.qualities()
    q = q[np.isfinite(q)]
    qmax = float(q.max()) if q.size and q.max() > 0.0 else None
    return NormStats(vals.min(axis=0), vals.max(axis=0), qmax)


def normalize(record: GraspRecord, stats: NormStats) -> np.ndarray:
    """12-vector: x, y, z, theta scaled to ``[0, 1]``; quaternion and plane raw."""
    v = record.values().copy()
    v[_SCALED] = (v[_SCALED] - stats.lo) / (stats.hi - stats.lo)
    return v


def normalize_many(records, stats: NormStats) -> np.ndarray:
    v = np.array([r.values() for r in records], dtype=float).reshape(-1, 12)
    v[:, _SCALED] = (v[:, _SCALED] - stats.lo) / (stats.hi - stats.lo)
    return v


def denormalize(vector, stats: NormStats) -> np.ndarray:
    """Inverse of :func:`normalize` on one or many 12-vectors."""
    v = np.array(vector, dtype=float)
    v[..., _SCALED] = v[..., _SCALED] * (stats.hi - stats.lo) + stats.lo
    return v


def normalize_quality(quality, stats: NormStats):
    if stats.quality_max is None:
        raise DegenerateStatsError("statistics carry no quality scale")
    return np.asarray(quality, dtype=float) / stats.quality_max


def denormalize_quality(value, stats: NormStats):
    if stats.quality_max is None:
        raise DegenerateStatsError("statistics carry no quality scale")
    return np.asarray(value, dtype=float) * stats.quality_max


# primitive synthesis -----------------------------------------------------------

@dataclass(frozen=True)
class GraspTemplate:
    name: str
    approach: str          # "top" or "side"
    spreads: tuple


TEMPLATES = (
    GraspTemplate("top_pinch", "top", (0.0,)),
    GraspTemplate("top_wrap", "top", (math.pi / 6, math.pi / 4)),
    GraspTemplate("top_envelop", "top", (math.pi / 2,)),
    GraspTemplate("side_pinch", "side", (0.0,)),
    GraspTemplate("side_wrap", "side", (math.pi / 6, math.pi / 4)),
)


@dataclass(frozen=True)
class TemplateInstance:
    """A grasp type fixed to one stable pose, spread and approach azimuth."""

    template: GraspTemplate
    stable_id: int
    spread: float
    yaw: float
    quality: float
    aim: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class SynthParams:
    azimuths: int = 16              # azimuth grid scanned for each grasp type
    aim_ring: float = 0.03          # m, radius of the fallback aim points
    aim_count: int = 6
    instances_per_type: int = 2     # best azimuths kept per grasp type and stable pose
    min_separation: float = math.pi / 4
    yaw_jitter: float = 0.08        # rad
    target_jitter: float = 0.01     # m, horizontal aim offset from the centre of mass
    height_jitter: float = 0.01     # m, vertical aim offset of side grasps
    tilt_jitter: float = 0.05       # rad
    oversampling: int = 50
    standoff_margin: float = 0.008  # m, clearance kept by the open hand at its final approach depth


def _heading(stable: StablePose, yaw: float) -> np.ndarray:
    e1, e2 = tangent_basis(stable.tabletop_plane_obj[:3])
    return math.cos(yaw) * e1 + math.sin(yaw) * e2


def place_template(obj: SdfObject, stable: StablePose, template: GraspTemplate, spread: float, yaw: float,
                   params: EvalParams = EvalParams(), offset=(0.0, 0.0, 0.0), tilt=None,
                   margin: float = 0.008) -> Optional[GraspRecord]:
    """Aim a template at the centre of mass (plus ``offset``) and move it in until contact.

    Top grasps approach against the table normal; side grasps approach
    horizontally with the fingers closing horizontally.  ``offset`` holds two
    horizontal components and one vertical; ``tilt`` is an optional extra
    rotation applied on the object side.  Returns ``None`` when the approach
    start is already obstructed.
    """
    plane = stable.tabletop_plane_obj
    up = plane[:3]
    e1, e2 = tangent_basis(up)
    heading = _heading(stable, yaw)
    target = offset[0] * e1 + offset[1] * e2
    if template.approach == "top":
        R = grip_frame(-up, heading)
    else:
        R = grip_frame(-heading, np.cross(up, -heading))
        target = target + offset[2] * up
        lowest = -plane[3] + params.geometry.palm_radius + 0.005
        target = target + max(0.0, lowest - target @ up) * up
    if tilt is not None:
        R = tilt @ R
    origin = approach_standoff(params.geometry, obj, plane, R, target, spread, margin=margin)
    if origin is None:
        return None
    return GraspRecord(origin, Pose.from_matrix(R).orientation, spread, plane, stable.id)


def find_templates(obj: SdfObject, stable: StablePose, rng: np.random.Generator,
                   params: EvalParams = EvalParams(), synth: SynthParams = SynthParams()) -> list[TemplateInstance]:
    """Scan approach azimuths for every grasp type and keep the best ones.

    The azimuth grid starts at a random phase.  Placements aim at the centre
    of mass; a type that never succeeds there is retried on a ring of aim
    points around it.  For each type the successful
    nominal placements are ranked by quality and up to ``instances_per_type``
    of them, mutually at least ``min_separation`` apart, become instances.
    Types with no successful azimuth are skipped for this pose.
    """
    phase = rng.uniform(0.0, 2 * math.pi / synth.azimuths)
    yaws = phase + 2 * math.pi * np.arange(synth.azimuths) / synth.azimuths
    ring = 2 * math.pi * np.arange(synth.aim_count) / synth.aim_count + phase
    aims = [(0.0, 0.0)] + [(synth.aim_ring * math.cos(a), synth.aim_ring * math.sin(a)) for a in ring]
    found = []
    for template in TEMPLATES:
        hits = []
        # aim at the centre of mass first, fall back to the ring around it
        for aim in aims:
            for spread in template.spreads:
                for yaw in yaws:
                    rec = place_template(obj, stable, template, spread, yaw, params, (aim[0], aim[1], 0.0),
                                         margin=synth.standoff_margin)
                    if rec is None:
                        continue
                    out = evaluate_grasp(obj, stable, rec.to_config(), params)
                    if out.success:
                        hits.append((out.quality, spread, float(yaw), aim))
            if hits:
                break
        hits.sort(key=lambda h: -h[0])
        kept = []
        for quality, spread, yaw, aim in hits:
            if all(abs((yaw - k.yaw + math.pi) % (2 * math.pi) - math.pi) >= synth.min_separation for k in kept):
                kept.append(TemplateInstance(template, stable.id, spread, yaw, quality, aim))
            if len(kept) == synth.instances_per_type:
                break
        found.extend(kept)
    return found


def template_variant(obj: SdfObject, inst: TemplateInstance, rng: np.random.Generator,
                     params: EvalParams = EvalParams(), synth: SynthParams = SynthParams()):
    """A jittered copy of ``inst``: aim point, azimuth and a small tilt vary, spread does not."""
    stable = obj.stable_pose(inst.stable_id)
    yaw = inst.yaw + rng.normal(0.0, synth.yaw_jitter)
    offset = (inst.aim[0] + rng.normal(0.0, synth.target_jitter),
              inst.aim[1] + rng.normal(0.0, synth.target_jitter),
              rng.normal(0.0, synth.height_jitter))
    tilt = quat_to_matrix(quat_from_axis_angle(rng.normal(size=3), rng.normal(0.0, synth.tilt_jitter)))
    return place_template(obj, stable, inst.template, inst.spread, yaw, params, offset, tilt,
                          synth.standoff_margin)


def synth_primitives(obj: SdfObject, per_type: int, rng: np.random.Generator,
                     params: EvalParams = EvalParams(), total: Optional[int] = None,
                     synth: SynthParams = SynthParams()) -> GraspDataset:
    """Synthesize validated primitive grasps for every stable pose of ``obj``.

    Template instances are found per stable pose, then jittered variants are
    drawn round-robin over the instances.  Only variants whose evaluation
    succeeds are kept, with their quality; an instance stops after
    ``per_type`` accepted variants.  With ``total`` set, generation stops at
    exactly ``total`` records.
    """
    if per_type < 1:
        raise ValueError("per_type must be positive")
    instances = [inst for sp in obj.stable_poses for inst in find_templates(obj, sp, rng, params, synth)]
    if not instances:
        raise InsufficientPrimitivesError(f"{obj.name}: no grasp type succeeds on any stable pose")
    target = total if total is not None else per_type * len(instances)
    max_attempts = synth.oversampling * target
    made = [0] * len(instances)
    active = list(range(len(instances)))
    records: list[GraspRecord] = []
    attempts = 0
    while active and len(records) < target:
        for i in list(active):
            if len(records) >= target:
                break
            if attempts >= max_attempts:
                raise InsufficientPrimitivesError(
                    f"{obj.name}: only {len(records)} of {target} primitives after {attempts} attempts")
            attempts += 1
            inst = instances[i]
            rec = template_variant(obj, inst, rng, params, synth)
            if rec is not None:
                out = evaluate_grasp(obj, obj.stable_pose(inst.stable_id), rec.to_config(), params)
                if out.success:
                    records.append(rec.with_quality(out.quality))
                    made[i] += 1
            if made[i] >= per_type:
                active.remove(i)
    if len(records) < target:
        raise InsufficientPrimitivesError(
            f"{obj.name}: template instances exhausted at {len(records)} of {target} primitives")
    return GraspDataset(tuple(records), obj.name, "primitive")
