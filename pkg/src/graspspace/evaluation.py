"""Grasp trial evaluation: the static stand-in for a simulated grasp attempt.

A configuration succeeds when the gripper does not hit the table (before or
after closing), the contacts can hold the object against gravity, and the
minimum singular value of the grasp map is positive.  Failures are ordinary
outcomes with quality 0, never exceptions.
"""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .errors import InvalidStartError
from .gripper import (
    FingerState,
    GripperConfig,
    GripperGeometry,
    check_table_collision,
    close_fingers,
)
from .metric import Contact, can_resist_gravity, q_msv
from .objects import SdfObject, StablePose

ZERO_QUALITY = 1e-9


class FailureReason(str, enum.Enum):
    NONE = "none"
    TABLE_COLLISION = "table_collision"
    INVALID_START = "invalid_start"
    NO_LIFT = "no_lift"
    ZERO_MSV = "zero_msv"


@dataclass(frozen=True)
class EvalParams:
    geometry: GripperGeometry = field(default_factory=GripperGeometry)
    mu: float = 0.5
    force_budget: float = 20.0
    gravity: float = 9.81
    noise_amplitude: float = 0.0


@dataclass(frozen=True)
class GraspOutcome:
    success: bool
    quality: float
    failure_reason: FailureReason
    contacts: tuple[Contact, ...] = ()

    def with_quality(self, quality: float) -> "GraspOutcome":
        return replace(self, quality=quality)


def _failure(reason: FailureReason, contacts=()) -> GraspOutcome:
    return GraspOutcome(False, 0.0, reason, tuple(contacts))


def evaluate_grasp(obj: SdfObject, stable: StablePose, config: GripperConfig,
                   params: EvalParams = EvalParams()) -> GraspOutcome:
    geom = params.geometry
    plane = stable.tabletop_plane_obj
    try:
        state, contacts = close_fingers(geom, config, obj)
    except InvalidStartError:
        return _failure(FailureReason.INVALID_START)

    if (check_table_collision(geom, config, FingerState.open(), plane)
            or check_table_collision(geom, config, state, plane)):
        return _failure(FailureReason.TABLE_COLLISION, contacts)

    if not can_resist_gravity(contacts, obj.mass, params.mu, plane,
                              force_budget=params.force_budget, gravity=params.gravity):
        return _failure(FailureReason.NO_LIFT, contacts)

    quality = q_msv(contacts)
    if quality <= ZERO_QUALITY:
        return _failure(FailureReason.ZERO_MSV, contacts)
    return GraspOutcome(True, quality, FailureReason.NONE, tuple(contacts))


def _evaluate_one(obj, stable, params, config):
    return evaluate_grasp(obj, stable, config, params)


def evaluate_batch(obj: SdfObject, stable: StablePose, configs, params: EvalParams = EvalParams(),
                   workers: int = 1) -> list[GraspOutcome]:
    """Evaluate ``configs`` in order; results do not depend on ``workers``."""
    configs = list(configs)
    if workers < 1:
        raise ValueError("workers must be a positive integer")
    if workers == 1 or len(configs) < 2:
        return [evaluate_grasp(obj, stable, c, params) for c in configs]
    fn = partial(_evaluate_one, obj, stable, params)
    chunk = max(1, len(configs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, configs, chunksize=chunk))


def metric_noise(outcome: GraspOutcome, amplitude: float, rng: np.random.Generator) -> float:
    """Quality scaled by ``1 + U(-amplitude, amplitude)``; failed outcomes stay at 0."""
    if not 0.0 <= amplitude <= 0.5:
        raise ValueError("noise amplitude must lie in [0, 0.5]")
    if not outcome.success or amplitude == 0.0:
        return outcome.quality
    return outcome.quality * (1.0 + rng.uniform(-amplitude, amplitude))


def item_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for item ``index`` of a seeded batch."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))
