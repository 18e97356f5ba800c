"""Quasi-static model of a three-finger underactuated gripper.

Frame conventions (``F_grip``): the origin sits between the fingers in front
of the palm and ``+x`` is the approach direction (out of the palm), so the palm
face lies in the plane ``x = -palm_offset``.  Fingers 1 and 2 sit on the ``+y``
side and spread symmetrically by ``+theta`` / ``-theta`` about the palm normal;
finger 3 is fixed on the ``-y`` side and closes towards ``+y``.  A top-down
grasp on an object resting on its ``z``-up face is therefore a rotation of
120 degrees rather than a half turn, which keeps canonical quaternions away
from their sign cut for the most common grasps.

Each finger has a proximal and a distal phalanx.  At zero joint angles a
finger points straight along ``+x``; positive angles curl it towards its
closing direction.  Closing is kinematic: the proximal joint advances in
small steps until the finger touches the object, then the distal joint
advances until it touches too (the breakaway behaviour of an adaptive
finger).  Joint limits stop either phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidStartError, SpreadRangeError
from .mathcore import Pose, plane_signed_distance, pose_apply
from .metric import Contact
from .objects import SdfObject, project_to_surface, surface_normal

N_FINGERS = 3
PHALANX_SAMPLES = 8


@dataclass(frozen=True)
class GripperGeometry:
    # Kinematic layout follows a BarrettHand-like hand; all numbers are invented.
    palm_radius: float = 0.035
    palm_thickness: float = 0.02
    palm_offset: float = 0.01
    finger_pivots: tuple = ((0.02, 0.025), (0.02, -0.025), (-0.02, 0.0))  # (y, z) on the palm
    knuckle_offset: float = 0.06
    proximal_length: float = 0.05
    distal_length: float = 0.04
    phalanx_radius: float = 0.008
    proximal_limit: float = 2.44
    distal_limit: float = 0.84
    step: float = np.deg2rad(0.5)
    contact_tol: float = 1e-3
    collision_slack: float = 1e-3
    palm_contact: bool = False

    def __post_init__(self):
        for name in ("palm_radius", "palm_thickness", "proximal_length", "distal_length",
                     "phalanx_radius", "proximal_limit", "distal_limit", "step", "contact_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"gripper {name} must be positive")
        object.__setattr__(self, "finger_pivots", tuple(tuple(map(float, p)) for p in self.finger_pivots))

    def with_overrides(self, **kwargs) -> "GripperGeometry":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class GripperConfig:
    """Gripper pose in the object frame plus spread angle."""

    pose: Pose
    spread: float

    def __post_init__(self):
        check_spread(self.spread)


@dataclass(frozen=True)
class FingerState:
    proximal: np.ndarray = field(default_factory=lambda: np.zeros(N_FINGERS))
    distal: np.ndarray = field(default_factory=lambda: np.zeros(N_FINGERS))
    contact_flags: np.ndarray = field(default_factory=lambda: np.zeros((N_FINGERS, 2), dtype=bool))

    @classmethod
    def open(cls) -> "FingerState":
        return cls()


def check_spread(theta: float) -> None:
    if not (0.0 <= theta <= np.pi / 2):
        raise SpreadRangeError(f"spread {theta!r} outside [0, pi/2]")


APPROACH = np.array([1.0, 0.0, 0.0])


def grip_frame(approach, closing) -> np.ndarray:
    """Rotation whose ``x`` column is ``approach`` and ``y`` column is ``closing``.

    ``closing`` (the direction finger 3 closes in) is orthogonalized against
    ``approach``; both are given in the parent frame.
    """
    a = np.asarray(approach, dtype=float)
    a = a / np.linalg.norm(a)
    c = np.asarray(closing, dtype=float)
    c = c - (c @ a) * a
    c = c / np.linalg.norm(c)
    return np.column_stack([a, c, np.cross(a, c)])


def closing_directions(theta: float) -> np.ndarray:
    """Unit closing directions ``(3, 3)`` of the fingers in ``F_grip``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[0.0, -c, -s], [0.0, -c, s], [0.0, 1.0, 0.0]])


def finger_base_frames(geom: GripperGeometry, theta: float) -> list[Pose]:
    """Knuckle frames of the three fingers in ``F_grip``.

    Each frame has ``x`` along the finger's closing direction and ``z`` along
    the approach axis.  The knuckle sits ``knuckle_offset`` behind its spread
    pivot, on the side opposite to the closing direction.
    """
    check_spread(theta)
    frames = []
    for (py, pz), closing in zip(geom.finger_pivots, closing_directions(theta)):
        R = np.column_stack([closing, np.cross(APPROACH, closing), APPROACH])
        origin = np.array([-geom.palm_offset, py, pz]) - geom.knuckle_offset * closing
        frames.append(Pose.from_matrix(R, origin))
    return frames


def _finger_axes(geom: GripperGeometry, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Knuckle positions ``(3, 3)`` and closing directions ``(3, 3)`` in ``F_grip``."""
    check_spread(theta)
    closing = closing_directions(theta)
    pivots = np.array([[-geom.palm_offset, py, pz] for py, pz in geom.finger_pivots])
    return pivots - geom.knuckle_offset * closing, closing


def _phalanx_points(geom, bases, closing, q1, q2):
    """Axis sample points of both phalanges.

    ``q1``/``q2`` have shape ``(F, K)``; the result is ``(F, K, 2, S, 3)`` in
    ``F_grip`` with index 0 = proximal, 1 = distal along the third axis.
    """
    t = np.linspace(0.0, 1.0, PHALANX_SAMPLES)
    a = APPROACH
    u1 = np.cos(q1)[..., None] * a + np.sin(q1)[..., None] * closing[:, None, :]
    u2 = np.cos(q1 + q2)[..., None] * a + np.sin(q1 + q2)[..., None] * closing[:, None, :]
    b = bases[:, None, :]
    prox = b[:, :, None, :] + geom.proximal_length * t[:, None] * u1[:, :, None, :]
    joint = b + geom.proximal_length * u1
    dist = joint[:, :, None, :] + geom.distal_length * t[:, None] * u2[:, :, None, :]
    return np.stack([prox, dist], axis=2)


def palm_samples(geom: GripperGeometry) -> np.ndarray:
    """Points on both palm faces (centre, half-radius ring, rim) in ``F_grip``."""
    pts = []
    for x in (-geom.palm_offset, -geom.palm_offset - geom.palm_thickness):
        pts.append([x, 0.0, 0.0])
        for radius, count in ((0.5 * geom.palm_radius, 8), (geom.palm_radius, 16)):
            a = 2 * np.pi * np.arange(count) / count
            pts.extend(np.column_stack([np.full(count, x), radius * np.cos(a), radius * np.sin(a)]))
    return np.asarray(pts)


def finger_points(geom: GripperGeometry, theta: float, state: FingerState) -> np.ndarray:
    """Phalanx axis samples ``(3, 2, S, 3)`` in ``F_grip`` for joint ``state``."""
    bases, closing = _finger_axes(geom, theta)
    q1 = np.asarray(state.proximal, dtype=float)[:, None]
    q2 = np.asarray(state.distal, dtype=float)[:, None]
    return _phalanx_points(geom, bases, closing, q1, q2)[:, 0]


def _angle_schedule(limit: float, step: float) -> np.ndarray:
    k = np.arange(0, int(np.floor(limit / step)) + 1) * step
    if k[-1] < limit:
        k = np.append(k, limit)
    return k


def _first_hit(mask: np.ndarray) -> int:
    hits = np.flatnonzero(mask)
    return int(hits[0]) if hits.size else -1


def close_fingers(geom: GripperGeometry, config: GripperConfig, obj: SdfObject):
    """Close the three fingers quasi-statically on ``obj``.

    Returns ``(FingerState, contacts)``.  Contacts are listed finger by finger,
    proximal before distal, one per touching phalanx, located at the deepest
    sample projected onto the surface with the normal pointing into the object.
    Raises :class:`InvalidStartError` if the palm or an open finger already
    penetrates the object.
    """
    pose = config.pose
    R, t = pose.rotation, pose.position
    r, tol = geom.phalanx_radius, geom.contact_tol

    palm = pose_apply(pose, palm_samples(geom))
    if np.any(obj.root.eval(palm) <= 0.0):
        raise InvalidStartError("palm starts inside the object")

    bases, closing = _finger_axes(geom, config.spread)
    q1_sched = _angle_schedule(geom.proximal_limit, geom.step)
    q2_sched = _angle_schedule(geom.distal_limit, geom.step)

    q1 = np.broadcast_to(q1_sched, (N_FINGERS, q1_sched.size))
    pts = _phalanx_points(geom, bases, closing, q1, np.zeros_like(q1)) @ R.T + t
    gap = obj.root.eval(pts) - r                      # (F, K, 2, S)
    if np.any(gap[:, 0] < -tol):
        raise InvalidStartError("a finger starts inside the object")
    phal_gap = gap.min(axis=-1)                       # (F, K, 2)

    prox_angle = np.empty(N_FINGERS)
    dist_angle = np.zeros(N_FINGERS)
    flags = np.zeros((N_FINGERS, 2), dtype=bool)
    contact_pts: list[np.ndarray] = []

    for f in range(N_FINGERS):
        k = _first_hit((phal_gap[f] <= tol).any(axis=-1))
        if k < 0:
            k = q1_sched.size - 1
        prox_angle[f] = q1_sched[k]
        hit = phal_gap[f, k] <= tol
        flags[f] = hit
        if hit[0]:
            contact_pts.append((f, 0, pts[f, k, 0, np.argmin(gap[f, k, 0])]))
        if hit[1]:
            contact_pts.append((f, 1, pts[f, k, 1, np.argmin(gap[f, k, 1])]))
            continue
        # breakaway: proximal is blocked or at its limit, the distal joint takes over
        q1f = np.full((1, q2_sched.size), q1_sched[k])
        d_pts = _phalanx_points(geom, bases[f:f + 1], closing[f:f + 1], q1f, q2_sched[None, :])
        d_pts = d_pts[0, :, 1] @ R.T + t              # (K2, S, 3)
        d_gap = obj.root.eval(d_pts) - r
        k2 = _first_hit(d_gap.min(axis=-1) <= tol)
        if k2 < 0:
            dist_angle[f] = q2_sched[-1]
        else:
            dist_angle[f] = q2_sched[k2]
            flags[f, 1] = True
            contact_pts.append((f, 1, d_pts[k2, np.argmin(d_gap[k2])]))

    if geom.palm_contact:
        d_palm = obj.root.eval(palm)
        if d_palm.min() <= tol:
            contact_pts.append((N_FINGERS, 0, palm[np.argmin(d_palm)]))

    contact_pts.sort(key=lambda item: (item[0], item[1]))
    contacts = []
    if contact_pts:
        raw = np.array([p for _, _, p in contact_pts])
        surf = project_to_surface(obj, raw)
        normals = -surface_normal(obj, surf)
        contacts = [Contact(p, n) for p, n in zip(surf, normals)]
    state = FingerState(prox_angle, dist_angle, flags)
    return state, contacts


def gripper_collision_points(geom: GripperGeometry, config: GripperConfig, joints: FingerState):
    """Palm samples ``(P, 3)`` and phalanx samples ``(3*2*S, 3)`` in the object frame."""
    palm = pose_apply(config.pose, palm_samples(geom))
    fingers = pose_apply(config.pose, finger_points(geom, config.spread, joints).reshape(-1, 3))
    return palm, fingers


def check_table_collision(geom: GripperGeometry, config: GripperConfig, joints: FingerState, plane) -> bool:
    """True iff some part of the gripper dips more than the slack below the table."""
    palm, fingers = gripper_collision_points(geom, config, joints)
    slack = geom.collision_slack
    if np.any(plane_signed_distance(plane, palm) < -slack):
        return True
    return bool(np.any(plane_signed_distance(plane, fingers) - geom.phalanx_radius < -slack))


def approach_standoff(geom: GripperGeometry, obj: SdfObject, plane, rotation: np.ndarray, target,
                      theta: float, margin: float = 0.004, reach: float = 0.4, step: float = 0.002):
    """Slide the open hand towards ``target`` along its approach axis.

    The gripper origin starts ``reach`` metres behind ``target`` and advances
    in ``step`` increments while every palm and finger sample keeps at least
    ``margin`` of clearance from the object and the table.  Returns the last
    clear origin (object frame), or ``None`` when the starting point is
    already obstructed.
    """
    rotation = np.asarray(rotation, dtype=float)
    target = np.asarray(target, dtype=float)
    palm = palm_samples(geom)
    fingers = finger_points(geom, theta, FingerState.open()).reshape(-1, 3)
    local = np.vstack([palm, fingers])
    radius = np.concatenate([np.zeros(len(palm)), np.full(len(fingers), geom.phalanx_radius)])

    def clear(depths):
        origins = target - depths[:, None] * rotation[:, 0]
        pts = (local @ rotation.T)[None] + origins[:, None]
        ok = ((obj.root.eval(pts) - radius > margin)
              & (plane_signed_distance(plane, pts) - radius > margin)).all(axis=1)
        return origins, ok

    # coarse pass, then a fine pass inside the first blocked interval; the
    # coarse stride stays below the clearance band so thin walls are not skipped
    stride = 4
    depth = np.arange(reach, -reach / 2, -step)
    coarse = depth[::stride]
    origins, ok = clear(coarse)
    blocked = np.flatnonzero(~ok)
    if blocked.size == 0:
        return origins[-1]
    if blocked[0] == 0:
        return None
    k = blocked[0]
    fine = depth[(k - 1) * stride:k * stride + 1]
    origins, ok = clear(fine)
    return origins[np.flatnonzero(~ok)[0] - 1]
