"""Signed-distance object models and their stable tabletop poses.

Objects are trees of SDF nodes.  Primitive nodes return exact Euclidean
distances; ``Union`` and ``Difference`` use the usual ``min`` / ``max``
composition, which is a bound on the true distance rather than the distance
itself.  That is enough for contact search, which only relies on the sign of
the field and on locally correct gradients near the surface.

All evaluation is vectorized: points are ``(..., 3)`` arrays, distances are
``(...,)`` arrays.

Object files are JSON documents::

    {
      "name": "widget",
      "mass": 0.4,
      "root": {"type": "union", "children": [
          {"type": "box", "half_extents": [0.05, 0.03, 0.02]},
          {"type": "posed", "position": [0, 0, 0.04], "orientation": [0, 0, 0, 1],
           "child": {"type": "cylinder", "radius": 0.01, "half_height": 0.02}}
      ]},
      "stable_poses": [
          {"id": 0, "orientation": [0, 0, 0, 1]},
          {"id": 1, "orientation": [1, 0, 0, 0], "position": [0, 0, 0.02]}
      ]
    }

Node types: ``box`` (half_extents), ``cylinder`` (radius, half_height; axis z),
``capsule`` (radius, a, b), ``torus_segment`` (major_radius, minor_radius, arc;
arc in the xy plane starting on +x), ``union`` (children), ``difference``
(base, cut) and ``posed`` (child, position, orientation).  A stable pose
orientation maps object axes into the table frame; when ``position`` is
omitted the object is lowered until it rests on the ``z = 0`` tabletop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateNormalError, ValidationError
from .mathcore import (
    Pose,
    plane_in_frame,
    quat_from_axis_angle,
    quat_to_matrix,
)

MAX_DEPTH = 16
TABLE_PLANE = np.array([0.0, 0.0, 1.0, 0.0])
NORMAL_STEP = 1e-5


class SdfNode:
    """Base class for SDF tree nodes."""

    def eval(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support(self, u: np.ndarray) -> float:
        """Upper bound of ``max(p @ u)`` over the solid, exact for primitives."""
        raise NotImplementedError

    def children(self) -> tuple["SdfNode", ...]:
        return ()

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children()), default=0)

    def to_dict(self) -> dict:
        raise NotImplementedError


def _length(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...i,...i->...", v, v))


def _positive(name: str, *values: float) -> None:
    for v in values:
        if not np.isfinite(v) or v <= 0.0:
            raise ValidationError(f"{name} must be strictly positive, got {v!r}")


@dataclass(frozen=True)
class Box(SdfNode):
    half_extents: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "half_extents", tuple(float(v) for v in self.half_extents))
        _positive("box half extent", *self.half_extents)

    def eval(self, p):
        q = np.abs(p) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def support(self, u):
        return float(np.abs(u) @ np.asarray(self.half_extents))

    def to_dict(self):
        return {"type": "box", "half_extents": list(self.half_extents)}


@dataclass(frozen=True)
class Cylinder(SdfNode):
    """Capped cylinder along the local z axis."""

    radius: float
    half_height: float

    def __post_init__(self):
        _positive("cylinder dimension", self.radius, self.half_height)

    def eval(self, p):
        radial = np.hypot(p[..., 0], p[..., 1]) - self.radius
        axial = np.abs(p[..., 2]) - self.half_height
        outside = np.hypot(np.maximum(radial, 0.0), np.maximum(axial, 0.0))
        return outside + np.minimum(np.maximum(radial, axial), 0.0)

    def support(self, u):
        return float(self.radius * np.hypot(u[0], u[1]) + self.half_height * abs(u[2]))

    def to_dict(self):
        return {"type": "cylinder", "radius": self.radius, "half_height": self.half_height}


@dataclass(frozen=True)
class Capsule(SdfNode):
    radius: float
    a: tuple[float, float, float]
    b: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        _positive("capsule radius", self.radius)

    def eval(self, p):
        a = np.asarray(self.a)
        ab = np.asarray(self.b) - a
        ap = p - a
        denom = ab @ ab
        if denom == 0.0:
            return _length(ap) - self.radius
        t = np.clip((ap @ ab) / denom, 0.0, 1.0)
        return _length(ap - t[..., None] * ab) - self.radius

    def support(self, u):
        return float(max(np.asarray(self.a) @ u, np.asarray(self.b) @ u) + self.radius * np.linalg.norm(u))

    def to_dict(self):
        return {"type": "capsule", "radius": self.radius, "a": list(self.a), "b": list(self.b)}


@dataclass(frozen=True)
class TorusSegment(SdfNode):
    """Tube of radius ``minor_radius`` around a circular arc in the xy plane.

    The arc has radius ``major_radius`` and spans polar angles ``[0, arc]``.
    """

    major_radius: float
    minor_radius: float
    arc: float

    def __post_init__(self):
        _positive("torus dimension", self.major_radius, self.minor_radius, self.arc)
        if self.arc > 2 * np.pi:
            raise ValidationError("torus arc cannot exceed a full turn")

    def _endpoints(self):
        R = self.major_radius
        return np.array([R, 0.0, 0.0]), np.array([R * np.cos(self.arc), R * np.sin(self.arc), 0.0])

    def eval(self, p):
        R = self.major_radius
        phi = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2 * np.pi)
        on_arc = phi <= self.arc
        d_arc = np.hypot(np.hypot(p[..., 0], p[..., 1]) - R, p[..., 2])
        e0, e1 = self._endpoints()
        d_end = np.minimum(_length(p - e0), _length(p - e1))
        return np.where(on_arc, d_arc, d_end) - self.minor_radius

    def support(self, u):
        R = self.major_radius
        phi_star = np.mod(np.arctan2(u[1], u[0]), 2 * np.pi)
        candidates = [0.0, self.arc]
        if phi_star <= self.arc:
            candidates.append(phi_star)
        best = max(R * (u[0] * np.cos(t) + u[1] * np.sin(t)) for t in candidates)
        return float(best + self.minor_radius * np.linalg.norm(u))

    def to_dict(self):
        return {"type": "torus_segment", "major_radius": self.major_radius,
                "minor_radius": self.minor_radius, "arc": self.arc}


@dataclass(frozen=True)
class Union(SdfNode):
    items: tuple[SdfNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise ValidationError("union needs at least one child")

    def children(self):
        return self.items

    def eval(self, p):
        d = self.items[0].eval(p)
        for c in self.items[1:]:
            d = np.minimum(d, c.eval(p))
        return d

    def support(self, u):
        return max(c.support(u) for c in self.items)

    def to_dict(self):
        return {"type": "union", "children": [c.to_dict() for c in self.items]}


@dataclass(frozen=True)
class Difference(SdfNode):
    base: SdfNode
    cut: SdfNode

    def children(self):
        return (self.base, self.cut)

    def eval(self, p):
        return np.maximum(self.base.eval(p), -self.cut.eval(p))

    def support(self, u):
        return self.base.support(u)

    def to_dict(self):
        return {"type": "difference", "base": self.base.to_dict(), "cut": self.cut.to_dict()}


@dataclass(frozen=True)
class Posed(SdfNode):
    """Child node placed in the parent frame by ``pose``."""

    child: SdfNode
    pose: Pose

    def children(self):
        return (self.child,)

    def eval(self, p):
        R = self.pose.rotation
        return self.child.eval((p - self.pose.position) @ R)

    def support(self, u):
        R = self.pose.rotation
        return float(self.child.support(R.T @ u) + self.pose.position @ u)

    def to_dict(self):
        return {"type": "posed", "position": self.pose.position.tolist(),
                "orientation": self.pose.orientation.tolist(), "child": self.child.to_dict()}


@dataclass(frozen=True)
class StablePose:
    id: int
    object_pose_on_table: Pose
    tabletop_plane_obj: np.ndarray


@dataclass(frozen=True)
class SdfObject:
    root: SdfNode
    name: str
    mass: float
    stable_poses: tuple[StablePose, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "stable_poses", tuple(self.stable_poses))
        if not self.stable_poses:
            raise ValidationError(f"object {self.name!r} needs at least one stable pose")
        _positive("mass", self.mass)
        if self.root.depth() > MAX_DEPTH:
            raise ValidationError(f"SDF tree deeper than {MAX_DEPTH}")

    def stable_pose(self, pose_id: int) -> StablePose:
        for sp in self.stable_poses:
            if sp.id == pose_id:
                return sp
        raise KeyError(f"object {self.name!r} has no stable pose {pose_id}")

    @property
    def stable_pose_ids(self) -> tuple[int, ...]:
        return tuple(sp.id for sp in self.stable_poses)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        eye = np.eye(3)
        hi = np.array([self.root.support(e) for e in eye])
        lo = -np.array([self.root.support(-e) for e in eye])
        return lo, hi


def sdf_eval(obj: SdfObject, point) -> np.ndarray | float:
    """Signed distance of ``point`` (object frame); negative inside."""
    p = np.asarray(point, dtype=float)
    d = obj.root.eval(p)
    return float(d) if np.ndim(d) == 0 else d


def sdf_gradient(obj: SdfObject | SdfNode, point, step: float = NORMAL_STEP) -> np.ndarray:
    """Central-difference gradient of the SDF at point(s) ``(..., 3)``."""
    node = obj.root if isinstance(obj, SdfObject) else obj
    p = np.asarray(point, dtype=float)
    offsets = np.vstack([np.eye(3), -np.eye(3)]) * step
    d = node.eval(p[..., None, :] + offsets)
    return (d[..., :3] - d[..., 3:]) / (2.0 * step)


def surface_normal(obj: SdfObject | SdfNode, point, step: float = NORMAL_STEP) -> np.ndarray:
    """Outward unit normal(s) from the central-difference SDF gradient."""
    grad = sdf_gradient(obj, point, step)
    norm = np.linalg.norm(grad, axis=-1, keepdims=True)
    if np.any(norm < 1e-9):
        raise DegenerateNormalError("SDF gradient vanishes at query point")
    return grad / norm


def project_to_surface(obj: SdfObject, points, iterations: int = 3) -> np.ndarray:
    """Move points along the SDF gradient onto the zero level set."""
    p = np.asarray(points, dtype=float)
    for _ in range(iterations):
        d = obj.root.eval(p)
        p = p - d[..., None] * surface_normal(obj, p)
    return p


def rest_pose(root: SdfNode, orientation) -> Pose:
    """Pose placing the object with ``orientation`` on the ``z = 0`` tabletop."""
    R = quat_to_matrix(np.asarray(orientation, dtype=float) / np.linalg.norm(orientation))
    down_in_obj = R.T @ np.array([0.0, 0.0, -1.0])
    height = root.support(down_in_obj)
    return Pose(np.array([0.0, 0.0, height]), orientation)


def make_stable_pose(root: SdfNode, pose_id: int, orientation, position=None) -> StablePose:
    if position is None:
        pose = rest_pose(root, orientation)
    else:
        pose = Pose(np.asarray(position, dtype=float), orientation)
    return StablePose(pose_id, pose, plane_in_frame(TABLE_PLANE, pose))


def surface_samples(obj: SdfObject, resolution: int = 24) -> np.ndarray:
    """Approximately uniform surface points found on a bounding-box grid."""
    lo, hi = obj.bounds()
    pad = 0.01
    axes = [np.linspace(lo[i] - pad, hi[i] + pad, resolution) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    spacing = max((hi - lo + 2 * pad) / (resolution - 1))
    p = grid[np.abs(obj.root.eval(grid)) < spacing]
    for _ in range(3):
        grad = sdf_gradient(obj, p)
        norm = np.linalg.norm(grad, axis=-1)
        keep = norm > 0.5
        p, grad, norm = p[keep], grad[keep], norm[keep]
        p = p - obj.root.eval(p)[:, None] * grad / norm[:, None]
    return p


def min_height_above_table(obj: SdfObject, stable: StablePose, resolution: int = 24) -> float:
    """Lowest surface point of the object in the table frame."""
    pts = surface_samples(obj, resolution)
    pose = stable.object_pose_on_table
    return float(np.min(pts @ pose.rotation.T[:, 2] + pose.position[2]))


# -- builtin objects -------------------------------------------------------------
# Dimensions and masses are invented hand-scale constants (bounding boxes of
# 10-40 cm); nothing below is a measurement of a real part.

PIPE_TUBE_RADIUS = 0.035
PIPE_BEND_RADIUS = 0.07
PIPE_ARM_LENGTH = 0.10
PIPE_MASS = 0.3

BLOCK_HALF_EXTENTS = (0.10, 0.05, 0.05)
BLOCK_HOLE_HALF_EXTENTS = (0.035, 0.025, 0.07)
BLOCK_HOLE_OFFSET = 0.05
BLOCK_MASS = 0.6

PULLEY_LOWER_FLANGE = (0.042, 0.005)  # radius, half thickness
PULLEY_UPPER_FLANGE = (0.04, 0.005)
PULLEY_HUB = (0.022, 0.035)
PULLEY_FLANGE_OFFSET = 0.04
PULLEY_BORE_RADIUS = 0.01
PULLEY_MASS = 0.4


def _translated(node: SdfNode, offset) -> Posed:
    return Posed(node, Pose(np.asarray(offset, dtype=float)))


def bent_pipe() -> SdfObject:
    """Quarter-turn elbow with two straight arms, centred on its centreline centroid."""
    R, L, r = PIPE_BEND_RADIUS, PIPE_ARM_LENGTH, PIPE_TUBE_RADIUS
    elbow = TorusSegment(R, r, np.pi / 2)
    arm_a = Capsule(r, (R, 0.0, 0.0), (R, -L, 0.0))
    arm_b = Capsule(r, (0.0, R, 0.0), (-L, R, 0.0))
    # centroid of the centreline (quarter arc + two arms); symmetric in x and y
    arc_len = np.pi * R / 2
    c = (R * R + L * R - L * L / 2) / (arc_len + 2 * L)
    root = _translated(Union((elbow, arm_a, arm_b)), (-c, -c, 0.0))
    poses = (
        make_stable_pose(root, 0, [0.0, 0.0, 0.0, 1.0]),
        make_stable_pose(root, 1, quat_from_axis_angle([1, 0, 0], np.pi)),
    )
    return SdfObject(root, "bent_pipe", PIPE_MASS, poses)


def cinder_block() -> SdfObject:
    """Box with two rectangular through-holes along its local z axis."""
    body = Box(BLOCK_HALF_EXTENTS)
    hole = Box(BLOCK_HOLE_HALF_EXTENTS)
    holes = Union((
        _translated(hole, (BLOCK_HOLE_OFFSET, 0.0, 0.0)),
        _translated(hole, (-BLOCK_HOLE_OFFSET, 0.0, 0.0)),
    ))
    root = Difference(body, holes)
    poses = (
        make_stable_pose(root, 0, [0.0, 0.0, 0.0, 1.0]),
        make_stable_pose(root, 1, quat_from_axis_angle([1, 0, 0], np.pi / 2)),
        make_stable_pose(root, 2, quat_from_axis_angle([0, 1, 0], np.pi / 2)),
    )
    return SdfObject(root, "cinder_block", BLOCK_MASS, poses)


def pulley() -> SdfObject:
    """Two flanges of unequal radius around a hub, with an axial bore."""
    (r_lo, t_lo), (r_hi, t_hi), (r_hub, h_hub) = PULLEY_LOWER_FLANGE, PULLEY_UPPER_FLANGE, PULLEY_HUB
    off = PULLEY_FLANGE_OFFSET
    solid = Union((
        _translated(Cylinder(r_lo, t_lo), (0.0, 0.0, -off)),
        _translated(Cylinder(r_hi, t_hi), (0.0, 0.0, off)),
        Cylinder(r_hub, h_hub),
    ))
    bore = Cylinder(PULLEY_BORE_RADIUS, off + max(t_lo, t_hi) + 0.01)
    # shift so the centre of mass (uniform density) sits on the origin
    v_lo, v_hi = np.pi * r_lo**2 * 2 * t_lo, np.pi * r_hi**2 * 2 * t_hi
    v_hub = np.pi * r_hub**2 * 2 * h_hub
    v_bore = np.pi * PULLEY_BORE_RADIUS**2 * 2 * (off + max(t_lo, t_hi))
    z_com = (-off * v_lo + off * v_hi) / (v_lo + v_hi + v_hub - v_bore)
    root = _translated(Difference(solid, bore), (0.0, 0.0, -z_com))
    poses = (
        make_stable_pose(root, 0, [0.0, 0.0, 0.0, 1.0]),
        make_stable_pose(root, 1, quat_from_axis_angle([1, 0, 0], np.pi)),
    )
    return SdfObject(root, "pulley", PULLEY_MASS, poses)


def builtin_objects() -> list[SdfObject]:
    return [bent_pipe(), cinder_block(), pulley()]


def builtin_object(name: str) -> SdfObject:
    for obj in builtin_objects():
        if obj.name == name:
            return obj
    raise KeyError(f"unknown builtin object {name!r}")


# -- object files ------------------------------------------------------------------

def node_from_dict(d: dict) -> SdfNode:
    kind = d.get("type")
    try:
        if kind == "box":
            return Box(tuple(d["half_extents"]))
        if kind == "cylinder":
            return Cylinder(float(d["radius"]), float(d["half_height"]))
        if kind == "capsule":
            return Capsule(float(d["radius"]), tuple(d["a"]), tuple(d["b"]))
        if kind == "torus_segment":
            return TorusSegment(float(d["major_radius"]), float(d["minor_radius"]), float(d["arc"]))
        if kind == "union":
            return Union(tuple(node_from_dict(c) for c in d["children"]))
        if kind == "difference":
            return Difference(node_from_dict(d["base"]), node_from_dict(d["cut"]))
        if kind == "posed":
            pose = Pose(np.asarray(d.get("position", [0, 0, 0]), dtype=float),
                        np.asarray(d.get("orientation", [0, 0, 0, 1]), dtype=float))
            return Posed(node_from_dict(d["child"]), pose)
    except KeyError as exc:
        raise ValidationError(f"{kind} node is missing field {exc}") from None
    raise ValidationError(f"unknown SDF node type {kind!r}")


def object_to_dict(obj: SdfObject) -> dict:
    return {
        "name": obj.name,
        "mass": obj.mass,
        "note": "dimensions and mass are invented constants",
        "root": obj.root.to_dict(),
        "stable_poses": [
            {"id": sp.id,
             "orientation": sp.object_pose_on_table.orientation.tolist(),
             "position": sp.object_pose_on_table.position.tolist()}
            for sp in obj.stable_poses
        ],
    }


def object_from_dict(d: dict) -> SdfObject:
    root = node_from_dict(d["root"])
    poses = []
    for entry in d.get("stable_poses", []):
        poses.append(make_stable_pose(root, int(entry["id"]), entry["orientation"], entry.get("position")))
    return SdfObject(root, str(d["name"]), float(d["mass"]), tuple(poses))


def load_object(path) -> SdfObject:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    return object_from_dict(data)


def save_object(obj: SdfObject, path) -> None:
    Path(path).write_text(json.dumps(object_to_dict(obj), indent=2) + "\n")


def resolve_object(spec: str) -> SdfObject:
    """A builtin name or a path to an object file."""
    if Path(spec).suffix == ".json" or Path(spec).exists():
        return load_object(spec)
    return builtin_object(spec)
