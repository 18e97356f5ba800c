"""Quaternions, rigid poses, plane transforms and small-matrix singular values.

Quaternions are stored as ``numpy`` arrays in ``(qx, qy, qz, qw)`` order and use
the Hamilton convention.  Stored quaternions are always sign-canonical: ``qw >= 0``
and, when ``qw == 0``, the first nonzero vector component is positive.  This makes
``q`` and ``-q`` map to a single representative so that regression targets built
from them are unique.

Planes are 4-arrays ``(a, b, c, d)`` describing ``a*x + b*y + c*z + d = 0`` with a
unit normal pointing away from the table into free space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateQuaternionError, NumericError

_EPS = np.finfo(float).eps

IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Flip the sign of ``q`` so that it lies in the canonical hemisphere."""
    q = np.asarray(q, dtype=float)
    if q[3] > 0.0:
        return q.copy()
    if q[3] < 0.0:
        return -q
    for c in q[:3]:
        if c != 0.0:
            return q.copy() if c > 0.0 else -q
    return q.copy()


def quat_normalize(v) -> np.ndarray:
    """Return the canonical unit quaternion pointing along raw 4-vector ``v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (4,):
        raise ValueError(f"expected a 4-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DegenerateQuaternionError("quaternion has non-finite components")
    n = float(np.linalg.norm(v))
    if n <= 1e-12:
        raise DegenerateQuaternionError(f"quaternion norm {n:g} is too small to normalize")
    # already unit up to rounding: leave the bits alone so normalization is idempotent
    if abs(n - 1.0) > 4 * _EPS:
        v = v / n
    return quat_canonical(v)


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product ``q1 * q2`` (not canonicalized)."""
    x1, y1, z1, w1 = q1
    x2, y2, z2, w2 = q2
    return np.array([
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion."""
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Canonical unit quaternion of a rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s, (R[1, 0] - R[0, 1]) / s]
    return quat_normalize(np.array(q))


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return quat_normalize(np.concatenate([np.sin(half) * axis, [np.cos(half)]]))


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping child-frame coordinates into the parent frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, R: np.ndarray, position=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(position, dtype=float), matrix_to_quat(R))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])


def pose_compose(p1: Pose, p2: Pose) -> Pose:
    """Return ``p1 * p2``: apply ``p2`` first, then ``p1``."""
    position = p1.position + quat_to_matrix(p1.orientation) @ p2.position
    return Pose(position, quat_multiply(p1.orientation, p2.orientation))


def pose_inverse(p: Pose) -> Pose:
    q_inv = quat_conjugate(p.orientation)
    return Pose(-(quat_to_matrix(q_inv) @ p.position), q_inv)


def pose_apply(p: Pose, pt) -> np.ndarray:
    """Map point(s) ``pt`` of shape ``(..., 3)`` from the child to the parent frame."""
    pt = np.asarray(pt, dtype=float)
    return pt @ p.rotation.T + p.position


def plane_normalize(plane) -> np.ndarray:
    plane = np.asarray(plane, dtype=float)
    n = np.linalg.norm(plane[:3])
    if n <= 1e-12:
        raise ValueError("plane normal has zero length")
    return plane / n


def plane_in_frame(world_plane, object_pose_in_world: Pose) -> np.ndarray:
    """Express a parent-frame plane in the child frame of ``object_pose_in_world``."""
    plane = np.asarray(world_plane, dtype=float)
    n = plane[:3]
    R = object_pose_in_world.rotation
    n_obj = R.T @ n
    d_obj = float(n @ object_pose_in_world.position + plane[3])
    return np.concatenate([n_obj, [d_obj]])


def plane_signed_distance(plane, pts) -> np.ndarray:
    """Signed height of point(s) above ``plane``; negative below it."""
    pts = np.asarray(pts, dtype=float)
    return pts @ plane[:3] + plane[3]


def singular_values(M: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Six singular values of a ``6 x m`` matrix, descending and zero-padded.

    One-sided (Hestenes) Jacobi applied to the six columns of ``M.T``: plane
    rotations orthogonalize column pairs until the largest normalized inner
    product seen in a sweep drops below ``tol``; the column norms are then the
    singular values.  ``M.T`` always has six columns, so matrices of rank < 6
    yield zeros in the tail automatically.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != 6:
        raise ValueError(f"expected a 6 x m matrix, got shape {M.shape}")
    if M.shape[1] < 1 or M.shape[1] > 64:
        raise ValueError(f"column count {M.shape[1]} outside the supported range [1, 64]")
    if not np.all(np.isfinite(M)):
        raise NumericError("matrix has non-finite entries")

    A = M.T.copy()  # m x 6, columns are rows of M
    n = A.shape[1]
    # columns this small relative to the whole matrix are numerically zero
    floor = 1e-30 * max(float(np.sum(A * A)), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = 0.0
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ai = A[:, i]
                aj = A[:, j]
                alpha = ai @ ai
                beta = aj @ aj
                gamma = ai @ aj
                if alpha <= floor or beta <= floor:
                    continue
                rel = abs(gamma) / (np.sqrt(alpha) * np.sqrt(beta))
                off = max(off, rel)
                if rel <= _EPS:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_i = c * ai - s * aj
                new_j = s * ai + c * aj
                A[:, i] = new_i
                A[:, j] = new_j
                rotated = True
        if not rotated or off < tol:
            break
    sv = np.sqrt(np.einsum("ij,ij->j", A, A))
    return np.sort(sv)[::-1]
