import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from graspspace.errors import DegenerateQuaternionError, NumericError
from graspspace.mathcore import (
    Pose,
    matrix_to_quat,
    plane_in_frame,
    pose_apply,
    pose_compose,
    pose_inverse,
    quat_canonical,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    singular_values,
)

from oracles import jacobi_eigvals, random_orthogonal, rotation_z

finite = st.floats(-10, 10, allow_nan=False)
quat4 = st.tuples(finite, finite, finite, finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


def test_normalize_examples():
    assert np.array_equal(quat_normalize([0, 0, 0, 2]), [0, 0, 0, 1])
    assert np.allclose(quat_normalize([1, 1, 1, 1]), [0.5, 0.5, 0.5, 0.5], atol=0, rtol=1e-15)
    v = np.array([0.3, -0.1, 0.2, -0.9])
    expected = -v / np.sqrt(0.09 + 0.01 + 0.04 + 0.81)
    assert np.allclose(quat_normalize(v), expected, atol=1e-15)


def test_normalize_rejects_degenerate():
    with pytest.raises(DegenerateQuaternionError):
        quat_normalize([0, 0, 0, 0])
    with pytest.raises(DegenerateQuaternionError):
        quat_normalize([np.nan, 0, 0, 1])


def test_canonical_tie_break():
    # qw = 0: first nonzero vector component decides the sign
    assert np.array_equal(quat_canonical(np.array([0.0, -1.0, 0.0, 0.0])), [0, 1, 0, 0])
    assert np.array_equal(quat_canonical(np.array([0.0, 0.0, 1.0, 0.0])), [0, 0, 1, 0])


@given(quat4)
def test_normalize_idempotent(v):
    q = quat_normalize(np.array(v))
    assert np.array_equal(quat_normalize(q), q)
    assert q[3] >= 0.0
    assert abs(np.linalg.norm(q) - 1.0) < 1e-12


@given(quat4, quat4)
def test_multiply_matches_scipy(a, b):
    qa, qb = quat_normalize(np.array(a)), quat_normalize(np.array(b))
    ours = quat_canonical(quat_multiply(qa, qb))
    ref = (Rotation.from_quat(qa) * Rotation.from_quat(qb)).as_quat()
    assert np.allclose(ours, quat_canonical(ref), atol=1e-12)


@given(quat4)
def test_matrix_round_trip(v):
    q = quat_normalize(np.array(v))
    R = quat_to_matrix(q)
    assert np.allclose(R, Rotation.from_quat(q).as_matrix(), atol=1e-12)
    back = matrix_to_quat(R)
    assert np.allclose(quat_to_matrix(back), R, atol=1e-12)
    # q and -q are the same rotation; near qw = 0 either may be the canonical one
    assert np.allclose(back, q, atol=1e-12) or np.allclose(back, -q, atol=1e-12)
    if q[3] > 1e-6:
        assert np.allclose(back, q, atol=1e-12)


def test_pose_examples():
    p = Pose([0.1, -0.2, 0.3], quat_from_axis_angle([1, 2, 3], 0.7))
    ident = pose_compose(Pose.identity(), p)
    assert np.allclose(ident.as_array(), p.as_array(), atol=1e-15)
    e = pose_compose(p, pose_inverse(p))
    assert np.allclose(e.position, 0, atol=1e-9)
    assert np.allclose(e.orientation, [0, 0, 0, 1], atol=1e-9)
    # translation (1,0,0) plus yaw 90 deg applied to (1,0,0)
    yaw = Pose([1, 0, 0], quat_from_axis_angle([0, 0, 1], np.pi / 2))
    expected = rotation_z(np.pi / 2) @ np.array([1.0, 0, 0]) + [1, 0, 0]
    assert np.allclose(expected, [1, 1, 0], atol=1e-15)
    assert np.allclose(pose_apply(yaw, [1, 0, 0]), expected, atol=1e-12)


@given(quat4, st.tuples(finite, finite, finite))
def test_pose_inverse_property(v, t):
    p = Pose(np.array(t), np.array(v))
    for e in (pose_compose(p, pose_inverse(p)), pose_compose(pose_inverse(p), p)):
        assert np.allclose(e.position, 0, atol=1e-9)
        assert np.allclose(e.orientation, [0, 0, 0, 1], atol=1e-9)


def _refit_plane(world_plane, pose):
    """Oracle: carry three plane points into the child frame and refit."""
    n = np.asarray(world_plane[:3], float)
    base = -world_plane[3] * n
    u = np.cross(n, [1, 0, 0] if abs(n[0]) < 0.9 else [0, 1, 0])
    w = np.cross(n, u)
    pts = np.array([base, base + u, base + w])
    inv = pose_inverse(pose)
    local = pose_apply(inv, pts)
    normal = np.cross(local[1] - local[0], local[2] - local[0])
    normal /= np.linalg.norm(normal)
    if normal @ (inv.rotation @ n) < 0:
        normal = -normal
    return np.concatenate([normal, [-normal @ local[0]]])


def test_plane_in_frame_examples():
    table = np.array([0.0, 0.0, 1.0, 0.0])
    assert np.allclose(plane_in_frame(table, Pose.identity()), [0, 0, 1, 0])
    lifted = Pose([0, 0, 0.05])
    assert np.allclose(plane_in_frame(table, lifted), [0, 0, 1, 0.05], atol=1e-15)
    assert np.allclose(plane_in_frame(table, lifted), _refit_plane(table, lifted), atol=1e-12)
    for yaw in (0.3, 2.0, -1.2):
        p = Pose([0.2, 0.1, 0], quat_from_axis_angle([0, 0, 1], yaw))
        assert np.allclose(plane_in_frame(table, p), [0, 0, 1, 0], atol=1e-12)


@given(quat4, st.tuples(finite, finite, finite))
def test_plane_round_trip(v, t):
    pose = Pose(np.array(t) / 10, np.array(v))
    table = np.array([0.0, 0.0, 1.0, 0.0])
    local = plane_in_frame(table, pose)
    assert np.allclose(local, _refit_plane(table, pose), atol=1e-9)
    back = plane_in_frame(local, pose_inverse(pose))
    assert np.allclose(back, table, atol=1e-9)


def test_singular_value_examples():
    assert np.allclose(singular_values(np.eye(6)), np.ones(6), atol=1e-15)
    M = np.zeros((6, 3))
    M[0, 0], M[1, 1], M[2, 2] = 3, 2, 1
    assert np.allclose(singular_values(M), [3, 2, 1, 0, 0, 0], atol=1e-15)


def test_singular_values_match_jacobi_eigen_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        M = rng.standard_normal((6, 9))
        oracle = np.sqrt(np.clip(jacobi_eigvals(M @ M.T), 0, None))[::-1]
        assert np.allclose(singular_values(M), oracle, atol=1e-8)
        assert np.allclose(singular_values(M), np.linalg.svd(M, compute_uv=False), atol=1e-12)


@given(st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_singular_values_orthogonal_invariance(m, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((6, m))
    U, V = random_orthogonal(6, rng), random_orthogonal(m, rng)
    assert np.allclose(singular_values(U @ M @ V), singular_values(M), atol=1e-8)


def test_singular_values_input_checks():
    with pytest.raises(ValueError):
        singular_values(np.zeros((5, 3)))
    with pytest.raises(ValueError):
        singular_values(np.zeros((6, 65)))
    M = np.eye(6)
    M[0, 0] = np.inf
    with pytest.raises(NumericError):
        singular_values(M)
