import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from graspspace.errors import DegenerateNormalError, ValidationError
from graspspace.mathcore import Pose, plane_in_frame, quat_from_axis_angle
from graspspace.objects import (
    TABLE_PLANE,
    Box,
    Capsule,
    Cylinder,
    Difference,
    Posed,
    SdfObject,
    TorusSegment,
    Union,
    builtin_object,
    builtin_objects,
    load_object,
    make_stable_pose,
    min_height_above_table,
    object_from_dict,
    object_to_dict,
    save_object,
    sdf_eval,
    surface_normal,
    surface_samples,
)


# closed-form distances written out independently of the package ----------------

def box_distance(p, h):
    q = np.abs(p) - h
    out = np.sqrt(np.sum(np.maximum(q, 0) ** 2, axis=-1))
    return out + np.minimum(q.max(axis=-1), 0)


def cylinder_distance(p, r, hh):
    dr = np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2) - r
    dz = np.abs(p[..., 2]) - hh
    out = np.sqrt(np.maximum(dr, 0) ** 2 + np.maximum(dz, 0) ** 2)
    return out + np.minimum(np.maximum(dr, dz), 0)


def capsule_distance(p, r, a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0, 1)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1) - r


def torus_segment_distance(p, R, r, arc):
    # nearest point on the centreline arc: clamp the polar angle to [0, arc]
    phi = np.arctan2(p[..., 1], p[..., 0])
    phi = np.where(phi < 0, phi + 2 * np.pi, phi)
    inside = phi <= arc
    ends = np.array([[R, 0, 0], [R * np.cos(arc), R * np.sin(arc), 0]])
    d_end = np.min(np.linalg.norm(p[..., None, :] - ends, axis=-1), axis=-1)
    rho = np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2)
    d_arc = np.sqrt((rho - R) ** 2 + p[..., 2] ** 2)
    return np.where(inside, d_arc, d_end) - r


@pytest.fixture(scope="module")
def cloud():
    return np.random.default_rng(5).uniform(-0.3, 0.3, (1000, 3))


def test_primitive_examples():
    assert Box((0.5, 0.5, 0.5)).eval(np.zeros(3)) == pytest.approx(-0.5)
    assert Cylinder(0.1, 0.1).eval(np.array([0.3, 0, 0])) == pytest.approx(0.2)


def test_primitives_match_closed_form(cloud):
    h = np.array([0.1, 0.05, 0.07])
    assert np.max(np.abs(Box(h).eval(cloud) - box_distance(cloud, h))) <= 1e-9
    assert np.max(np.abs(Cylinder(0.08, 0.05).eval(cloud) - cylinder_distance(cloud, 0.08, 0.05))) <= 1e-9
    a, b = (0.05, -0.02, 0.0), (-0.04, 0.1, 0.03)
    assert np.max(np.abs(Capsule(0.03, a, b).eval(cloud) - capsule_distance(cloud, 0.03, a, b))) <= 1e-9
    seg = TorusSegment(0.12, 0.02, np.pi / 2)
    assert np.max(np.abs(seg.eval(cloud) - torus_segment_distance(cloud, 0.12, 0.02, np.pi / 2))) <= 1e-9


def test_composition_is_min_max(cloud):
    cap = Capsule(0.05, (0, 0, 0), (0, 0, 0.001))
    box = Box((0.1, 0.04, 0.03))
    u = Union((cap, box))
    assert np.array_equal(u.eval(cloud), np.minimum(cap.eval(cloud), box.eval(cloud)))
    d = Difference(box, cap)
    assert np.array_equal(d.eval(cloud), np.maximum(box.eval(cloud), -cap.eval(cloud)))


def test_posed_node(cloud):
    pose = Pose([0.02, -0.03, 0.01], quat_from_axis_angle([0, 0, 1], 0.4))
    node = Posed(Box((0.1, 0.05, 0.02)), pose)
    local = (cloud - pose.position) @ pose.rotation
    assert np.allclose(node.eval(cloud), box_distance(local, np.array([0.1, 0.05, 0.02])), atol=1e-12)


def test_normal_examples():
    box = Box((0.1, 0.2, 0.3))
    assert np.allclose(surface_normal(box, [0.1, 0, 0]), [1, 0, 0], atol=1e-6)
    assert np.allclose(surface_normal(box, [0, 0, -0.3]), [0, 0, -1], atol=1e-6)
    cyl = Cylinder(0.05, 0.1)
    assert np.allclose(surface_normal(cyl, [0.05, 0, 0]), [1, 0, 0], atol=1e-6)


@given(st.floats(0, 2 * np.pi), st.floats(-0.09, 0.09))
def test_cylinder_normal_matches_closed_form(angle, z):
    cyl = Cylinder(0.05, 0.1)
    p = np.array([0.05 * np.cos(angle), 0.05 * np.sin(angle), z])
    n = surface_normal(cyl, p)
    assert np.allclose(n, [np.cos(angle), np.sin(angle), 0], atol=1e-4)
    assert abs(np.linalg.norm(n) - 1) < 1e-6


@given(st.floats(-0.2, 0.2), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))
def test_normals_unit(x, y, z):
    obj = builtin_object("cinder_block")
    try:
        n = surface_normal(obj, [x, y, z])
    except DegenerateNormalError:
        return
    assert abs(np.linalg.norm(n) - 1) < 1e-6


def test_degenerate_normal():
    # the centre of a cube is equidistant from opposite faces: the gradient cancels
    with pytest.raises(DegenerateNormalError):
        surface_normal(Box((0.1, 0.1, 0.1)), [0, 0, 0])


def test_validation():
    with pytest.raises(ValidationError):
        Box((0.1, -0.1, 0.1))
    with pytest.raises(ValidationError):
        Cylinder(0.0, 0.1)
    node = Box((0.1, 0.1, 0.1))
    pose = make_stable_pose(node, 0, [0, 0, 0, 1])
    with pytest.raises(ValidationError):
        SdfObject(node, "x", 1.0, ())
    with pytest.raises(ValidationError):
        SdfObject(node, "x", 0.0, (pose,))
    deep = node
    for _ in range(17):
        deep = Posed(deep, Pose())
    with pytest.raises(ValidationError):
        SdfObject(deep, "x", 1.0, (pose,))


def test_builtin_objects():
    objs = builtin_objects()
    assert len(objs) == 3
    assert [o.name for o in objs] == ["bent_pipe", "cinder_block", "pulley"]
    assert len(builtin_object("cinder_block").stable_poses) == 3
    extents = {o.name: np.max(np.subtract(*o.bounds()[::-1])) for o in objs}
    assert 0.10 <= extents["bent_pipe"] <= 0.40
    assert 0.10 <= extents["cinder_block"] <= 0.40
    # the pulley is kept at 9 cm so the fixed-length fingers can wrap its hub
    assert extents["pulley"] == pytest.approx(0.09, abs=1e-3)


@pytest.mark.parametrize("name", ["bent_pipe", "cinder_block", "pulley"])
def test_stable_poses_rest_on_table(name):
    obj = builtin_object(name)
    for sp in obj.stable_poses:
        assert np.allclose(sp.tabletop_plane_obj, plane_in_frame(TABLE_PLANE, sp.object_pose_on_table), atol=1e-9)
        assert abs(np.linalg.norm(sp.tabletop_plane_obj[:3]) - 1) < 1e-9
        # nothing below the table, and the object actually touches it
        h = min_height_above_table(obj, sp)
        assert h >= -1e-4
        assert h <= 2e-3
        pts = surface_samples(obj)
        heights = pts @ sp.tabletop_plane_obj[:3] + sp.tabletop_plane_obj[3]
        assert heights.min() >= -1e-4


def test_json_round_trip(tmp_path):
    for obj in builtin_objects():
        path = tmp_path / f"{obj.name}.json"
        save_object(obj, path)
        back = load_object(path)
        assert back.name == obj.name and back.mass == obj.mass
        pts = np.random.default_rng(0).uniform(-0.2, 0.2, (200, 3))
        assert np.array_equal(back.root.eval(pts), obj.root.eval(pts))
        for a, b in zip(obj.stable_poses, back.stable_poses):
            assert a.id == b.id
            assert np.allclose(a.tabletop_plane_obj, b.tabletop_plane_obj, atol=1e-12)


def test_bad_object_files(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError):
        load_object(p)
    d = object_to_dict(builtin_object("pulley"))
    d["root"] = {"type": "sphere", "radius": 1}
    with pytest.raises(ValidationError):
        object_from_dict(json.loads(json.dumps(d)))


def test_sdf_eval_scalar_and_batch():
    obj = builtin_object("pulley")
    assert isinstance(sdf_eval(obj, [0, 0, 1.0]), float)
    assert sdf_eval(obj, np.zeros((4, 3))).shape == (4,)
