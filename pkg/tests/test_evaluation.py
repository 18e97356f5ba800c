import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graspspace.dataset import TEMPLATES, place_template
from graspspace.evaluation import (
    EvalParams,
    FailureReason,
    GraspOutcome,
    evaluate_batch,
    evaluate_grasp,
    item_rng,
    metric_noise,
)
from graspspace.gripper import FingerState, GripperConfig, check_table_collision, close_fingers
from graspspace.mathcore import Pose, pose_compose, pose_inverse, quat_from_axis_angle
from graspspace.metric import can_resist_gravity, q_msv
from graspspace.objects import builtin_object

PULLEY = builtin_object("pulley")
STABLE = PULLEY.stable_poses[0]
PARAMS = EvalParams()


def top_pinch(yaw=0.3):
    template = next(t for t in TEMPLATES if t.name == "top_pinch")
    return place_template(PULLEY, STABLE, template, 0.0, yaw, PARAMS, margin=0.008)


def random_configs(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        q = rng.normal(size=4)
        out.append(GripperConfig(Pose(rng.uniform(-0.15, 0.15, 3), q), rng.uniform(0, np.pi / 2)))
    return out


def test_far_above_is_no_lift():
    up = STABLE.tabletop_plane_obj[:3]
    out = evaluate_grasp(PULLEY, STABLE, GripperConfig(Pose(1.0 * up), 0.0))
    assert not out.success
    assert out.failure_reason == FailureReason.NO_LIFT
    assert out.quality == 0.0


def test_palm_below_table():
    plane = STABLE.tabletop_plane_obj
    below = -(plane[3] + 0.05) * plane[:3]
    # well off to the side so the start is free of the object
    side = np.cross(plane[:3], [1.0, 0, 0])
    out = evaluate_grasp(PULLEY, STABLE, GripperConfig(Pose(below + 0.3 * side), 0.0))
    assert out.failure_reason == FailureReason.TABLE_COLLISION
    assert out.quality == 0.0


def test_top_pinch_matches_its_steps():
    rec = top_pinch()
    assert rec is not None
    cfg = rec.to_config()
    out = evaluate_grasp(PULLEY, STABLE, cfg)
    # redo each step by hand
    state, contacts = close_fingers(PARAMS.geometry, cfg, PULLEY)
    plane = STABLE.tabletop_plane_obj
    assert not check_table_collision(PARAMS.geometry, cfg, FingerState.open(), plane)
    assert not check_table_collision(PARAMS.geometry, cfg, state, plane)
    assert can_resist_gravity(contacts, PULLEY.mass, PARAMS.mu, plane)
    assert out.success
    assert out.quality == q_msv(contacts) > 0
    assert len(out.contacts) >= 2


def test_batch_edge_cases():
    assert evaluate_batch(PULLEY, STABLE, []) == []
    cfg = top_pinch().to_config()
    (single,) = evaluate_batch(PULLEY, STABLE, [cfg])
    assert _same(single, evaluate_grasp(PULLEY, STABLE, cfg))
    with pytest.raises(ValueError):
        evaluate_batch(PULLEY, STABLE, [cfg], workers=0)


def _same(a: GraspOutcome, b: GraspOutcome):
    return (a.success == b.success and a.quality == b.quality and a.failure_reason == b.failure_reason
            and all(np.array_equal(x.position, y.position) for x, y in zip(a.contacts, b.contacts)))


def test_workers_do_not_change_results():
    configs = random_configs(60, 3) + [top_pinch(y).to_config() for y in np.linspace(0, 6, 40)]
    one = evaluate_batch(PULLEY, STABLE, configs, workers=1)
    many = evaluate_batch(PULLEY, STABLE, configs, workers=8)
    assert len(one) == len(many) == 100
    assert all(_same(a, b) for a, b in zip(one, many))


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_outcome_semantics(seed):
    cfg = random_configs(1, seed)[0]
    out = evaluate_grasp(PULLEY, STABLE, cfg)
    if out.success:
        assert out.quality > 0 and out.failure_reason == FailureReason.NONE
        assert len(out.contacts) >= 2
    else:
        assert out.quality == 0.0 and out.failure_reason != FailureReason.NONE


def test_world_placement_does_not_matter():
    # the same grasp, expressed through two different object placements on the table
    rec = top_pinch(1.1)
    grip_obj = rec.to_config().pose
    outcomes = []
    for xy, yaw in (((0.6, 0.0), 0.0), ((0.55, 0.04), 2.3)):
        obj_world = pose_compose(Pose([*xy, 0.0], quat_from_axis_angle([0, 0, 1], yaw)), STABLE.object_pose_on_table)
        grip_world = pose_compose(obj_world, grip_obj)
        back = pose_compose(pose_inverse(obj_world), grip_world)
        outcomes.append(evaluate_grasp(PULLEY, STABLE, GripperConfig(back, rec.spread)))
    a, b = outcomes
    assert a.success == b.success and a.quality == pytest.approx(b.quality, rel=1e-6)


def test_metric_noise():
    ok = GraspOutcome(True, 0.04, FailureReason.NONE)
    bad = GraspOutcome(False, 0.0, FailureReason.NO_LIFT)
    rng = np.random.default_rng(0)
    assert metric_noise(ok, 0.0, rng) == 0.04
    assert metric_noise(bad, 0.3, rng) == 0.0
    vals = [metric_noise(ok, 0.2, rng) for _ in range(500)]
    assert 0.032 <= min(vals) and max(vals) <= 0.048
    with pytest.raises(ValueError):
        metric_noise(ok, 0.6, rng)
    a = metric_noise(ok, 0.2, item_rng(7, 3))
    assert a == metric_noise(ok, 0.2, item_rng(7, 3))
    assert a != metric_noise(ok, 0.2, item_rng(7, 4))
