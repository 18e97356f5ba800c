"""The whole workflow for one object at desk scale, then a single planning query.

Takes a couple of minutes on one core.
"""

import numpy as np

from graspspace.config import RunConfig
from graspspace.mathcore import Pose, pose_compose, quat_from_axis_angle
from graspspace.objects import builtin_object
from graspspace.pipeline import plan_grasp
from graspspace.evaluation import evaluate_grasp
from graspspace.runner import run_object

cfg = RunConfig(objects=("bent_pipe",))
pipe = builtin_object("bent_pipe")
run = run_object(cfg, pipe, 0, log=print)
print(run.report.summary_text())

# one more object pose, planned and executed by hand
stable = pipe.stable_poses[1]
world = pose_compose(Pose([0.62, -0.03, 0.0], quat_from_axis_angle([0, 0, 1], 2.0)), stable.object_pose_on_table)
plan = plan_grasp(run.qgg, stable, world, run.thresholds[stable.id], np.random.default_rng(9))
result = evaluate_grasp(pipe, stable, plan.record.to_config())
print(f"predicted {plan.predicted_quality:.4f}, measured {result.quality:.4f}, telemetry {plan.telemetry()}")
