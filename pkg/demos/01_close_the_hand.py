"""Close the hand on the pulley and look at what the evaluator sees.

Run with ``python demos/01_close_the_hand.py``.
"""

import numpy as np

from graspspace.dataset import TEMPLATES, place_template
from graspspace.evaluation import evaluate_grasp
from graspspace.gripper import GripperGeometry, close_fingers
from graspspace.metric import build_grasp_map, grasp_rank
from graspspace.objects import builtin_object

pulley = builtin_object("pulley")
stable = pulley.stable_poses[0]

# a top-down pinch aimed at the centre of mass, stopped 8 mm before contact
pinch = next(t for t in TEMPLATES if t.name == "top_pinch")
record = place_template(pulley, stable, pinch, spread=0.0, yaw=0.4)
config = record.to_config()
print("gripper position in the object frame:", np.round(config.pose.position, 4))

state, contacts = close_fingers(GripperGeometry(), config, pulley)
print("proximal joints (deg):", np.round(np.degrees(state.proximal), 1))
print("distal joints (deg):  ", np.round(np.degrees(state.distal), 1))
for c in contacts:
    print(f"  contact at {np.round(c.position, 4)}  inward normal {np.round(c.normal, 3)}")

G = build_grasp_map(contacts)
print(f"grasp map {G.shape}, rank {grasp_rank(contacts)}")

outcome = evaluate_grasp(pulley, stable, config)
print(f"outcome: success={outcome.success} quality={outcome.quality:.4f} ({outcome.failure_reason.value})")

# stop the same hand 5 cm short: the fingers close on air
far = place_template(pulley, stable, pinch, 0.0, 0.4, margin=0.05)
print("5 cm standoff:", evaluate_grasp(pulley, stable, far.to_config()).failure_reason.value)
