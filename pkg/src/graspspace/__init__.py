"""Learning a one-dimensional grasp space for a three-finger gripper.

Pipeline: synthesize primitive grasps, train a generator on them, extend the
dataset with evaluated samples, train a quality-predicting generator, then plan
grasps by sampling its latent space.
"""

from .config import RunConfig, load_config, parse_config
from .dataset import GraspDataset, GraspRecord, load_csv, save_csv, synth_primitives
from .evaluation import EvalParams, FailureReason, GraspOutcome, evaluate_grasp
from .gripper import GripperConfig, GripperGeometry, close_fingers
from .metric import Contact, build_grasp_map, can_resist_gravity, q_msv
from .objects import SdfObject, StablePose, builtin_object, builtin_objects
from .pipeline import (
    ThresholdPolicy,
    Workspace,
    dataset_stats,
    extend_dataset,
    latent_sweep_report,
    pick_threshold,
    plan_grasp,
    reachable,
    run_trials,
)
from .vae import Architecture, TrainConfig, decode, encode, load_model, save_model, train

__version__ = "0.1.0"
