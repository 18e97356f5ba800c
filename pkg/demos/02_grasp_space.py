"""Learn a one-dimensional grasp space for the cinder block and walk along it.

A short HGG training run on synthesized primitives, then an even latent sweep
decoded for each stable pose and checked with the evaluator.
"""

import numpy as np

from graspspace.dataset import normalize_many, synth_primitives
from graspspace.evaluation import evaluate_batch
from graspspace.objects import builtin_object
from graspspace.vae import Architecture, TrainConfig, decode, encode, train

block = builtin_object("cinder_block")
primitives = synth_primitives(block, 40, np.random.default_rng(0), total=141)
print(f"{len(primitives)} primitives over stable poses {primitives.stable_pose_ids()}")

hgg, history = train(Architecture("hgg"), primitives, TrainConfig(epochs=600, kl_weight=0.1))
print(f"loss {history[0]:.3f} -> {history[-1]:.3f}")

mu, _ = encode(hgg, normalize_many(primitives.records, hgg.stats))
print(f"encoded primitive means: mean {mu.mean():+.2f}, std {mu.std():.2f}")

latents = np.linspace(-3, 3, 13)
for stable in block.stable_poses:
    decoded = decode(hgg, latents, stable.tabletop_plane_obj)
    outcomes = evaluate_batch(block, stable, [r.to_config() for r in decoded.records(stable.id)])
    marks = "".join("+" if o.success else "." for o in outcomes)
    print(f"pose {stable.id}: l = -3 .. 3  {marks}")
