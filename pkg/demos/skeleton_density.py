"""
Kohonen skeletons follow point density
======================================

A self-organizing map spreads its nodes like the points, so each compact
object pulls at least one node even though the planes hold most points.
"""

import numpy as np

from dynagg.cloud import normalize_unit_cube
from dynagg.sizing import SizingPolicy, skeleton_size
from dynagg.som import SomConfig, fit_skeleton
from dynagg.synth import generate_scene, random_scene_spec

scene = generate_scene(random_scene_spec(seed=1))
unit, tf = normalize_unit_cube(scene.cloud)

# node count grows with the log of the point count, capped at 256
policy = SizingPolicy()
for n in (10, 1_000, len(scene.cloud), 10**6):
    print(f"N={n:>8}: M={skeleton_size(policy, n)}")
m = skeleton_size(policy, len(scene.cloud))

skeleton = fit_skeleton(unit, m, SomConfig(rng_seed=1))
log = skeleton.training_log
print(f"trained {m} nodes on a {skeleton.grid_shape} grid in {len(log)} epochs")
print(f"quantization error: {log[0]:.2e} -> {log[-1]:.2e}")

nodes = tf.invert(skeleton.node_positions)
for center, r in zip(scene.centers, scene.radii):
    d = np.linalg.norm(nodes - center, axis=1)
    print(f"object r={r:.2f} m: nearest node {d.min():.2f} m, "
          f"{(d <= 1.5 * r).sum()} nodes within 1.5 r")
