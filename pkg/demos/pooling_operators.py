"""
Index matrix, semi-average pooling and max unpooling
====================================================

Every point links to its K nearest nodes.  Pooling divides by the global
average receptive field g rather than each node's own count, so busy nodes
speak louder and detached nodes stay silent.
"""

import numpy as np

from dynagg.cloud import PointCloud
from dynagg.index import build_index, empty_nodes
from dynagg.pool import aggregate, aggregate_backward, propagate, propagate_backward
from dynagg.som import Skeleton, grid_shape_for

rng = np.random.default_rng(0)
cloud = PointCloud(rng.uniform(size=(300, 3)))
# eight nodes inside the cube and one stranded far away
nodes = np.vstack([rng.uniform(size=(8, 3)), [[5.0, 5.0, 5.0]]])
skeleton = Skeleton(nodes, grid_shape_for(9))

index = build_index(cloud, skeleton, k=3)
print(f"N={index.n} M={index.m} K={index.k_eff} g={index.g}")
print("receptive fields T_j:", index.counts.tolist())
print("detached nodes:", empty_nodes(index).tolist())

ones = np.ones((index.n, 1))
print("semi-average of ones (= T_j / g):",
      np.round(aggregate(ones, index, "semi_average")[:, 0], 3).tolist())
print("mean of ones:", aggregate(ones, index, "mean")[:, 0].tolist())

# unpool back to points: each point takes the max over its K nodes
features = rng.normal(size=(index.n, 4))
pooled, pool_ctx = aggregate(features, index, "max", return_context=True)
point_ctx, unpool_ctx = propagate(pooled, index, "max", return_context=True)
print("unpooled shape:", point_ctx.shape)

# gradients flow back along the winning entries only
g_nodes = propagate_backward(np.ones_like(point_ctx), index, unpool_ctx)
g_points = aggregate_backward(g_nodes, index, pool_ctx)
print("gradient reaching the detached node:", g_nodes[8].tolist())
print("points receiving gradient:", int((g_points != 0).any(axis=1).sum()))
