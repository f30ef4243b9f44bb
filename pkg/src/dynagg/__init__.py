"""Dynamic aggregation over point clouds.

Kohonen pooling skeletons sized by scene complexity, K-nearest-node index
matrices, semi-average pooling / max unpooling with analytic gradients, a
padded-sequence GRU integrator and dataset-level segmentation metrics.
"""

from .cloud import (PointCloud, grid_downsample, load_cloud, nearest_neighbor_extrapolate,
                    normalize_unit_cube, save_cloud)
from .index import IndexMatrix, build_index, empty_nodes
from .integrate import GruParams, PaddedSequence, gru_backward, gru_forward, pad_sequence
from .metrics import ConfusionMatrix
from .pool import (PoolChoice, aggregate, aggregate_backward, propagate,
                   propagate_backward)
from .sizing import SizingPolicy, skeleton_size
from .som import Skeleton, SomConfig, fit_skeleton, init_skeleton, quantization_error, train_skeleton
from .synth import ClusterSpec, SceneSpec, generate, generate_scene

__version__ = "0.1.0"
