"""Kohonen self-organizing map that places the pooling skeleton.

Nodes live on a near-square 2D lattice; the lattice is stored row-major, so
node ``j`` sits at grid cell ``divmod(j, cols)`` and the row-major order is
also the sequence order handed to the recurrent integrator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .cloud import PointCloud


# the neighbourhood radius spans this many Gaussian widths, so a node one
# radius away from the winner receives about 1% of the winner's step
RADIUS_SIGMAS = 3.0


class SomConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SomConfig:
    initial_learning_rate: float = 0.4
    final_learning_rate: float = 0.01
    # grid units; None means half the longer grid side (at least 1)
    initial_neighborhood_radius: float | None = None
    # learning rate and radius reach their floors after this many epochs
    anneal_epochs: int = 20
    epochs_max: int = 100
    convergence_tol: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.initial_learning_rate <= 1:
            raise SomConfigError("som.initial_learning_rate: must lie in (0, 1]")
        if not 0 < self.final_learning_rate <= self.initial_learning_rate:
            raise SomConfigError(
                "som.final_learning_rate: must lie in (0, initial_learning_rate]")
        if self.epochs_max < 1:
            raise SomConfigError("som.epochs_max: must be >= 1")
        if self.anneal_epochs < 1:
            raise SomConfigError("som.anneal_epochs: must be >= 1")
        if not self.convergence_tol > 0:
            raise SomConfigError("som.convergence_tol: must be > 0")
        r = self.initial_neighborhood_radius
        if r is not None and not r > 0:
            raise SomConfigError("som.initial_neighborhood_radius: must be > 0")


@dataclass
class Skeleton:
    node_positions: np.ndarray
    grid_shape: tuple
    node_order: np.ndarray = None
    training_log: list = field(default_factory=list)

    def __post_init__(self):
        pos = np.ascontiguousarray(self.node_positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError(f"node_positions must be M x 3 with M >= 1, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("node positions must be finite")
        self.node_positions = pos
        rows, cols = (int(v) for v in self.grid_shape)
        if rows * cols < self.m:
            raise ValueError(f"grid {rows}x{cols} cannot hold {self.m} nodes")
        self.grid_shape = (rows, cols)
        if self.node_order is None:
            self.node_order = np.arange(self.m)
        order = np.asarray(self.node_order, dtype=np.int64)
        if not np.array_equal(np.sort(order), np.arange(self.m)):
            raise ValueError("node_order must be a permutation of 0..M-1")
        self.node_order = order

    @property
    def m(self) -> int:
        return self.node_positions.shape[0]

    def grid_coords(self):
        j = np.arange(self.m)
        return np.stack(divmod(j, self.grid_shape[1]), axis=1).astype(np.float64)

    def to_dict(self):
        return {
            "m": self.m,
            "grid_shape": list(self.grid_shape),
            "nodes": self.node_positions.tolist(),
            "order": self.node_order.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        sk = cls(node_positions=np.array(d["nodes"], dtype=np.float64),
                 grid_shape=tuple(d["grid_shape"]),
                 node_order=np.array(d["order"], dtype=np.int64))
        if sk.m != d["m"]:
            raise ValueError(f"skeleton declares m={d['m']} but holds {sk.m} nodes")
        return sk

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def grid_shape_for(m):
    """Near-square lattice: ``rows = isqrt(m)``, ``cols`` the smallest fit."""
    if m < 1:
        raise SomConfigError(f"skeleton size must be >= 1, got {m}")
    rows = math.isqrt(m)
    cols = -(-m // rows)
    return rows, cols


def _streams(cfg):
    init_seq, train_seq = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    return init_seq, train_seq


def init_skeleton(cloud: PointCloud, m: int, cfg: SomConfig = SomConfig()) -> Skeleton:
    """Uniform random nodes inside the cloud's per-axis bounding box."""
    shape = grid_shape_for(m)
    rng = np.random.default_rng(_streams(cfg)[0])
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    nodes = lo + rng.random((m, 3)) * (hi - lo)
    return Skeleton(node_positions=nodes, grid_shape=shape)


def quantization_error(cloud: PointCloud, skeleton: Skeleton) -> float:
    """Mean squared distance from each point to its nearest node."""
    d, _ = cKDTree(skeleton.node_positions).query(cloud.positions, k=1)
    return float(np.mean(d * d))


def _schedule(start, end, epoch, epochs):
    if epoch >= epochs:
        return end
    if epochs == 1:
        return start
    return start + (end - start) * epoch / (epochs - 1)


def train_skeleton(cloud: PointCloud, skeleton: Skeleton,
                   cfg: SomConfig = SomConfig()) -> Skeleton:
    """Online Kohonen training with a Gaussian lattice neighbourhood.

    Each epoch visits every point once in a seeded shuffled order.  Learning
    rate and neighbourhood radius decay linearly to their floors over the
    first ``min(anneal_epochs, epochs_max)`` epochs and stay there.  Once
    annealed, training stops when the epoch quantization error changes by
    less than ``convergence_tol`` (relative) or ``epochs_max`` is reached.
    """
    rng = np.random.default_rng(_streams(cfg)[1])
    points = cloud.positions
    nodes = skeleton.node_positions.copy()
    grid = skeleton.grid_coords()
    grid_d2 = ((grid[:, None, :] - grid[None, :, :]) ** 2).sum(axis=2)

    rows, cols = skeleton.grid_shape
    radius0 = cfg.initial_neighborhood_radius
    if radius0 is None:
        radius0 = max(1.0, max(rows, cols) / 2.0)
    radius_end = min(1.0, radius0)
    anneal = min(cfg.anneal_epochs, cfg.epochs_max)

    log = []
    for epoch in range(cfg.epochs_max):
        lr = _schedule(cfg.initial_learning_rate, cfg.final_learning_rate, epoch, anneal)
        sigma = _schedule(radius0, radius_end, epoch, anneal) / RADIUS_SIGMAS
        gain = lr * np.exp(-grid_d2 / (2.0 * sigma * sigma))
        _epoch(points, nodes, gain, rng.permutation(len(points)))

        d, _ = cKDTree(nodes).query(points, k=1)
        log.append(float(np.mean(d * d)))
        if epoch >= anneal and _converged(log[-2], log[-1], cfg.convergence_tol):
            break

    return Skeleton(node_positions=nodes, grid_shape=skeleton.grid_shape,
                    node_order=skeleton.node_order.copy(), training_log=log)


def _converged(prev, cur, tol):
    if prev == 0:
        return cur == 0
    return abs(prev - cur) / prev < tol


@njit(cache=True)
def _epoch(points, nodes, gain, order):
    m = nodes.shape[0]
    for i in order:
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best, w = np.inf, 0
        for j in range(m):
            dx = px - nodes[j, 0]
            dy = py - nodes[j, 1]
            dz = pz - nodes[j, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best, w = d, j
        for j in range(m):
            a = gain[w, j]
            nodes[j, 0] += a * (px - nodes[j, 0])
            nodes[j, 1] += a * (py - nodes[j, 1])
            nodes[j, 2] += a * (pz - nodes[j, 2])


def fit_skeleton(cloud: PointCloud, m: int, cfg: SomConfig = SomConfig()) -> Skeleton:
    return train_skeleton(cloud, init_skeleton(cloud, m, cfg), cfg)
