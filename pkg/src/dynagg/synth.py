"""Deterministic synthetic rooms: large uniform surfaces plus compact objects.

Every point carries three color-like feature channels (a per-class base color
plus Gaussian noise, clipped to [0, 1]) and a class label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud

FLOOR, CEILING, WALL = 0, 1, 2
OBJECT_LABELS = (3, 4, 5, 6)


@dataclass(frozen=True)
class ClusterSpec:
    n_points: int
    radius: float
    label: int = 3
    shape: str = "sphere"
    # None places the object on the floor at a seeded position
    center: tuple | None = None

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("cluster n_points must be >= 1")
        if self.radius < 0:
            raise ValueError("cluster radius must be >= 0")
        if self.shape not in ("sphere", "box"):
            raise ValueError(f"unknown cluster shape {self.shape!r}")


@dataclass(frozen=True)
class SceneSpec:
    extents: tuple = (6.0, 5.0, 3.0)
    floor_points: int = 2000
    ceiling_points: int = 2000
    wall_points: int = 3000
    clusters: tuple = ()
    color_noise: float = 0.15
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.extents) != 3 or min(self.extents) <= 0:
            raise ValueError("extents must be three positive lengths")
        for name in ("floor_points", "ceiling_points", "wall_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        object.__setattr__(self, "clusters", tuple(
            c if isinstance(c, ClusterSpec) else ClusterSpec(**c)
            for c in self.clusters))

    @property
    def total_points(self):
        return (self.floor_points + self.ceiling_points + self.wall_points
                + sum(c.n_points for c in self.clusters))

    def class_histogram(self):
        hist = {FLOOR: self.floor_points, CEILING: self.ceiling_points,
                WALL: self.wall_points}
        for c in self.clusters:
            hist[c.label] = hist.get(c.label, 0) + c.n_points
        return hist


def base_color(label):
    """Fixed per-class color; distinct for the first few classes."""
    phase = (label * 0.618033988749895) % 1.0
    return 0.5 + 0.4 * np.cos(2 * np.pi * (phase + np.array([0.0, 1 / 3, 2 / 3])))


@dataclass
class Scene:
    cloud: PointCloud
    centers: np.ndarray
    radii: np.ndarray
    cluster_labels: np.ndarray = field(default=None)


def _plane_points(rng, spec):
    ex, ey, ez = spec.extents
    floor = np.column_stack([rng.random(spec.floor_points) * ex,
                             rng.random(spec.floor_points) * ey,
                             np.zeros(spec.floor_points)])
    ceil = np.column_stack([rng.random(spec.ceiling_points) * ex,
                            rng.random(spec.ceiling_points) * ey,
                            np.full(spec.ceiling_points, ez)])
    # walls share points by perimeter length; pick a wall, then a spot on it
    perim = np.array([ex, ey, ex, ey])
    wall_id = rng.choice(4, size=spec.wall_points, p=perim / perim.sum())
    t = rng.random(spec.wall_points)
    h = rng.random(spec.wall_points) * ez
    sides = [wall_id == w for w in range(4)]
    walls = np.column_stack([np.select(sides, [t * ex, ex, t * ex, 0.0]),
                             np.select(sides, [0.0, t * ey, ey, t * ey]),
                             h])
    return floor, ceil, walls


def _place_centers(rng, spec):
    ex, ey, ez = spec.extents
    centers = []
    for c in spec.clusters:
        if c.center is not None:
            centers.append(np.asarray(c.center, dtype=np.float64))
            continue
        r = c.radius
        best = None
        for _ in range(200):
            cand = np.array([r + rng.random() * max(ex - 2 * r, 0.0),
                             r + rng.random() * max(ey - 2 * r, 0.0),
                             min(r, ez / 2)])
            gap = min((np.linalg.norm(cand[:2] - o[:2]) for o in centers),
                      default=np.inf)
            if best is None or gap > best[0]:
                best = (gap, cand)
            if gap > 2.5 * max(r, 0.1):
                break
        centers.append(best[1])
    return np.array(centers).reshape(-1, 3)


def _cluster_points(rng, c, center):
    n = c.n_points
    if c.shape == "box":
        offs = (rng.random((n, 3)) * 2 - 1) * c.radius
    else:
        d = rng.normal(size=(n, 3))
        d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
        offs = d * (c.radius * rng.random((n, 1)) ** (1 / 3))
    return center + offs


def generate_scene(spec: SceneSpec) -> Scene:
    rng = np.random.default_rng(spec.rng_seed)
    floor, ceil, walls = _plane_points(rng, spec)
    centers = _place_centers(rng, spec)

    blocks = [floor, ceil, walls]
    labels = [np.full(len(floor), FLOOR), np.full(len(ceil), CEILING),
              np.full(len(walls), WALL)]
    for c, ctr in zip(spec.clusters, centers):
        blocks.append(_cluster_points(rng, c, ctr))
        labels.append(np.full(c.n_points, c.label))
    positions = np.vstack(blocks)
    labels = np.concatenate(labels).astype(np.int64)

    colors = np.array([base_color(lab) for lab in range(labels.max() + 1)])[labels]
    colors = np.clip(colors + rng.normal(scale=spec.color_noise, size=colors.shape), 0, 1)

    cloud = PointCloud(positions=positions, features=colors, labels=labels)
    return Scene(cloud=cloud, centers=centers,
                 radii=np.array([c.radius for c in spec.clusters]),
                 cluster_labels=np.array([c.label for c in spec.clusters], dtype=np.int64))


def generate(spec: SceneSpec) -> PointCloud:
    return generate_scene(spec).cloud


def random_scene_spec(seed, n_clusters=None, plane_points=6000,
                      radius_range=(0.2, 0.4), extents=None):
    """Room with ``n_clusters`` objects, each holding at least N/(4D) points."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE4E]))
    if n_clusters is None:
        n_clusters = int(rng.integers(3, 9))
    if extents is None:
        extents = (float(rng.uniform(4, 8)), float(rng.uniform(4, 7)), 3.0)
    floor = plane_points * 3 // 10
    ceiling = plane_points * 3 // 10
    walls = plane_points - floor - ceiling
    # n_c >= N / (4D)  <=>  n_c >= planes / (3D)
    n_c = -(-plane_points // (3 * n_clusters)) + 1
    clusters = tuple(
        ClusterSpec(n_points=n_c,
                    radius=float(rng.uniform(*radius_range)),
                    label=OBJECT_LABELS[i % len(OBJECT_LABELS)],
                    shape="sphere" if i % 2 == 0 else "box")
        for i in range(n_clusters))
    return SceneSpec(extents=extents, floor_points=floor, ceiling_points=ceiling,
                     wall_points=walls, clusters=clusters, rng_seed=seed)
