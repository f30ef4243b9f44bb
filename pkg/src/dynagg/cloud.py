"""Point-cloud container, interchange formats and resolution hierarchy.

Coordinates are in meters; grid cell sizes are given in centimeters so that
``grid_downsample(cloud, 5)`` produces the 5 cm level of the hierarchy.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

BINARY_MAGIC = b"DGG1"
_BINARY_HEADER = struct.Struct("<4sQIB")


class CloudFormatError(ValueError):
    """Raised when a cloud file cannot be parsed."""


@dataclass
class PointCloud:
    positions: np.ndarray
    features: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    resolution_tag: Optional[float] = None

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be N x 3, got shape {pos.shape}")
        if pos.shape[0] < 1:
            raise ValueError("a point cloud needs at least one point")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions contain non-finite values")
        self.positions = pos
        n = pos.shape[0]
        if self.features is not None:
            feat = np.ascontiguousarray(self.features, dtype=np.float64)
            if feat.ndim == 1:
                feat = feat[:, None]
            if feat.ndim != 2 or feat.shape[0] != n:
                raise ValueError(f"features must be {n} x C, got shape {feat.shape}")
            if not np.all(np.isfinite(feat)):
                raise ValueError("features contain non-finite values")
            self.features = feat
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (n,):
                raise ValueError(f"expected {n} labels, got shape {lab.shape}")
            if lab.size and (not np.issubdtype(lab.dtype, np.integer)):
                if not np.all(lab == np.round(lab)):
                    raise ValueError("labels must be integers")
            if lab.size and lab.min() < 0:
                raise ValueError("labels must be non-negative")
            self.labels = lab.astype(np.int64)
        if self.resolution_tag is not None and not self.resolution_tag > 0:
            raise ValueError("resolution_tag must be positive")

    def __len__(self):
        return self.positions.shape[0]

    @property
    def n_channels(self) -> int:
        return 0 if self.features is None else self.features.shape[1]


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------


def load_cloud(path, format: str = "csv") -> PointCloud:
    path = Path(path)
    if format == "csv":
        return _read_csv(path.read_text(encoding="utf-8"), str(path))
    if format == "binary":
        return _read_binary(path.read_bytes(), str(path))
    raise ValueError(f"unknown cloud format {format!r}")


def save_cloud(cloud: PointCloud, path, format: str = "csv") -> None:
    path = Path(path)
    if format == "csv":
        path.write_text(_write_csv(cloud), encoding="utf-8")
    elif format == "binary":
        path.write_bytes(_write_binary(cloud))
    else:
        raise ValueError(f"unknown cloud format {format!r}")


def _parse_header(header, where):
    names = [h.strip() for h in header]
    if names[:3] != ["x", "y", "z"]:
        raise CloudFormatError(f"{where}: line 1: header must start with x,y,z")
    rest = names[3:]
    has_labels = bool(rest) and rest[-1] == "label"
    if has_labels:
        rest = rest[:-1]
    for c, name in enumerate(rest):
        if name != f"f{c}":
            raise CloudFormatError(
                f"{where}: line 1: expected column 'f{c}', got {name!r}")
    return len(rest), has_labels


def _read_csv(text, where="<csv>"):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CloudFormatError(f"{where}: empty file") from None
    n_feat, has_labels = _parse_header(header, where)
    width = 3 + n_feat + int(has_labels)

    rows, labels = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != width:
            raise CloudFormatError(
                f"{where}: line {lineno}: expected {width} fields, got {len(row)}")
        try:
            values = [float(v) for v in row[:3 + n_feat]]
        except ValueError as exc:
            raise CloudFormatError(f"{where}: line {lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in values):
            raise CloudFormatError(f"{where}: line {lineno}: non-finite value")
        rows.append(values)
        if has_labels:
            try:
                lab = int(row[-1])
            except ValueError:
                raise CloudFormatError(
                    f"{where}: line {lineno}: bad label {row[-1]!r}") from None
            if lab < 0:
                raise CloudFormatError(f"{where}: line {lineno}: negative label")
            labels.append(lab)
    if not rows:
        raise CloudFormatError(f"{where}: no points")

    data = np.array(rows, dtype=np.float64)
    return PointCloud(
        positions=data[:, :3],
        features=data[:, 3:] if n_feat else None,
        labels=np.array(labels, dtype=np.int64) if has_labels else None,
    )


def _write_csv(cloud):
    cols = ["x", "y", "z"] + [f"f{c}" for c in range(cloud.n_channels)]
    if cloud.labels is not None:
        cols.append("label")
    out = io.StringIO()
    out.write(",".join(cols) + "\n")
    block = cloud.positions
    if cloud.features is not None:
        block = np.hstack([block, cloud.features])
    for i, row in enumerate(block):
        fields = [repr(float(v)) for v in row]
        if cloud.labels is not None:
            fields.append(str(int(cloud.labels[i])))
        out.write(",".join(fields) + "\n")
    return out.getvalue()


def _read_binary(buf, where="<binary>"):
    if len(buf) < _BINARY_HEADER.size:
        raise CloudFormatError(f"{where}: offset 0: truncated header")
    magic, n, c, has_labels = _BINARY_HEADER.unpack_from(buf, 0)
    if magic != BINARY_MAGIC:
        raise CloudFormatError(f"{where}: offset 0: bad magic {magic!r}")
    if n < 1:
        raise CloudFormatError(f"{where}: offset 4: no points")
    if has_labels not in (0, 1):
        raise CloudFormatError(f"{where}: offset 16: bad has_labels flag")
    offset = _BINARY_HEADER.size
    n_values = n * (3 + c)
    expected = offset + 8 * n_values + (4 * n if has_labels else 0)
    if len(buf) != expected:
        raise CloudFormatError(
            f"{where}: offset {len(buf)}: expected {expected} bytes, got {len(buf)}")
    data = np.frombuffer(buf, dtype="<f8", count=n_values, offset=offset)
    data = data.reshape(n, 3 + c).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(data).all(axis=1))
    if bad.size:
        row = int(bad[0])
        raise CloudFormatError(
            f"{where}: offset {offset + 8 * (3 + c) * row}: non-finite value in row {row}")
    labels = None
    if has_labels:
        labels = np.frombuffer(buf, dtype="<u4", count=n,
                               offset=offset + 8 * n_values).astype(np.int64)
    return PointCloud(positions=data[:, :3],
                      features=data[:, 3:] if c else None,
                      labels=labels)


def _write_binary(cloud):
    n, c = len(cloud), cloud.n_channels
    has_labels = cloud.labels is not None
    parts = [_BINARY_HEADER.pack(BINARY_MAGIC, n, c, int(has_labels))]
    block = cloud.positions
    if c:
        block = np.hstack([block, cloud.features])
    parts.append(np.ascontiguousarray(block, dtype="<f8").tobytes())
    if has_labels:
        parts.append(cloud.labels.astype("<u4").tobytes())
    return b"".join(parts)


# --------------------------------------------------------------------------
# normalization
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitCubeTransform:
    """Per-axis min-max record; ``scale == 0`` marks a degenerate axis."""

    offset: np.ndarray
    scale: np.ndarray

    def apply(self, positions):
        positions = np.asarray(positions, dtype=np.float64)
        out = np.full(positions.shape, 0.5)
        live = self.scale > 0
        out[..., live] = (positions[..., live] - self.offset[live]) / self.scale[live]
        return out

    def invert(self, positions):
        positions = np.asarray(positions, dtype=np.float64)
        out = positions * self.scale + self.offset
        # degenerate axes collapse to the stored offset
        out[..., self.scale == 0] = self.offset[self.scale == 0]
        return out


def normalize_unit_cube(cloud: PointCloud):
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    tf = UnitCubeTransform(offset=lo, scale=hi - lo)
    return replace(cloud, positions=tf.apply(cloud.positions)), tf


def invert_unit_cube(cloud: PointCloud, transform: UnitCubeTransform) -> PointCloud:
    return replace(cloud, positions=transform.invert(cloud.positions))


# --------------------------------------------------------------------------
# resolution hierarchy
# --------------------------------------------------------------------------


def voxel_keys(positions, cell_cm):
    """Integer voxel coordinates of each point for a cell of ``cell_cm`` cm."""
    return np.floor(np.asarray(positions) / (cell_cm / 100.0)).astype(np.int64)


def grid_downsample(cloud: PointCloud, cell: float) -> PointCloud:
    """One point per occupied voxel: centroid, mean features, majority label.

    Output points are ordered by voxel key (lexicographic in x, y, z).
    """
    if not cell > 0:
        raise ValueError("cell size must be positive")
    keys = voxel_keys(cloud.positions, cell)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                   return_counts=True)
    inverse = inverse.ravel()
    n_out = counts.size

    def _mean(block):
        acc = np.zeros((n_out, block.shape[1]))
        np.add.at(acc, inverse, block)
        return acc / counts[:, None]

    positions = _mean(cloud.positions)
    features = None if cloud.features is None else _mean(cloud.features)
    labels = None
    if cloud.labels is not None:
        classes, lab_idx = np.unique(cloud.labels, return_inverse=True)
        votes = np.zeros((n_out, classes.size), dtype=np.int64)
        np.add.at(votes, (inverse, lab_idx.ravel()), 1)
        # argmax picks the first maximum, i.e. the smallest class id
        labels = classes[votes.argmax(axis=1)]
    return PointCloud(positions=positions, features=features, labels=labels,
                      resolution_tag=float(cell))


def nearest_neighbor_extrapolate(coarse: PointCloud, fine: PointCloud) -> np.ndarray:
    """Label every fine point with the label of its nearest coarse point.

    Distance ties go to the lowest coarse index.
    """
    if coarse.labels is None:
        raise ValueError("coarse cloud carries no labels")
    nearest = nearest_indices(coarse.positions, fine.positions, k=1)[:, 0]
    return coarse.labels[nearest].copy()


def nearest_indices(targets, queries, k):
    """Indices of the ``k`` nearest targets for each query point.

    Rows are sorted by squared Euclidean distance with ties broken by the
    lower target index.  A kd-tree proposes candidates; rows whose tie group
    may extend past the candidate window are resolved exhaustively.
    """
    targets = np.asarray(targets, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    m = targets.shape[0]
    if m == 0:
        raise ValueError("no target points to search")
    if not 1 <= k <= m:
        raise ValueError(f"k must be in [1, {m}], got {k}")

    window = min(m, k + 2)
    tree = cKDTree(targets)
    _, cand = tree.query(queries, k=window)
    cand = np.asarray(cand).reshape(len(queries), window)

    d2 = _sq_dist(queries[:, None, :], targets[cand])
    order = np.lexsort((cand, d2))
    cand = np.take_along_axis(cand, order, axis=1)
    d2 = np.take_along_axis(d2, order, axis=1)

    result = cand[:, :k].copy()
    if window < m:
        # k-th distance (nearly) touching the last candidate: possible unseen ties
        unsure = np.flatnonzero(d2[:, k - 1] >= d2[:, -1] * (1 - 1e-9))
        for i in unsure:
            result[i] = _exhaustive_row(targets, queries[i], k)
    return result


def _sq_dist(a, b):
    diff = a - b
    return diff[..., 0] ** 2 + diff[..., 1] ** 2 + diff[..., 2] ** 2


def _exhaustive_row(targets, q, k):
    d2 = _sq_dist(q[None, :], targets)
    order = np.lexsort((np.arange(targets.shape[0]), d2))
    return order[:k]
