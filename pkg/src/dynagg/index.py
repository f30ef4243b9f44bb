"""Point-to-node index matrix and its inverse lists.

Each point links to its ``K_eff = min(K, M)`` nearest skeleton nodes.  The
per-node inverse lists (which points index node ``j``) are stored in CSR form,
sorted by point index, and drive both aggregation and its adjoint.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .cloud import PointCloud, nearest_indices

INDEX_MAGIC = b"DGGI"
_HEADER = struct.Struct("<4sQII")


class IndexFormatError(ValueError):
    pass


@dataclass
class IndexMatrix:
    i_table: np.ndarray
    m: int
    k: int = None
    counts: np.ndarray = field(init=False, repr=False)
    inverse_ptr: np.ndarray = field(init=False, repr=False)
    inverse_idx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        table = np.ascontiguousarray(self.i_table, dtype=np.int64)
        if table.ndim != 2 or table.shape[1] < 1:
            raise ValueError(f"i_table must be N x K_eff, got shape {table.shape}")
        if table.size and (table.min() < 0 or table.max() >= self.m):
            raise ValueError(f"i_table entries must lie in [0, {self.m})")
        self.i_table = table
        if self.k is None:
            self.k = table.shape[1]

        n, k_eff = table.shape
        flat = table.ravel()
        # stable sort keeps point indices ascending inside each node's list
        order = np.argsort(flat, kind="stable")
        self.counts = np.bincount(flat, minlength=self.m)
        self.inverse_ptr = np.concatenate([[0], np.cumsum(self.counts)])
        self.inverse_idx = order // k_eff

    @property
    def n(self) -> int:
        return self.i_table.shape[0]

    @property
    def k_eff(self) -> int:
        return self.i_table.shape[1]

    @property
    def g(self) -> float:
        """Average receptive field, ``sum_j T_j / M``."""
        return self.n * self.k_eff / self.m

    @property
    def inverse(self):
        return [self.inverse_idx[self.inverse_ptr[j]:self.inverse_ptr[j + 1]]
                for j in range(self.m)]

    def incidence(self):
        """Sparse M x N 0/1 matrix with a one where point i indexes node j."""
        data = np.ones(self.inverse_idx.size)
        return sp.csr_matrix((data, self.inverse_idx, self.inverse_ptr),
                             shape=(self.m, self.n))

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(INDEX_MAGIC, self.n, self.m, self.k_eff)
        return head + self.i_table.astype("<u4").tobytes()

    @classmethod
    def from_bytes(cls, buf, where="<index>"):
        if len(buf) < _HEADER.size:
            raise IndexFormatError(f"{where}: offset 0: truncated header")
        magic, n, m, k_eff = _HEADER.unpack_from(buf, 0)
        if magic != INDEX_MAGIC:
            raise IndexFormatError(f"{where}: offset 0: bad magic {magic!r}")
        expected = _HEADER.size + 4 * n * k_eff
        if len(buf) != expected:
            raise IndexFormatError(
                f"{where}: offset {len(buf)}: expected {expected} bytes")
        table = np.frombuffer(buf, dtype="<u4", offset=_HEADER.size).reshape(n, k_eff)
        return cls(i_table=table.astype(np.int64), m=m)

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes(), str(path))


def _as_positions(obj):
    if isinstance(obj, PointCloud):
        return obj.positions
    if hasattr(obj, "node_positions"):
        return obj.node_positions
    return np.asarray(obj, dtype=np.float64)


def build_index(cloud, skeleton, k: int, method: str = "tree") -> IndexMatrix:
    """Link every point to its nearest nodes.

    Rows are sorted by distance, ties going to the lower node index.
    ``method="exhaustive"`` scans all nodes per point and is meant as a
    reference for the kd-tree path.
    """
    if k < 1:
        raise ValueError(f"index.k: must be >= 1, got {k}")
    points = _as_positions(cloud)
    nodes = _as_positions(skeleton)
    m = nodes.shape[0]
    k_eff = min(k, m)
    if method == "tree":
        table = nearest_indices(nodes, points, k_eff)
    elif method == "exhaustive":
        table = np.empty((len(points), k_eff), dtype=np.int64)
        node_ids = np.arange(m)
        for i, p in enumerate(points):
            diff = nodes - p
            d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
            table[i] = np.lexsort((node_ids, d2))[:k_eff]
    else:
        raise ValueError(f"unknown search method {method!r}")
    return IndexMatrix(i_table=table, m=m, k=k)


def empty_nodes(index: IndexMatrix) -> np.ndarray:
    """Nodes that no point links to (``T_j == 0``)."""
    return np.flatnonzero(index.counts == 0)


def density_stats(index: IndexMatrix) -> dict:
    counts = index.counts
    return {
        "n": index.n,
        "m": index.m,
        "k_eff": index.k_eff,
        "g": index.g,
        "counts": counts.tolist(),
        "empty_nodes": empty_nodes(index).tolist(),
        "t_min": int(counts.min()),
        "t_max": int(counts.max()),
    }
