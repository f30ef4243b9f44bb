"""Aggregation (points -> nodes) and propagation (nodes -> points).

Aggregation functions:

``semi_average``
    sum of the features of the points indexing node ``j``, divided by the
    global average receptive field ``g`` (not by the node's own count), so
    busy nodes weigh more and detached nodes stay silent.
``mean``
    the same sum divided by ``T_j``.
``max``
    channel-wise maximum over the indexing points.

Propagation takes, for every point, the channel-wise ``max`` or ``mean`` over
the nodes in its index row.  Nodes without points aggregate to zero under
every function.  Each operator has an analytic adjoint; forward passes return
a :class:`PoolContext` holding whatever the backward pass needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .index import IndexMatrix

AGGREGATES = ("semi_average", "mean", "max")
PROPAGATES = ("max", "mean")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class PoolChoice:
    aggregate: str = "semi_average"
    propagate: str = "max"

    def __post_init__(self):
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"pool.aggregate: unknown function {self.aggregate!r}")
        if self.propagate not in PROPAGATES:
            raise ValueError(f"pool.propagate: unknown function {self.propagate!r}")


@dataclass
class PoolContext:
    how: str
    channels: int
    # max aggregation: contributing point per (node, channel), -1 for empty nodes
    # max propagation: winning k slot per (point, channel)
    argmax: np.ndarray | None = None


def _check(features, rows, what):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != rows:
        raise ShapeError(f"{what} must have {rows} rows, got shape {x.shape}")
    return x


def _name(how, attr):
    return getattr(how, attr) if isinstance(how, PoolChoice) else how


def aggregate(features, index: IndexMatrix, how="semi_average", return_context=False):
    how = _name(how, "aggregate")
    x = _check(features, index.n, "point features")
    if how in ("semi_average", "mean"):
        sums = index.incidence() @ x
        if how == "semi_average":
            out = sums / index.g
        else:
            out = np.zeros_like(sums)
            live = index.counts > 0
            out[live] = sums[live] / index.counts[live, None]
        ctx = PoolContext(how, x.shape[1])
    elif how == "max":
        out, arg = _segment_max(x, index)
        ctx = PoolContext(how, x.shape[1], arg)
    else:
        raise ValueError(f"unknown aggregation {how!r}")
    return (out, ctx) if return_context else out


def _segment_max(x, index):
    m, c = index.m, x.shape[1]
    out = np.zeros((m, c))
    arg = np.full((m, c), -1, dtype=np.int64)
    live = np.flatnonzero(index.counts > 0)
    if live.size == 0 or c == 0:
        return out, arg
    starts = index.inverse_ptr[live]
    vals = x[index.inverse_idx]
    seg_max = np.maximum.reduceat(vals, starts, axis=0)
    # first slot reaching the max; slots are in ascending point order
    seg_of = np.repeat(np.arange(live.size), index.counts[live])
    slot = np.where(vals == seg_max[seg_of], np.arange(len(vals))[:, None], len(vals))
    first = np.minimum.reduceat(slot, starts, axis=0)
    out[live] = seg_max
    arg[live] = index.inverse_idx[first]
    return out, arg


def aggregate_backward(grad_out, index: IndexMatrix, ctx):
    """Gradient w.r.t. point features given the gradient at the nodes."""
    how = ctx.how if isinstance(ctx, PoolContext) else _name(ctx, "aggregate")
    gy = _check(grad_out, index.m, "node gradient")
    if how == "semi_average":
        return index.incidence().T @ gy / index.g
    if how == "mean":
        scaled = np.zeros_like(gy)
        live = index.counts > 0
        scaled[live] = gy[live] / index.counts[live, None]
        return index.incidence().T @ scaled
    if how == "max":
        if not isinstance(ctx, PoolContext) or ctx.argmax is None:
            raise ValueError("max aggregation backward needs the forward context")
        gx = np.zeros((index.n, gy.shape[1]))
        node, chan = np.nonzero(ctx.argmax >= 0)
        np.add.at(gx, (ctx.argmax[node, chan], chan), gy[node, chan])
        return gx
    raise ValueError(f"unknown aggregation {how!r}")


def propagate(features, index: IndexMatrix, how="max", return_context=False):
    """Unpool node features to points; only N x C buffers are materialized."""
    how = _name(how, "propagate")
    y = _check(features, index.m, "node features")
    table = index.i_table
    if how == "max":
        out = y[table[:, 0]].copy()
        arg = np.zeros(out.shape, dtype=np.int64)
        for k in range(1, index.k_eff):
            cand = y[table[:, k]]
            better = cand > out
            out[better] = cand[better]
            arg[better] = k
        ctx = PoolContext(how, y.shape[1], arg)
    elif how == "mean":
        out = np.zeros((index.n, y.shape[1]))
        for k in range(index.k_eff):
            out += y[table[:, k]]
        out /= index.k_eff
        ctx = PoolContext(how, y.shape[1])
    else:
        raise ValueError(f"unknown propagation {how!r}")
    return (out, ctx) if return_context else out


def propagate_backward(grad_out, index: IndexMatrix, ctx):
    """Gradient w.r.t. node features given the gradient at the points."""
    how = ctx.how if isinstance(ctx, PoolContext) else _name(ctx, "propagate")
    gx = _check(grad_out, index.n, "point gradient")
    if how == "mean":
        return index.incidence() @ gx / index.k_eff
    if how == "max":
        if not isinstance(ctx, PoolContext) or ctx.argmax is None:
            raise ValueError("max propagation backward needs the forward context")
        gy = np.zeros((index.m, gx.shape[1]))
        node = np.take_along_axis(index.i_table, ctx.argmax, axis=1)
        chan = np.broadcast_to(np.arange(gx.shape[1]), gx.shape)
        np.add.at(gy, (node, chan), gx)
        return gy
    raise ValueError(f"unknown propagation {how!r}")
