"""Single-direction, single-layer GRU over the node sequence.

Node features are serialized in skeleton order and zero-padded to a common
length; the recurrence runs over the whole padded buffer from a zero state
and only the first ``valid_len`` outputs are kept.

Cell (``x`` input, ``h`` previous state)::

    z  = sigmoid(W_z x + U_z h + b_z)
    r  = sigmoid(W_r x + U_r h + b_r)
    n  = tanh(W_n x + U_n (r * h) + b_n)
    h' = (1 - z) * h + z * n
    y  = W_o h' + b_o
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .pool import ShapeError

DEFAULT_HIDDEN = 256
DEFAULT_OUTPUT = 128


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@dataclass
class GruParams:
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_n: np.ndarray
    U_n: np.ndarray
    b_n: np.ndarray
    W_o: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, np.asarray(getattr(self, f.name), dtype=np.float64))
        h, c_in = self.W_z.shape
        c_out = self.W_o.shape[0]
        expected = {"W": (h, c_in), "U": (h, h), "b": (h,)}
        for gate in "zrn":
            for kind, shape in expected.items():
                arr = getattr(self, f"{kind}_{gate}")
                if arr.shape != shape:
                    raise ShapeError(f"{kind}_{gate}: expected {shape}, got {arr.shape}")
        if self.W_o.shape != (c_out, h) or self.b_o.shape != (c_out,):
            raise ShapeError("output projection shapes do not match hidden size")
        for f in fields(self):
            if not np.all(np.isfinite(getattr(self, f.name))):
                raise ValueError(f"{f.name}: non-finite parameters")

    @property
    def input_dim(self):
        return self.W_z.shape[1]

    @property
    def hidden_dim(self):
        return self.W_z.shape[0]

    @property
    def output_dim(self):
        return self.W_o.shape[0]

    @classmethod
    def zeros(cls, input_dim, hidden_dim=32, output_dim=16):
        return cls(**_shapes_to_arrays(input_dim, hidden_dim, output_dim, np.zeros))

    @classmethod
    def random(cls, input_dim, hidden_dim=32, output_dim=16, seed=0, scale=None):
        """Uniform(-s, s) init with ``s = 1 / sqrt(hidden_dim)`` by default."""
        rng = np.random.default_rng(seed)
        s = 1.0 / np.sqrt(hidden_dim) if scale is None else scale
        return cls(**_shapes_to_arrays(
            input_dim, hidden_dim, output_dim,
            lambda shape: rng.uniform(-s, s, size=shape)))

    def tensors(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def save(self, path):
        """Write ``<path>.bin`` (little-endian float64) and ``<path>.json``."""
        path = Path(path)
        manifest, chunks, offset = [], [], 0
        for name, arr in self.tensors().items():
            manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
            chunks.append(arr.astype("<f8").tobytes())
            offset += arr.size
        path.with_suffix(".bin").write_bytes(b"".join(chunks))
        path.with_suffix(".json").write_text(json.dumps(
            {"dtype": "float64", "byteorder": "little", "tensors": manifest},
            indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        path = Path(path)
        manifest = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
        arrays = {}
        for t in manifest["tensors"]:
            size = int(np.prod(t["shape"], dtype=np.int64))
            arrays[t["name"]] = flat[t["offset"]:t["offset"] + size].reshape(t["shape"]).copy()
        return cls(**arrays)


def _shapes_to_arrays(c_in, h, c_out, make):
    out = {}
    for gate in "zrn":
        out[f"W_{gate}"] = make((h, c_in))
        out[f"U_{gate}"] = make((h, h))
        out[f"b_{gate}"] = make((h,))
    out["W_o"] = make((c_out, h))
    out["b_o"] = make((c_out,))
    return out


@dataclass
class PaddedSequence:
    values: np.ndarray
    valid_len: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"sequence must be L x C, got shape {v.shape}")
        if not 0 <= self.valid_len <= v.shape[0]:
            raise ValueError(f"valid_len {self.valid_len} outside [0, {v.shape[0]}]")
        if np.any(v[self.valid_len:] != 0):
            raise ValueError("pad rows must be zero")
        self.values = v

    @property
    def length(self):
        return self.values.shape[0]


def pad_sequence(features, length=None) -> PaddedSequence:
    x = np.asarray(features, dtype=np.float64)
    m = x.shape[0]
    length = m if length is None else length
    if length < m:
        raise ValueError(f"cannot pad {m} rows into length {length}")
    buf = np.zeros((length, x.shape[1]))
    buf[:m] = x
    return PaddedSequence(buf, m)


def pad_batch(sequences, length=None):
    """Pad every scene's node features to the longest one (or ``length``)."""
    longest = max(len(s) for s in sequences)
    length = longest if length is None else max(length, longest)
    return [pad_sequence(s, length) for s in sequences]


@dataclass
class GruCache:
    x: np.ndarray
    h: np.ndarray  # states h_0 .. h_L, h[0] is the zero initial state
    z: np.ndarray
    r: np.ndarray
    n: np.ndarray
    valid_len: int


def gru_forward(seq: PaddedSequence, params: GruParams, return_cache=False):
    x = seq.values
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"sequence has {x.shape[1]} channels, "
                         f"parameters expect {params.input_dim}")
    steps, hdim = x.shape[0], params.hidden_dim
    h = np.zeros((steps + 1, hdim))
    z = np.empty((steps, hdim))
    r = np.empty((steps, hdim))
    n = np.empty((steps, hdim))
    # per-step products keep each output independent of the padded length
    for t in range(steps):
        hp, xt = h[t], x[t]
        z[t] = sigmoid(params.W_z @ xt + params.U_z @ hp + params.b_z)
        r[t] = sigmoid(params.W_r @ xt + params.U_r @ hp + params.b_r)
        n[t] = np.tanh(params.W_n @ xt + params.U_n @ (r[t] * hp) + params.b_n)
        h[t + 1] = (1.0 - z[t]) * hp + z[t] * n[t]
    y = np.array([params.W_o @ h[t + 1] + params.b_o for t in range(seq.valid_len)])
    y = y.reshape(seq.valid_len, params.output_dim)
    if return_cache:
        return y, GruCache(x, h, z, r, n, seq.valid_len)
    return y


def gru_backward(grad_out, params: GruParams, cache: GruCache):
    """Backpropagation through time over the valid steps.

    Returns ``(grad_seq, grad_params)``; ``grad_seq`` has the padded length
    with zero rows for the pad steps, and ``grad_params`` is a
    :class:`GruParams` holding the parameter gradients.
    """
    v = cache.valid_len
    dy = np.asarray(grad_out, dtype=np.float64)
    if dy.shape != (v, params.output_dim):
        raise ShapeError(f"grad_out must be {(v, params.output_dim)}, got {dy.shape}")
    g = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
    dx = np.zeros_like(cache.x)
    h, z, r, n, x = cache.h, cache.z, cache.r, cache.n, cache.x

    g["W_o"] += dy.T @ h[1:v + 1]
    g["b_o"] += dy.sum(axis=0)
    dh_states = dy @ params.W_o

    dh_next = np.zeros(params.hidden_dim)
    for t in range(v - 1, -1, -1):
        hp = h[t]
        dh = dh_states[t] + dh_next
        dz = dh * (n[t] - hp)
        dn = dh * z[t]
        dhp = dh * (1.0 - z[t])

        da_n = dn * (1.0 - n[t] ** 2)
        g["W_n"] += np.outer(da_n, x[t])
        g["U_n"] += np.outer(da_n, r[t] * hp)
        g["b_n"] += da_n
        drh = params.U_n.T @ da_n
        dr = drh * hp
        dhp += drh * r[t]

        da_r = dr * r[t] * (1.0 - r[t])
        g["W_r"] += np.outer(da_r, x[t])
        g["U_r"] += np.outer(da_r, hp)
        g["b_r"] += da_r

        da_z = dz * z[t] * (1.0 - z[t])
        g["W_z"] += np.outer(da_z, x[t])
        g["U_z"] += np.outer(da_z, hp)
        g["b_z"] += da_z

        dhp += params.U_r.T @ da_r + params.U_z.T @ da_z
        dx[t] = params.W_z.T @ da_z + params.W_r.T @ da_r + params.W_n.T @ da_n
        dh_next = dhp

    return dx, GruParams(**g)


def integrate(node_features, params: GruParams, length=None):
    """Pad one scene's node features, run the GRU, return its M outputs."""
    return gru_forward(pad_sequence(node_features, length), params)
