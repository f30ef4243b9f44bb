"""Random instance builders shared by the unit tests and the acceptance gate."""

import numpy as np

from dynagg.index import IndexMatrix
from dynagg.integrate import GruParams, gru_backward, gru_forward, pad_sequence
from dynagg.pool import aggregate, aggregate_backward, propagate, propagate_backward

from oracles import central_diff, rel_error

# one "PASS"/"FAIL" line per acceptance criterion, echoed in the terminal summary
CRITERIA = []


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    CRITERIA.append(line)
    print(line, flush=True)
    return ok


def random_index(rng, n, m, k):
    """Random rows of distinct node ids (no geometry needed for pooling)."""
    k_eff = min(k, m)
    table = np.array([rng.choice(m, size=k_eff, replace=False) for _ in range(n)])
    return IndexMatrix(table.reshape(n, k_eff), m=m, k=k)


def aggregate_grad_error(seed, how):
    rng = np.random.default_rng(seed)
    n, m, k, c = rng.integers(5, 25), rng.integers(2, 8), rng.integers(1, 4), rng.integers(1, 4)
    idx = random_index(rng, n, m, k)
    # distinct well-separated values keep max away from ties
    x = rng.permutation(n * c).reshape(n, c) * 0.1 + rng.uniform(0, 0.01, (n, c))
    w = rng.normal(size=(m, c))
    _, ctx = aggregate(x, idx, how, return_context=True)
    analytic = aggregate_backward(w, idx, ctx)
    numeric = central_diff(lambda v: np.sum(aggregate(v, idx, how) * w), x)
    return rel_error(analytic, numeric)


def propagate_grad_error(seed, how):
    rng = np.random.default_rng(seed)
    n, m, k, c = rng.integers(5, 25), rng.integers(2, 8), rng.integers(1, 4), rng.integers(1, 4)
    idx = random_index(rng, n, m, k)
    y = rng.permutation(m * c).reshape(m, c) * 0.1 + rng.uniform(0, 0.01, (m, c))
    w = rng.normal(size=(n, c))
    _, ctx = propagate(y, idx, how, return_context=True)
    analytic = propagate_backward(w, idx, ctx)
    numeric = central_diff(lambda v: np.sum(propagate(v, idx, how) * w), y)
    return rel_error(analytic, numeric)


def gru_grad_errors(seed):
    """Worst relative error of every analytic gradient against central differences."""
    rng = np.random.default_rng(seed)
    c_in, h, c_out = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 3)
    m = int(rng.integers(1, 6))
    p = GruParams.random(c_in, h, c_out, seed=seed, scale=0.9)
    x = rng.normal(size=(m, c_in))
    length = m + int(rng.integers(0, 3))
    w = rng.normal(size=(m, c_out))

    _, cache = gru_forward(pad_sequence(x, length), p, return_cache=True)
    dx, gp = gru_backward(w, p, cache)

    errors = {"x": rel_error(dx[:m], central_diff(
        lambda v: np.sum(gru_forward(pad_sequence(v, length), p) * w), x))}
    tensors = p.tensors()
    for name, value in tensors.items():
        def loss(v, name=name):
            q = GruParams(**{**tensors, name: v})
            return np.sum(gru_forward(pad_sequence(x, length), q) * w)
        errors[name] = rel_error(getattr(gp, name), central_diff(loss, value))
    return errors
