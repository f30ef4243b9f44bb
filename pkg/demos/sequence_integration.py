"""
Node features as one padded sequence
====================================

Scenes have different node counts, so their node features are padded with
zero rows to a common length before a single-direction GRU reads them in
the skeleton's grid order.
"""

import numpy as np

from dynagg.integrate import GruParams, gru_backward, gru_forward, pad_batch

rng = np.random.default_rng(2)
scenes = [rng.normal(size=(m, 6)) for m in (40, 57, 64)]
batch = pad_batch(scenes, length=64)
params = GruParams.random(6, hidden_dim=32, output_dim=16, seed=0)

for seq in batch:
    out = gru_forward(seq, params)
    print(f"valid {seq.valid_len:>2} of {seq.length}: output {out.shape}")

# extra padding changes nothing
seq = batch[0]
longer = pad_batch([scenes[0]], length=256)[0]
print("padding is a no-op:",
      np.array_equal(gru_forward(seq, params), gru_forward(longer, params)))

# step t never sees steps after t
x = scenes[1].copy()
x[30:] += 1.0
a = gru_forward(batch[1], params)
b = gru_forward(pad_batch([x], length=64)[0], params)
print("outputs before the change are untouched:", np.array_equal(a[:30], b[:30]))

# backpropagation through time
y, cache = gru_forward(batch[2], params, return_cache=True)
dx, grads = gru_backward(np.ones_like(y), params, cache)
print("input gradient norm:", round(float(np.linalg.norm(dx)), 4))
print("update-gate weight gradient norm:", round(float(np.linalg.norm(grads.W_z)), 4))
