# %% [markdown]
# # Two-branch networks and their hand-written gradients
#
# Each modality has a tanh MLP whose last hidden layer feeds two heads: a
# shared representation ``s`` meant to be modality invariant and a private
# representation ``r`` meant to hold what is specific to the modality. A
# per-branch classifier reads ``[s; r]``. Everything is plain numpy, so this
# script checks the backward pass against finite differences.

# %%
from types import SimpleNamespace

import numpy as np

from spdq.data import generate_synthetic
from spdq.encoders import Batch, backward, forward, init_encoder
from spdq.mmd import median_heuristic_bank
from spdq.trainer import class_slices

ds = generate_synthetic(3, 12, dims=(8, 6), seed=0, latent_dim=4)
params = init_encoder({"image": 8, "text": 6}, 3, hidden=(7,), d_s=4, d_p=2, seed=0)
out = forward(params, ds.xi, "image")
print("s:", out.s.shape, " r:", out.r.shape, " logits:", out.logits.shape)

# %% [markdown]
# The batch loss is ``L1 + alpha * L2 + lam * alignment``: MMD terms, sigmoid
# cross-entropy, and the pull of ``C s`` towards the label anchors ``Z l``.

# %%
batch = Batch(np.arange(12), ds.xi, ds.xt, ds.labels, class_slices(ds.labels))
bank = median_heuristic_bank(np.hstack([out.s, forward(params, ds.xt, "text").s]))
rng = np.random.default_rng(1)
# only C_i, C_t and Z are read by the backward pass
Anchors = SimpleNamespace(
    C_i=np.linalg.qr(rng.standard_normal((4, 4)))[0],
    C_t=np.linalg.qr(rng.standard_normal((4, 4)))[0],
    Z=rng.standard_normal((4, 3)),
)

losses, grads = backward(params, batch, Anchors, alpha=1.0, lam=0.1, bank=bank)
print(f"L1={losses.l1:.4f}  L2={losses.l2:.4f}  alignment={losses.o_q:.4f}")

# %% [markdown]
# Central differences on a handful of weights:

# %%
h = 1e-6
for key, idx in [("image/h0.W", (0, 0)), ("text/shared.W", (1, 2)), ("image/cls.b", (2,))]:
    arr = params.arrays[key]
    old = arr[idx]
    arr[idx] = old + h
    up = backward(params, batch, Anchors, 1.0, 0.1, bank)[0].total
    arr[idx] = old - h
    down = backward(params, batch, Anchors, 1.0, 0.1, bank)[0].total
    arr[idx] = old
    print(f"{key}{idx}: analytic {grads[key][idx]:+.8f}  numeric {(up - down) / (2 * h):+.8f}")
