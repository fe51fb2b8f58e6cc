"""Shared oracles for the test modules."""

import numpy as np

from spdq.encoders import Batch, backward, init_encoder
from spdq.mmd import KernelBank
from spdq.quantizer import QuantModel
from spdq.trainer import class_slices


def toy_problem(seed, n=6, n_classes=3, dims=(5, 4), hidden=(4,), d_s=3, d_p=2, d_z=3):
    """Small encoder, batch and quantizer state for gradient checks."""
    r = np.random.default_rng(seed)
    params = init_encoder({"image": dims[0], "text": dims[1]}, n_classes, hidden=hidden, d_s=d_s, d_p=d_p,
                          seed=seed)
    # non-zero biases so their gradients are exercised too
    for k in params.arrays:
        if k.endswith(".b"):
            params.arrays[k] = 0.3 * r.standard_normal(params.arrays[k].shape)
    labels = np.zeros((n_classes, n))
    labels[np.arange(n) % n_classes, np.arange(n)] = 1
    labels[r.integers(0, n_classes), 0] = 1
    batch = Batch(np.arange(n), r.standard_normal((dims[0], n)), r.standard_normal((dims[1], n)),
                  labels, class_slices(labels))
    q, _ = np.linalg.qr(r.standard_normal((d_s, d_s)))
    quant = QuantModel(q[:d_z], q[-d_z:], r.standard_normal((d_z, n_classes)), np.zeros((d_z, 2)),
                       np.zeros((n, 1), dtype=np.int64), 2)
    bank = KernelBank.uniform((0.5, 1.0, 2.0))
    pbank = KernelBank.uniform((0.25, 1.0, 4.0))
    return params, batch, quant, bank, pbank


def fd_relative_error(params, batch, quant, alpha, lam, bank, pbank, h=1e-6):
    """Relative error between analytic and central-difference parameter gradients."""
    _, grads = backward(params, batch, quant, alpha, lam, bank, pbank)
    analytic, numeric = [], []
    for key, arr in params.arrays.items():
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = backward(params, batch, quant, alpha, lam, bank, pbank)[0].total
            arr[idx] = old - h
            down = backward(params, batch, quant, alpha, lam, bank, pbank)[0].total
            arr[idx] = old
            numeric.append((up - down) / (2 * h))
            analytic.append(grads[key][idx])
    a, n = np.array(analytic), np.array(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(n), 1e-12))


def brute_force_ap(relevance, num_relevant, R, norm="all"):
    """Average precision over the top R written as a plain loop."""
    hits = 0
    total = 0.0
    for r in range(R):
        if relevance[r]:
            hits += 1
            total += hits / (r + 1)
    denom = num_relevant if norm == "all" else min(num_relevant, R)
    return total / denom
