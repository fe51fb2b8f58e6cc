"""Alternating optimisation: momentum SGD on both networks, then the quantizer updates.

One outer iteration runs ``epochs_per_outer`` epochs of mini-batch steps with
the quantizer frozen, recomputes the shared representations of the whole
training set, and applies the ``C_i``, ``C_t``, ``Z``, ``D`` and code updates
once each.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import EncoderConfig, Hyperparams, KernelConfig
from .data import Dataset
from .encoders import (
    Batch,
    EncoderParams,
    backward,
    class_loss,
    forward,
    init_encoder,
    l1_loss,
)
from .errors import NumericalError
from .mmd import KernelBank, median_heuristic_bank
from .quantizer import QuantModel, init_quant_model, quant_objective, quantizer_step

log = logging.getLogger(__name__)


@dataclass
class TrainState:
    params: EncoderParams
    velocity: dict[str, np.ndarray]
    quant: QuantModel
    bank: KernelBank
    private_bank: KernelBank
    # independent streams so e.g. changing M does not reshuffle the batches
    batch_rng: np.random.Generator
    quant_rng: np.random.Generator
    step: int = 0
    outer: int = 0
    history: list[dict] = field(default_factory=list)
    skipped_classes: int = 0


def primary_class(labels) -> np.ndarray:
    """Lowest-index label of each column, used to group points into batches."""
    return np.argmax(np.asarray(labels) > 0, axis=0)


def class_slices(labels) -> dict[int, np.ndarray]:
    """Positions of every class within a label block, truncated to even length.

    A multi-label column appears in the slice of each of its classes. Classes
    with fewer than two positions are left out.
    """
    labels = np.asarray(labels)
    out = {}
    for k in range(labels.shape[0]):
        idx = np.flatnonzero(labels[k] > 0)
        idx = idx[: len(idx) - len(idx) % 2]
        if len(idx) >= 2:
            out[k] = idx
    return out


def make_batch(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> Batch:
    """Class-grouped mini-batch of aligned image/text pairs.

    Pair slots are shared between classes in proportion to class size (by
    largest remainder), each class receiving an even number of points. Classes
    with a single member get no quota; leftover slots are filled with random
    unused points so those still reach the classification and alignment terms.
    """
    if batch_size < 2 or batch_size % 2:
        raise ValueError(f"batch_size must be even and >= 2, got {batch_size}")
    n = dataset.n
    if n == 0:
        raise ValueError("empty dataset")
    size = min(batch_size, n - n % 2) if n >= 2 else n
    primary = primary_class(dataset.labels)
    groups = [np.flatnonzero(primary == k) for k in range(dataset.n_classes)]
    cap = np.array([len(g) // 2 for g in groups])
    pairs = size // 2
    quota = np.zeros(len(groups), dtype=int)
    if cap.sum() > 0:
        want = pairs * cap / cap.sum()
        quota = np.minimum(np.floor(want).astype(int), cap)
        for k in np.argsort(-(want - quota), kind="stable"):
            if quota.sum() >= pairs:
                break
            if quota[k] < cap[k]:
                quota[k] += 1
    chosen = [rng.choice(g, size=2 * q, replace=False) for g, q in zip(groups, quota) if q > 0]
    idx = np.concatenate(chosen) if chosen else np.zeros(0, dtype=np.int64)
    if len(idx) < size:
        rest = np.setdiff1d(np.arange(n), idx)
        idx = np.concatenate([idx, rng.choice(rest, size=size - len(idx), replace=False)])
    idx = idx.astype(np.int64)
    labels = dataset.labels[:, idx]
    return Batch(idx, dataset.xi[:, idx], dataset.xt[:, idx], labels, class_slices(labels))


def init_state(train: Dataset, hyper: Hyperparams, enc: EncoderConfig | None = None,
               kernel: KernelConfig | None = None) -> TrainState:
    enc = enc or EncoderConfig()
    kernel = kernel or KernelConfig()
    params = init_encoder(
        {"image": train.xi.shape[0], "text": train.xt.shape[0]},
        train.n_classes,
        hidden=enc.hidden,
        d_s=enc.d_s,
        d_p=enc.d_p,
        seed=hyper.seed,
        text_hidden=enc.text_hidden,
    )
    d_z = hyper.d_z or enc.d_s
    quant = init_quant_model(
        d_z, enc.d_s, train.n_classes, hyper.M, hyper.K_d, train.n, np.random.default_rng([hyper.seed, 1])
    )
    # bandwidths fixed once from the untrained networks
    out_i = forward(params, train.xi, "image")
    out_t = forward(params, train.xt, "text")
    bank = median_heuristic_bank(np.hstack([out_i.s, out_t.s]), kernel.scales)
    private_bank = median_heuristic_bank(np.hstack([out_i.r, out_t.r]), kernel.scales)
    return TrainState(
        params, params.zeros_like(), quant, bank, private_bank,
        np.random.default_rng([hyper.seed, 2]), np.random.default_rng([hyper.seed, 3]),
    )


def sgd_step(state: TrainState, batch: Batch, hyper: Hyperparams):
    """One momentum step on both networks with the quantizer held fixed."""
    losses, grads = backward(
        state.params, batch, state.quant, hyper.alpha, hyper.lam, state.bank, state.private_bank
    )
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad or not np.isfinite(losses.total):
        raise NumericalError(
            f"non-finite gradient at step {state.step} in {bad[:3]} (learning_rate={hyper.learning_rate} too high?)"
        )
    for k, g in grads.items():
        v = state.velocity[k]
        v *= hyper.momentum
        v += g
        state.params.arrays[k] -= hyper.learning_rate * v
    state.step += 1
    state.skipped_classes += len(losses.skipped)
    return losses


def shared_reps(params: EncoderParams, ds: Dataset):
    return forward(params, ds.xi, "image"), forward(params, ds.xt, "text")


def objective(state: TrainState, train: Dataset, hyper: Hyperparams) -> dict:
    """Full-training-set ``O_l``, ``O_q`` and ``O = O_l + lam * O_q``."""
    out_i, out_t = shared_reps(state.params, train)
    l1, _, _ = l1_loss(out_i.s, out_t.s, out_i.r, out_t.r, class_slices(train.labels),
                       state.bank, state.private_bank)
    l2 = class_loss(out_i.logits, train.labels)[0] + class_loss(out_t.logits, train.labels)[0]
    o_l = l1 + hyper.alpha * l2
    o_q = quant_objective(state.quant, out_i.s, out_t.s, train.labels, hyper.beta)
    return {"iteration": state.outer, "O_l": o_l, "O_q": o_q, "O": o_l + hyper.lam * o_q}


def train(train_set: Dataset, hyper: Hyperparams, enc: EncoderConfig | None = None,
          kernel: KernelConfig | None = None, state: TrainState | None = None) -> TrainState:
    """Run the alternating optimisation for up to ``hyper.outer_iters`` outer iterations.

    Stops early once the relative change of ``O`` stays below ``hyper.tol``
    for ``hyper.patience`` consecutive outer iterations.
    """
    state = state or init_state(train_set, hyper, enc, kernel)
    if not state.history:
        state.history.append(objective(state, train_set, hyper))
    n_batches = max(1, train_set.n // hyper.batch_size)
    quiet = 0
    for _ in range(hyper.outer_iters):
        if hyper.learning_rate > 0:
            for _ in range(hyper.epochs_per_outer * n_batches):
                sgd_step(state, make_batch(train_set, hyper.batch_size, state.batch_rng), hyper)
        out_i, out_t = shared_reps(state.params, train_set)
        state.quant = quantizer_step(
            state.quant, out_i.s, out_t.s, train_set.labels, hyper.beta, hyper.ridge,
            hyper.icm_sweeps, hyper.icm_restarts, state.quant_rng,
        )
        state.outer += 1
        rec = objective(state, train_set, hyper)
        if not all(np.isfinite(v) for v in rec.values()):
            raise NumericalError(f"non-finite objective at outer iteration {state.outer}: {rec}")
        prev = state.history[-1]["O"]
        state.history.append(rec)
        log.info("outer=%d O_l=%.6g O_q=%.6g O=%.6g", rec["iteration"], rec["O_l"], rec["O_q"], rec["O"])
        quiet = quiet + 1 if abs(rec["O"] - prev) <= hyper.tol * max(abs(prev), 1e-12) else 0
        if quiet >= hyper.patience:
            break
    return state


def write_history(history, path, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["iteration", "O_l", "O_q", "O"])
        for rec in history:
            w.writerow([rec["iteration"], repr(rec["O_l"]), repr(rec["O_q"]), repr(rec["O"])])
