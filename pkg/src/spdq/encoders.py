"""Two-branch tanh networks with shared and private heads.

Each modality has its own stack of fully connected tanh layers feeding a
shared head (``d_s`` units) and a private head (``d_p`` units). A per-branch
affine classifier reads the concatenation ``h = [s; r]``. Activations are
stored column-wise: a batch of ``B`` inputs is an ``in_dim x B`` array.

Gradients are derived by hand and checked against finite differences in the
test suite.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SchemaError
from .mmd import KernelBank, mmd_sq_linear_grad
from .numerics import read_matrices, write_matrices

log = logging.getLogger(__name__)

MODALITIES = ("image", "text")


@dataclass
class EncoderParams:
    """Weights of both branches, keyed ``"<modality>/<layer>.<W|b>"``.

    ``W`` arrays are ``out x in``; ``b`` arrays are 1-D of length ``out``.
    """

    input_dims: dict[str, int]
    hidden: dict[str, tuple[int, ...]]
    d_s: int
    d_p: int
    n_classes: int
    arrays: dict[str, np.ndarray]
    seed: int | None = None

    def layer_names(self, modality: str) -> list[str]:
        n_hidden = len(self.hidden[modality])
        return [f"h{j}" for j in range(n_hidden)] + ["shared", "private", "cls"]

    def get(self, modality: str, layer: str):
        return self.arrays[f"{modality}/{layer}.W"], self.arrays[f"{modality}/{layer}.b"]

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            dict(self.input_dims),
            dict(self.hidden),
            self.d_s,
            self.d_p,
            self.n_classes,
            {k: v.copy() for k, v in self.arrays.items()},
            self.seed,
        )

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}


@dataclass
class EncoderOutput:
    s: np.ndarray
    r: np.ndarray
    logits: np.ndarray
    # inputs to every layer, kept for the backward pass
    activations: list[np.ndarray] = field(default_factory=list, repr=False)


@dataclass
class Batch:
    """Aligned mini-batch: column ``j`` of ``x_i`` and ``x_t`` is one pair.

    ``class_slices`` maps a class index to the batch positions used for that
    class's MMD terms (always an even count of at least 2).
    """

    indices: np.ndarray
    x_i: np.ndarray
    x_t: np.ndarray
    labels: np.ndarray
    class_slices: dict[int, np.ndarray]


def init_encoder(
    input_dims: dict[str, int],
    n_classes: int,
    hidden=(256, 256),
    d_s: int = 256,
    d_p: int = 48,
    seed: int = 0,
    text_hidden=None,
) -> EncoderParams:
    """Glorot-uniform weights and zero biases for both branches."""
    rng = np.random.default_rng(seed)
    hidden_map = {
        "image": tuple(hidden),
        "text": tuple(hidden if text_hidden is None else text_hidden),
    }
    arrays: dict[str, np.ndarray] = {}
    for modality in MODALITIES:
        fan_in = int(input_dims[modality])
        for j, width in enumerate(hidden_map[modality]):
            arrays[f"{modality}/h{j}.W"] = _glorot(rng, width, fan_in)
            arrays[f"{modality}/h{j}.b"] = np.zeros(width)
            fan_in = width
        arrays[f"{modality}/shared.W"] = _glorot(rng, d_s, fan_in)
        arrays[f"{modality}/shared.b"] = np.zeros(d_s)
        arrays[f"{modality}/private.W"] = _glorot(rng, d_p, fan_in)
        arrays[f"{modality}/private.b"] = np.zeros(d_p)
        arrays[f"{modality}/cls.W"] = _glorot(rng, n_classes, d_s + d_p)
        arrays[f"{modality}/cls.b"] = np.zeros(n_classes)
    return EncoderParams(
        {m: int(input_dims[m]) for m in MODALITIES}, hidden_map, d_s, d_p, n_classes, arrays, seed
    )


def _glorot(rng, fan_out, fan_in):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


def _check_modality(modality: str):
    if modality not in MODALITIES:
        raise ValueError(f"modality must be one of {MODALITIES}, got {modality!r}")


def forward(params: EncoderParams, x, modality: str) -> EncoderOutput:
    _check_modality(modality)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != params.input_dims[modality]:
        raise DimensionError(
            f"{modality} input must have {params.input_dims[modality]} rows, got shape {x.shape}"
        )
    acts = [x]
    a = x
    for j in range(len(params.hidden[modality])):
        w, b = params.get(modality, f"h{j}")
        a = np.tanh(w @ a + b[:, None])
        acts.append(a)
    ws, bs = params.get(modality, "shared")
    wp, bp = params.get(modality, "private")
    s = np.tanh(ws @ a + bs[:, None])
    r = np.tanh(wp @ a + bp[:, None])
    wc, bc = params.get(modality, "cls")
    logits = wc @ np.vstack([s, r]) + bc[:, None]
    return EncoderOutput(s, r, logits, acts)


def shared_representation(params: EncoderParams, x, modality: str, chunk: int = 4096) -> np.ndarray:
    """Shared-head outputs for a possibly large ``in_dim x N`` input."""
    x = np.asarray(x, dtype=np.float64)
    parts = [forward(params, x[:, j : j + chunk], modality).s for j in range(0, x.shape[1], chunk)]
    return np.hstack(parts) if parts else np.zeros((params.d_s, 0))


def class_loss(logits, labels):
    """Mean sigmoid cross-entropy over all classes and batch columns.

    Returns ``(loss, grad)`` with ``grad`` the derivative w.r.t. ``logits``.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise DimensionError(f"logits {z.shape} and labels {y.shape} differ")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    # softplus(z) - y z, written to avoid exp overflow
    per = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    size = z.size
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    return float(per.sum() / size), (sig - y) / size


def l1_loss(s_i, s_t, r_i, r_t, class_slices, bank: KernelBank, private_bank: KernelBank | None = None):
    """Shared-subspace MMD minus private-subspace MMD, summed over classes.

    Each slice in ``class_slices`` lists aligned batch positions for one class.
    Slices with an odd count lose their last position; slices with fewer than
    two positions are skipped.

    Returns:
        ``(value, grads, skipped)`` where ``grads`` holds arrays ``s_i, s_t,
        r_i, r_t`` shaped like the inputs and ``skipped`` lists the classes
        left out.
    """
    private_bank = bank if private_bank is None else private_bank
    grads = {
        "s_i": np.zeros_like(s_i),
        "s_t": np.zeros_like(s_t),
        "r_i": np.zeros_like(r_i),
        "r_t": np.zeros_like(r_t),
    }
    value = 0.0
    skipped = []
    for k, idx in class_slices.items():
        idx = np.asarray(idx)
        idx = idx[: len(idx) - len(idx) % 2]
        if len(idx) < 2:
            skipped.append(k)
            continue
        v_s, g_si, g_st = mmd_sq_linear_grad(s_i[:, idx], s_t[:, idx], bank)
        v_r, g_ri, g_rt = mmd_sq_linear_grad(r_i[:, idx], r_t[:, idx], private_bank)
        value += v_s - v_r
        # idx has no repeats, so fancy-index accumulation is safe
        grads["s_i"][:, idx] += g_si
        grads["s_t"][:, idx] += g_st
        grads["r_i"][:, idx] -= g_ri
        grads["r_t"][:, idx] -= g_rt
    if skipped:
        log.debug("l1_loss skipped classes=%s", skipped)
    return value, grads, skipped


def alignment_loss(s, C, Z, labels):
    """``||C s - Z l||^2`` summed over batch columns, with its gradient in ``s``."""
    resid = C @ s - Z @ labels
    return float(np.sum(resid**2)), 2.0 * C.T @ resid


def branch_backward(params: EncoderParams, modality: str, out: EncoderOutput, d_s, d_r, d_logits):
    """Push head gradients through one branch; returns per-array gradients."""
    grads = {}
    h = np.vstack([out.s, out.r])
    wc, _ = params.get(modality, "cls")
    grads[f"{modality}/cls.W"] = d_logits @ h.T
    grads[f"{modality}/cls.b"] = d_logits.sum(axis=1)
    d_h = wc.T @ d_logits
    d_s_pre = (d_s + d_h[: params.d_s]) * (1.0 - out.s**2)
    d_r_pre = (d_r + d_h[params.d_s :]) * (1.0 - out.r**2)

    top = out.activations[-1]
    ws, _ = params.get(modality, "shared")
    wp, _ = params.get(modality, "private")
    grads[f"{modality}/shared.W"] = d_s_pre @ top.T
    grads[f"{modality}/shared.b"] = d_s_pre.sum(axis=1)
    grads[f"{modality}/private.W"] = d_r_pre @ top.T
    grads[f"{modality}/private.b"] = d_r_pre.sum(axis=1)
    d_a = ws.T @ d_s_pre + wp.T @ d_r_pre

    for j in reversed(range(len(params.hidden[modality]))):
        a_out = out.activations[j + 1]
        a_in = out.activations[j]
        d_pre = d_a * (1.0 - a_out**2)
        w, _ = params.get(modality, f"h{j}")
        grads[f"{modality}/h{j}.W"] = d_pre @ a_in.T
        grads[f"{modality}/h{j}.b"] = d_pre.sum(axis=1)
        d_a = w.T @ d_pre
    return grads


@dataclass
class BatchLosses:
    l1: float
    l2: float
    o_l: float
    o_q: float
    total: float
    skipped: list


def backward(
    params: EncoderParams,
    batch: Batch,
    quant,
    alpha: float,
    lam: float,
    bank: KernelBank,
    private_bank: KernelBank | None = None,
):
    """Batch objective ``L1 + alpha * L2 + lam * O_q`` and its parameter gradients.

    ``quant`` supplies ``C_i``, ``C_t`` and ``Z`` and is held fixed. The
    ``O_q`` part is the alignment term on the batch columns; the dictionary
    term does not depend on the networks and is left out. ``quant`` may be
    ``None`` only when ``lam == 0``.

    Returns:
        ``(BatchLosses, grads)`` with ``grads`` keyed like ``params.arrays``.
    """
    if quant is None and lam != 0:
        raise ValueError("quantizer state (C_i, C_t, Z) is required when lam != 0")
    out_i = forward(params, batch.x_i, "image")
    out_t = forward(params, batch.x_t, "text")

    l1, g1, skipped = l1_loss(out_i.s, out_t.s, out_i.r, out_t.r, batch.class_slices, bank, private_bank)
    lc_i, gz_i = class_loss(out_i.logits, batch.labels)
    lc_t, gz_t = class_loss(out_t.logits, batch.labels)
    l2 = lc_i + lc_t

    d_si = g1["s_i"]
    d_st = g1["s_t"]
    o_q = 0.0
    if quant is not None and lam != 0:
        q_i, gq_i = alignment_loss(out_i.s, quant.C_i, quant.Z, batch.labels)
        q_t, gq_t = alignment_loss(out_t.s, quant.C_t, quant.Z, batch.labels)
        o_q = q_i + q_t
        d_si = d_si + lam * gq_i
        d_st = d_st + lam * gq_t

    grads = branch_backward(params, "image", out_i, d_si, g1["r_i"], alpha * gz_i)
    grads.update(branch_backward(params, "text", out_t, d_st, g1["r_t"], alpha * gz_t))
    o_l = l1 + alpha * l2
    losses = BatchLosses(l1, l2, o_l, o_q, o_l + lam * o_q, skipped)
    return losses, grads


# --- persistence ------------------------------------------------------------


def save_encoder(params: EncoderParams, weights_path, manifest_path, extra: dict | None = None) -> None:
    """Write all arrays into one SPDQMAT1 stream plus a JSON manifest."""
    names = list(params.arrays)
    mats = [np.atleast_2d(params.arrays[n]) for n in names]
    write_matrices(weights_path, mats)
    manifest = {
        "format": "spdq-encoder-1",
        "input_dims": params.input_dims,
        "hidden": {m: list(h) for m, h in params.hidden.items()},
        "d_s": params.d_s,
        "d_p": params.d_p,
        "n_classes": params.n_classes,
        "seed": params.seed,
        "layers": [{"name": n, "shape": list(params.arrays[n].shape)} for n in names],
    }
    if extra:
        manifest.update(extra)
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_encoder(weights_path, manifest_path) -> tuple[EncoderParams, dict]:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "spdq-encoder-1":
        raise SchemaError(f"{manifest_path}: not an encoder manifest")
    layers = manifest["layers"]
    mats = read_matrices(weights_path, len(layers))
    arrays = {}
    for spec, mat in zip(layers, mats):
        shape = tuple(spec["shape"])
        if int(np.prod(shape)) != mat.size:
            raise SchemaError(f"layer {spec['name']}: shape {shape} does not match stored {mat.shape}")
        arrays[spec["name"]] = mat.reshape(shape)
    params = EncoderParams(
        {m: int(v) for m, v in manifest["input_dims"].items()},
        {m: tuple(h) for m, h in manifest["hidden"].items()},
        int(manifest["d_s"]),
        int(manifest["d_p"]),
        int(manifest["n_classes"]),
        arrays,
        manifest.get("seed"),
    )
    return params, manifest
