"""Label-aligned additive quantization.

Shapes used throughout (columns are data points):

* ``S_i``, ``S_t``: ``d_s x N`` shared representations
* ``C_i``, ``C_t``: ``d_z x d_s`` with orthonormal rows
* ``Z``: ``d_z x K_c`` class anchors, ``L``: ``K_c x N`` binary labels
* ``D``: ``d_z x (M * K_d)``, dictionary ``m`` occupies columns
  ``m * K_d : (m + 1) * K_d``
* ``codes``: ``N x M`` integer indices into each dictionary
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalError, SchemaError
from .numerics import (
    random_orthonormal_rows,
    read_codes,
    read_matrix,
    solve_spd,
    svd,
    write_codes,
    write_matrix,
)

log = logging.getLogger(__name__)


@dataclass
class QuantModel:
    C_i: np.ndarray
    C_t: np.ndarray
    Z: np.ndarray
    D: np.ndarray
    codes: np.ndarray
    K_d: int

    @property
    def M(self) -> int:
        return self.D.shape[1] // self.K_d

    @property
    def d_z(self) -> int:
        return self.D.shape[0]

    @property
    def bits(self) -> int:
        return self.M * int(np.log2(self.K_d))

    def reconstruct(self, codes=None) -> np.ndarray:
        return reconstruct(self.D, self.codes if codes is None else codes, self.K_d)

    def copy(self) -> "QuantModel":
        return QuantModel(
            self.C_i.copy(), self.C_t.copy(), self.Z.copy(), self.D.copy(), self.codes.copy(), self.K_d
        )


def init_quant_model(d_z, d_s, n_classes, M, K_d, N, rng: np.random.Generator) -> QuantModel:
    """Random starting point: orthonormal-row ``C``, Gaussian ``Z`` and ``D``, uniform codes."""
    if d_z > d_s:
        raise DimensionError(f"d_z={d_z} must not exceed d_s={d_s}")
    if K_d < 2 or K_d & (K_d - 1):
        raise ValueError(f"K_d must be a power of two >= 2, got {K_d}")
    C_i = random_orthonormal_rows(d_z, d_s, rng)
    C_t = random_orthonormal_rows(d_z, d_s, rng)
    Z = 0.1 * rng.standard_normal((d_z, n_classes))
    D = 0.1 * rng.standard_normal((d_z, M * K_d))
    codes = rng.integers(0, K_d, size=(N, M))
    return QuantModel(C_i, C_t, Z, D, codes, K_d)


def flat_codes(codes, K_d: int) -> np.ndarray:
    """Column indices into ``D`` for each (point, dictionary) slot."""
    codes = np.asarray(codes, dtype=np.int64)
    return codes + K_d * np.arange(codes.shape[1])[None, :]


def reconstruct(D, codes, K_d: int) -> np.ndarray:
    """``D @ B``: each column is the sum of its ``M`` selected codewords."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.ndim == 1:
        codes = codes[None, :]
    idx = flat_codes(codes, K_d)
    out = np.zeros((D.shape[0], codes.shape[0]))
    for m in range(codes.shape[1]):
        out += D[:, idx[:, m]]
    return out


def indicator_matrix(codes, K_d: int) -> np.ndarray:
    """Dense 0/1 ``(M * K_d) x N`` matrix ``B``."""
    codes = np.asarray(codes, dtype=np.int64)
    n, m = codes.shape
    B = np.zeros((m * K_d, n))
    B[flat_codes(codes, K_d).T, np.arange(n)[None, :]] = 1.0
    return B


def unused_codewords(codes, K_d: int) -> np.ndarray:
    """Flat column indices of ``D`` that no point selects."""
    used = np.zeros(np.asarray(codes).shape[1] * K_d, dtype=bool)
    used[flat_codes(codes, K_d).ravel()] = True
    return np.flatnonzero(~used)


def _refined_ridge_solve(G, rhs, ridge, steps=2):
    """Solve ``G X = rhs`` through ``(G + ridge I)`` plus iterated-Tikhonov refinement.

    Each refinement step shrinks the ridge bias by ``ridge / (eig + ridge)``
    along every non-null eigen-direction of ``G``; null directions stay at
    zero, so singular ``G`` still yields the minimum-norm answer.
    """
    if ridge == 0:
        return solve_spd(G, rhs, 0.0)
    x = solve_spd(G, rhs, ridge)
    if steps:
        factor = scipy.linalg.cho_factor(G + ridge * np.eye(G.shape[0]), lower=True)
        for _ in range(steps):
            x = x + scipy.linalg.cho_solve(factor, rhs - G @ x)
    if not np.all(np.isfinite(x)):
        raise NumericalError("ridge solve produced non-finite values")
    return x


def update_C(S, ZL, current=None) -> np.ndarray:
    """Row-orthonormal ``C`` minimising ``||C S - ZL||_F`` (orthogonal Procrustes).

    ``U V^T`` from the SVD of ``ZL S^T`` is the exact minimiser when ``C`` is
    square. With fewer rows than columns ``||C S||`` depends on ``C`` and the
    closed form only maximises the cross term, so when ``current`` is given
    it is kept whenever the closed form would be worse.
    """
    S = np.asarray(S, dtype=np.float64)
    ZL = np.asarray(ZL, dtype=np.float64)
    if S.shape[1] != ZL.shape[1]:
        raise DimensionError(f"S has {S.shape[1]} columns, ZL has {ZL.shape[1]}")
    if ZL.shape[0] > S.shape[0]:
        raise DimensionError(f"d_z={ZL.shape[0]} exceeds d_s={S.shape[0]}")
    U, _, V = svd(ZL @ S.T)
    C = U @ V.T
    if current is not None and C.shape[0] < C.shape[1]:
        if np.sum((current @ S - ZL) ** 2) < np.sum((C @ S - ZL) ** 2):
            return np.array(current, dtype=np.float64)
    return C


def update_Z(CiSi, CtSt, D, codes, L, beta: float, ridge: float = 1e-6, K_d: int | None = None) -> np.ndarray:
    """Closed-form anchors from the stationarity condition of ``O_q`` in ``Z``.

    ``Z = [(CiSi + CtSt) + beta * D B] L^T ((2 + beta) L L^T + ridge I)^-1``.
    ``beta == 0`` skips the dictionary term entirely (``D`` and ``codes`` may
    then be ``None``).
    """
    L = np.asarray(L, dtype=np.float64)
    target = np.asarray(CiSi, dtype=np.float64) + np.asarray(CtSt, dtype=np.float64)
    if target.shape[1] != L.shape[1]:
        raise DimensionError(f"representations have {target.shape[1]} columns, L has {L.shape[1]}")
    if beta:
        K_d = K_d if K_d is not None else _infer_kd(D, codes)
        target = target + beta * reconstruct(D, codes, K_d)
    G = (2.0 + beta) * (L @ L.T)
    return _refined_ridge_solve(G, L @ target.T, ridge).T


def _infer_kd(D, codes):
    M = np.asarray(codes).shape[1]
    if D.shape[1] % M:
        raise DimensionError(f"D has {D.shape[1]} columns, not divisible by M={M}")
    return D.shape[1] // M


def update_D(ZL, codes, K_d: int, ridge: float = 1e-6) -> np.ndarray:
    """Least-squares dictionaries ``D = ZL B^T (B B^T)^-1`` for fixed codes.

    ``B B^T`` is assembled from code co-occurrence counts rather than from the
    dense indicator. Codewords nobody selects get zero columns.
    """
    ZL = np.asarray(ZL, dtype=np.float64)
    codes = np.asarray(codes, dtype=np.int64)
    n, M = codes.shape
    if ZL.shape[1] != n:
        raise DimensionError(f"ZL has {ZL.shape[1]} columns, codes have {n} rows")
    idx = flat_codes(codes, K_d)
    G = np.zeros((M * K_d, M * K_d))
    for a in range(M):
        for b in range(M):
            np.add.at(G, (idx[:, a], idx[:, b]), 1.0)
    rhs = np.zeros((M * K_d, ZL.shape[0]))
    for a in range(M):
        np.add.at(rhs, idx[:, a], ZL.T)
    unused = np.flatnonzero(np.diag(G) == 0)
    if unused.size:
        log.debug("update_D unused_codewords=%d", unused.size)
    return _refined_ridge_solve(G, rhs, ridge).T


def icm_assign_all(V, D, codes, K_d: int, sweeps: int = 3) -> np.ndarray:
    """Iterated conditional modes over all columns of ``V`` at once.

    Every slot is re-chosen exhaustively with the other slots fixed, in order
    ``m = 0 .. M-1``, for up to ``sweeps`` passes. The current index is among
    the candidates, so no update increases ``||v - D b||^2``. Ties go to the
    lowest index.
    """
    V = np.asarray(V, dtype=np.float64)
    codes = np.array(codes, dtype=np.int64, copy=True)
    if codes.ndim != 2 or codes.shape[0] != V.shape[1]:
        raise DimensionError(f"codes shape {codes.shape} does not match {V.shape[1]} points")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    M = codes.shape[1]
    DtV = D.T @ V
    gram = D.T @ D
    norms = np.diag(gram)
    for _ in range(sweeps):
        changed = False
        for m in range(M):
            block = slice(m * K_d, (m + 1) * K_d)
            cross = np.zeros((K_d, V.shape[1]))
            for other in range(M):
                if other != m:
                    cross += gram[block, other * K_d + codes[:, other]]
            cost = norms[block, None] - 2.0 * (DtV[block] - cross)
            best = np.argmin(cost, axis=0)
            if not changed and np.any(best != codes[:, m]):
                changed = True
            codes[:, m] = best
        if not changed:
            break
    return codes


def icm_assign(v, D, initial_code, K_d: int, sweeps: int = 3) -> np.ndarray:
    """Single-vector form of :func:`icm_assign_all`; returns ``M`` indices."""
    v = np.asarray(v, dtype=np.float64).reshape(-1, 1)
    code = np.asarray(initial_code, dtype=np.int64).reshape(1, -1)
    return icm_assign_all(v, D, code, K_d, sweeps)[0]


def code_errors(V, D, codes, K_d: int) -> np.ndarray:
    """Per-column squared error ``||v_n - D b_n||^2``."""
    return np.sum((np.asarray(V) - reconstruct(D, codes, K_d)) ** 2, axis=0)


def greedy_codes(V, D, K_d: int) -> np.ndarray:
    """Residual-greedy codes: pick the best codeword dictionary by dictionary."""
    V = np.asarray(V, dtype=np.float64)
    M = D.shape[1] // K_d
    resid = V.copy()
    codes = np.zeros((V.shape[1], M), dtype=np.int64)
    for m in range(M):
        Dm = D[:, m * K_d : (m + 1) * K_d]
        cost = np.sum(Dm**2, axis=0)[:, None] - 2.0 * (Dm.T @ resid)
        codes[:, m] = np.argmin(cost, axis=0)
        resid -= Dm[:, codes[:, m]]
    return codes


def icm_restarts(V, D, K_d: int, initial_codes=None, restarts: int = 1, sweeps: int = 3, rng=None) -> np.ndarray:
    """ICM from ``initial_codes`` plus ``restarts - 1`` random starts; keep the best per point."""
    V = np.asarray(V, dtype=np.float64)
    M = D.shape[1] // K_d
    rng = np.random.default_rng(0) if rng is None else rng
    if initial_codes is None:
        initial_codes = rng.integers(0, K_d, size=(V.shape[1], M))
    best = icm_assign_all(V, D, initial_codes, K_d, sweeps)
    best_err = code_errors(V, D, best, K_d)
    for _ in range(restarts - 1):
        cand = icm_assign_all(V, D, rng.integers(0, K_d, size=(V.shape[1], M)), K_d, sweeps)
        err = code_errors(V, D, cand, K_d)
        better = err < best_err
        best[better] = cand[better]
        best_err = np.where(better, err, best_err)
    return best


def encode(V, D, K_d: int, sweeps: int = 3) -> np.ndarray:
    """Codes for unlabeled vectors: greedy start refined by ICM."""
    return icm_assign_all(V, D, greedy_codes(V, D, K_d), K_d, sweeps)


def quant_objective_terms(model: QuantModel, S_i, S_t, L, beta: float):
    """The three Frobenius terms of ``O_q`` and their weighted sum."""
    ZL = model.Z @ L
    a_i = float(np.sum((model.C_i @ S_i - ZL) ** 2))
    a_t = float(np.sum((model.C_t @ S_t - ZL) ** 2))
    q = float(np.sum((ZL - model.reconstruct()) ** 2))
    return {"align_i": a_i, "align_t": a_t, "quant": q, "total": a_i + a_t + beta * q}


def quant_objective(model: QuantModel, S_i, S_t, L, beta: float) -> float:
    return quant_objective_terms(model, S_i, S_t, L, beta)["total"]


def quantizer_step(model: QuantModel, S_i, S_t, L, beta: float, ridge: float = 1e-6, sweeps: int = 3,
                   restarts: int = 1, rng=None, trace=None) -> QuantModel:
    """One pass of the five non-network updates: ``C_i``, ``C_t``, ``Z``, ``D``, codes.

    If ``trace`` is a list, ``O_q`` after each update is appended to it.
    """
    m = model.copy()
    L = np.asarray(L, dtype=np.float64)

    def record():
        if trace is not None:
            trace.append(quant_objective(m, S_i, S_t, L, beta))

    m.C_i = update_C(S_i, m.Z @ L, m.C_i)
    record()
    m.C_t = update_C(S_t, m.Z @ L, m.C_t)
    record()
    m.Z = update_Z(m.C_i @ S_i, m.C_t @ S_t, m.D, m.codes, L, beta, ridge, m.K_d)
    record()
    ZL = m.Z @ L
    m.D = update_D(ZL, m.codes, m.K_d, ridge)
    record()
    m.codes = icm_restarts(ZL, m.D, m.K_d, m.codes, restarts, sweeps, rng)
    record()
    return m


# --- persistence ------------------------------------------------------------

_QUANT_FILES = ("C_i.bin", "C_t.bin", "Z.bin", "D.bin")


def save_quant_model(model: QuantModel, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    for name, arr in zip(_QUANT_FILES, (model.C_i, model.C_t, model.Z, model.D)):
        write_matrix(os.path.join(directory, name), arr, "bin")
    write_codes(os.path.join(directory, "codes.bin"), model.codes, model.K_d)
    meta = {"format": "spdq-quant-1", "M": model.M, "K_d": model.K_d, "d_z": model.d_z}
    with open(os.path.join(directory, "quant.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_quant_model(directory) -> QuantModel:
    C_i, C_t, Z, D = (read_matrix(os.path.join(directory, n), "bin") for n in _QUANT_FILES)
    codes, K_d = read_codes(os.path.join(directory, "codes.bin"))
    model = QuantModel(C_i, C_t, Z, D, codes, K_d)
    if D.shape[1] != codes.shape[1] * K_d:
        raise SchemaError(f"{directory}: D has {D.shape[1]} columns but M*K_d={codes.shape[1] * K_d}")
    return model
