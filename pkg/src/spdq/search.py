"""Asymmetric quantizer distance (AQD) search over additive codes.

A query is kept exact (``C @ s``); database items are represented only by
their codes. Per query an ``M x K_d`` table of inner products between the
query and every codeword is built once, after which each item's score is
``M`` table lookups summed in dictionary order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .encoders import EncoderParams, shared_representation
from .errors import DimensionError


@dataclass
class OpCounter:
    table_mults: int = 0
    lookups: int = 0

    def reset(self):
        self.table_mults = 0
        self.lookups = 0


ops = OpCounter()


@dataclass(frozen=True)
class SearchIndex:
    D: np.ndarray
    codes: np.ndarray
    K_d: int
    modality: str
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 2:
            raise DimensionError(f"codes must be N x M, got shape {codes.shape}")
        if self.D.shape[1] != codes.shape[1] * self.K_d:
            raise DimensionError(f"D has {self.D.shape[1]} columns, expected M*K_d={codes.shape[1] * self.K_d}")
        if codes.size and (codes.min() < 0 or codes.max() >= self.K_d):
            raise ValueError(f"code index outside [0, {self.K_d})")
        if self.modality not in ("image", "text"):
            raise ValueError(f"unknown modality {self.modality!r}")
        ids = np.arange(codes.shape[0]) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (codes.shape[0],):
            raise DimensionError("ids must have one entry per code row")
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "ids", ids)

    @property
    def M(self) -> int:
        return self.codes.shape[1]

    def __len__(self) -> int:
        return self.codes.shape[0]


def encode_query(params: EncoderParams, x, modality: str, C) -> np.ndarray:
    """Label-space query representation ``C @ s``; ``x`` may hold several columns."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    s = shared_representation(params, x[:, None] if single else x, modality)
    rep = np.asarray(C) @ s
    return rep[:, 0] if single else rep


def build_lut(query_rep, D, K_d: int) -> np.ndarray:
    """``lut[m, k] = <query_rep, d_{m,k}>``."""
    q = np.asarray(query_rep, dtype=np.float64).ravel()
    if q.shape[0] != D.shape[0]:
        raise DimensionError(f"query has dimension {q.shape[0]}, dictionaries {D.shape[0]}")
    ops.table_mults += D.shape[0] * D.shape[1]
    return (D.T @ q).reshape(D.shape[1] // K_d, K_d)


def aqd_score(lut, code) -> float:
    lut = np.asarray(lut)
    code = np.asarray(code, dtype=np.int64)
    if code.shape != (lut.shape[0],):
        raise DimensionError(f"code needs {lut.shape[0]} entries, got {code.shape}")
    if np.any(code < 0) or np.any(code >= lut.shape[1]):
        raise IndexError(f"code index outside [0, {lut.shape[1]})")
    total = lut[0, code[0]]
    for m in range(1, len(code)):
        total = total + lut[m, code[m]]
    ops.lookups += len(code)
    return float(total)


def score_all(lut, codes) -> np.ndarray:
    """Scores for every code row; same summation order as :func:`aqd_score`."""
    codes = np.asarray(codes, dtype=np.int64)
    scores = lut[0, codes[:, 0]].copy()
    for m in range(1, codes.shape[1]):
        scores += lut[m, codes[:, m]]
    ops.lookups += codes.size
    return scores


def rank(query_rep, index: SearchIndex, topn: int | None = None):
    """Top items by descending score, ties broken by ascending id.

    Returns:
        ``(ids, scores)`` arrays of length ``topn`` (all items if ``None``).
    """
    if len(index) == 0:
        raise ValueError("cannot rank against an empty index")
    topn = len(index) if topn is None else topn
    if not 0 < topn <= len(index):
        raise ValueError(f"topn must be in [1, {len(index)}], got {topn}")
    scores = score_all(build_lut(query_rep, index.D, index.K_d), index.codes)
    order = np.lexsort((index.ids, -scores))[:topn]
    return index.ids[order], scores[order]


def write_ranking(path, ids, scores, comment: str | None = None, query_ids=None) -> None:
    """CSV with header ``id,score`` (or ``query,id,score`` for several queries)."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        if query_ids is None:
            w.writerow(["id", "score"])
            for i, s in zip(ids, scores):
                w.writerow([int(i), repr(float(s))])
        else:
            w.writerow(["query", "id", "score"])
            for q, row_ids, row_scores in zip(query_ids, ids, scores):
                for i, s in zip(row_ids, row_scores):
                    w.writerow([int(q), int(i), repr(float(s))])
