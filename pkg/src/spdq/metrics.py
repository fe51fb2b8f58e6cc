"""Retrieval metrics: AP over the top R, MAP@R and topN-precision.

Rankings are integer arrays of database positions (columns of the database
label matrix), best first.
"""

from __future__ import annotations

import numpy as np


class RelevanceJudge:
    """An item is relevant to a query iff the two share at least one label."""

    def __init__(self, query_labels, db_labels):
        self.query_labels = np.asarray(query_labels) > 0
        self.db_labels = np.asarray(db_labels) > 0
        if self.query_labels.shape[0] != self.db_labels.shape[0]:
            raise ValueError("query and database label matrices have different class counts")
        self.relevance = (self.query_labels.T.astype(np.int64) @ self.db_labels.astype(np.int64)) > 0
        self.num_relevant = self.relevance.sum(axis=1)

    @property
    def n_queries(self) -> int:
        return self.relevance.shape[0]


def average_precision(ranked_relevance, num_relevant_in_db: int, R: int = 50, norm: str = "all") -> float:
    """``(1/N) * sum_{r<=R} P(r) * rel(r)`` with ``N`` the relevant count in the database.

    ``norm="min"`` divides by ``min(N, R)`` instead, the usual truncated-AP
    convention.
    """
    rel = np.asarray(ranked_relevance, dtype=bool)
    if R < 1 or R > rel.shape[0]:
        raise ValueError(f"R={R} must be in [1, {rel.shape[0]}]")
    if num_relevant_in_db < 1:
        raise ValueError("query has no relevant items in the database")
    rel = rel[:R]
    hits = np.cumsum(rel)
    precision = hits / np.arange(1, R + 1)
    if norm == "all":
        denom = num_relevant_in_db
    elif norm == "min":
        denom = min(num_relevant_in_db, R)
    else:
        raise ValueError(f"norm must be 'all' or 'min', got {norm!r}")
    # accumulated in rank order (cumsum is sequential, unlike pairwise np.sum)
    return float(np.cumsum(np.where(rel, precision, 0.0))[-1] / denom)


def per_query_ap(rankings, judge: RelevanceJudge, R: int = 50, norm: str = "all") -> np.ndarray:
    """AP for every query; ``nan`` where the query has no relevant item."""
    rankings = np.asarray(rankings, dtype=np.int64)
    out = np.full(judge.n_queries, np.nan)
    for q in range(judge.n_queries):
        if judge.num_relevant[q] > 0:
            rel = judge.relevance[q, rankings[q]]
            out[q] = average_precision(rel, int(judge.num_relevant[q]), R, norm)
    return out


def map_at_r(rankings, judge: RelevanceJudge, R: int = 50, norm: str = "all") -> float:
    aps = per_query_ap(rankings, judge, R, norm)
    valid = ~np.isnan(aps)
    if not valid.any():
        raise ValueError("no query has a relevant item in the database")
    return float(aps[valid].mean())


def topn_precision(rankings, judge: RelevanceJudge, n_grid) -> np.ndarray:
    """Rows ``(n, mean precision@n)`` for each ``n`` in ``n_grid``."""
    rankings = np.asarray(rankings, dtype=np.int64)
    n_grid = [int(n) for n in n_grid]
    if max(n_grid) > rankings.shape[1]:
        raise ValueError(f"n_grid reaches {max(n_grid)} but rankings have length {rankings.shape[1]}")
    rel = np.take_along_axis(judge.relevance, rankings, axis=1)
    hits = np.cumsum(rel, axis=1)
    return np.array([[n, hits[:, n - 1].mean() / n] for n in n_grid])
