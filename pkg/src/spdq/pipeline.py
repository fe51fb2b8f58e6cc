"""End-to-end glue: train on the train split, index the database, score both directions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .data import Dataset
from .encoders import EncoderParams
from .metrics import RelevanceJudge, per_query_ap, topn_precision
from .quantizer import QuantModel, encode
from .search import SearchIndex, encode_query, rank
from .trainer import TrainState, train

DIRECTIONS = (("image", "text"), ("text", "image"))


def transform_for(quant: QuantModel, modality: str) -> np.ndarray:
    return quant.C_i if modality == "image" else quant.C_t


def build_index(params: EncoderParams, quant: QuantModel, db: Dataset, modality: str,
                sweeps: int = 3, ids=None, known=None) -> SearchIndex:
    """Code table for the database items of one modality.

    Items flagged in the boolean mask ``known`` were part of training and keep
    their learned codes (``quant.codes``, in column order). Every other item
    is encoded from ``C @ s`` by greedy assignment followed by ICM.
    """
    known = np.zeros(db.n, dtype=bool) if known is None else np.asarray(known, dtype=bool)
    if known.shape != (db.n,) or known.sum() != (quant.codes.shape[0] if known.any() else 0):
        raise ValueError("known must flag exactly the training items, one entry per database column")
    codes = np.empty((db.n, quant.M), dtype=np.int64)
    codes[known] = quant.codes
    if (~known).any():
        fresh = db.subset(np.flatnonzero(~known))
        reps = encode_query(params, fresh.features(modality), modality, transform_for(quant, modality))
        codes[~known] = encode(reps, quant.D, quant.K_d, sweeps)
    return SearchIndex(quant.D, codes, quant.K_d, modality, ids)


def rank_queries(params, quant, queries_x, query_modality, index: SearchIndex, topn: int):
    reps = encode_query(params, queries_x, query_modality, transform_for(quant, query_modality))
    ids = np.empty((reps.shape[1], topn), dtype=np.int64)
    scores = np.empty((reps.shape[1], topn))
    for q in range(reps.shape[1]):
        ids[q], scores[q] = rank(reps[:, q], index, topn)
    return ids, scores


@dataclass
class DirectionResult:
    query_modality: str
    db_modality: str
    ap: np.ndarray
    map: float
    topn: np.ndarray
    excluded: int
    # both AP normalisations, whatever the configured one is
    map_all: float = float("nan")
    map_min: float = float("nan")

    @property
    def name(self) -> str:
        return f"{self.query_modality[0]}2{self.db_modality[0]}"


def evaluate(params, quant, dataset: Dataset, cfg: RunConfig, sweeps: int | None = None) -> list[DirectionResult]:
    """MAP@R and topN-precision for image->text and text->image retrieval.

    Queries are the ``query`` split; the database is ``train`` plus
    ``validation``, with training items represented by their learned codes.
    """
    ev = cfg.eval
    sweeps = cfg.hyper.icm_sweeps if sweeps is None else sweeps
    queries = dataset.subset("query")
    db = dataset.subset(("train", "validation"))
    judge = RelevanceJudge(queries.labels, db.labels)
    depth = min(db.n, max(ev.R, max(ev.n_grid)))
    grid = [n for n in ev.n_grid if n <= depth]
    results = []
    for q_mod, db_mod in DIRECTIONS:
        index = build_index(params, quant, db, db_mod, sweeps, known=db.tags == "train")
        ids, _ = rank_queries(params, quant, queries.features(q_mod), q_mod, index, depth)
        R = min(ev.R, depth)
        both = {norm: per_query_ap(ids, judge, R, norm) for norm in ("all", "min")}
        aps = both[ev.map_norm]
        valid = ~np.isnan(aps)
        if not valid.any():
            raise ValueError("no query has a relevant database item")
        results.append(
            DirectionResult(q_mod, db_mod, aps, float(aps[valid].mean()),
                            topn_precision(ids, judge, grid), int((~valid).sum()),
                            float(both["all"][valid].mean()), float(both["min"][valid].mean()))
        )
    return results


def run(dataset: Dataset, cfg: RunConfig) -> tuple[TrainState, list[DirectionResult]]:
    state = train(dataset.subset("train"), cfg.hyper, cfg.encoder, cfg.kernel)
    return state, evaluate(state.params, state.quant, dataset, cfg)
