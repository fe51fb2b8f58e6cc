from dataclasses import replace

import numpy as np
import pytest

from spdq.config import RunConfig
from spdq.pipeline import build_index, evaluate, run


@pytest.fixture(scope="module")
def trained(toy_dataset):
    cfg = RunConfig()
    cfg.hyper = replace(cfg.hyper, M=2, K_d=4, batch_size=16, outer_iters=3)
    cfg.encoder = replace(cfg.encoder, hidden=(10,), d_s=6, d_p=3)
    cfg.eval = replace(cfg.eval, R=20, n_grid=(1, 5, 10))
    state, results = run(toy_dataset, cfg)
    return cfg, state, results


def test_both_directions_reported(trained):
    _, _, results = trained
    assert [r.name for r in results] == ["i2t", "t2i"]
    for r in results:
        assert 0 <= r.map <= 1 and r.map == r.map_all
        assert r.map_min >= r.map_all
        assert r.topn[:, 0].tolist() == [1, 5, 10]


def test_index_reuses_training_codes(trained, toy_dataset):
    cfg, state, _ = trained
    db = toy_dataset.subset(("train", "validation"))
    known = db.tags == "train"
    index = build_index(state.params, state.quant, db, "text", known=known)
    np.testing.assert_array_equal(index.codes[known], state.quant.codes)
    with pytest.raises(ValueError):
        build_index(state.params, state.quant, db, "text", known=np.ones(db.n, dtype=bool))


def test_evaluate_min_norm(trained, toy_dataset):
    cfg, state, results = trained
    other = RunConfig.from_dict(cfg.to_dict())
    other.eval.map_norm = "min"
    again = evaluate(state.params, state.quant, toy_dataset, other)
    assert [r.map for r in again] == [r.map_min for r in results]
