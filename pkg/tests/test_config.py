import json

import pytest

from spdq.config import EvalConfig, Hyperparams, RunConfig, load_config
from spdq.errors import SchemaError


def test_defaults():
    h = Hyperparams()
    assert (h.M, h.K_d, h.bits) == (2, 256, 16)
    assert RunConfig().eval.map_norm == "all"


@pytest.mark.parametrize("kwargs", [{"K_d": 3}, {"K_d": 512}, {"alpha": -1.0}, {"lam": float("nan")},
                                    {"batch_size": 7}, {"M": 0}, {"outer_iters": -1}])
def test_hyperparams_rejects(kwargs):
    with pytest.raises(SchemaError):
        Hyperparams(**kwargs)


@pytest.mark.parametrize("kwargs", [{"map_norm": "mean"}, {"R": 0}, {"train_fraction": 0.5}])
def test_eval_config_rejects(kwargs):
    with pytest.raises(SchemaError):
        EvalConfig(**kwargs)


def test_round_trip_and_hash():
    cfg = RunConfig.from_dict({"hyper": {"M": 4, "K_d": 16}, "encoder": {"hidden": [32]}, "seed": 3})
    assert cfg.hyper.M == 4 and cfg.encoder.hidden == (32,) and cfg.seed == 3
    again = RunConfig.from_dict(cfg.to_dict())
    assert again.hash() == cfg.hash() and len(cfg.hash()) == 16
    again.hyper.alpha = 2.0
    assert again.hash() != cfg.hash()


@pytest.mark.parametrize("doc", [{"extra": 1}, {"hyper": {"gamma": 1}}, {"hyper": {"M": 2.5}},
                                 {"hyper": {"alpha": "big"}}, {"encoder": {"hidden": 3}}, {"paths": {"a": 1}},
                                 {"hyper": []}])
def test_schema_violations(doc):
    with pytest.raises(SchemaError):
        RunConfig.from_dict(doc)


def test_load_config(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"hyper": {"lam": 0.5}}))
    assert load_config(tmp_path / "c.json").hyper.lam == 0.5
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(SchemaError):
        load_config(tmp_path / "bad.json")
