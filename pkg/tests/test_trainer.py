import csv
from dataclasses import replace

import numpy as np
import pytest

from spdq.errors import NumericalError
from spdq.trainer import class_slices, init_state, make_batch, sgd_step, train, write_history


def test_class_slices_are_even():
    labels = np.array([[1, 1, 1, 0, 0], [0, 0, 1, 1, 0], [0, 0, 0, 0, 1]])
    slices = class_slices(labels)
    assert set(slices) == {0, 1}
    assert all(len(v) % 2 == 0 for v in slices.values())


def test_batches_are_stratified_and_even(toy_dataset, rng):
    train_set = toy_dataset.subset("train")
    for _ in range(20):
        batch = make_batch(train_set, 16, rng)
        assert len(batch.indices) == 16 and len(set(batch.indices)) == 16
        assert all(len(v) % 2 == 0 and len(v) >= 2 for v in batch.class_slices.values())
        np.testing.assert_array_equal(batch.x_i, train_set.xi[:, batch.indices])


def test_batch_size_validation(toy_dataset, rng):
    with pytest.raises(ValueError):
        make_batch(toy_dataset, 7, rng)


def test_training_is_deterministic(toy_dataset, toy_hyper, toy_encoder):
    train_set = toy_dataset.subset("train")
    a = train(train_set, toy_hyper, toy_encoder)
    b = train(train_set, toy_hyper, toy_encoder)
    assert a.history == b.history
    for name in ("C_i", "C_t", "Z", "D", "codes"):
        assert np.array_equal(getattr(a.quant, name), getattr(b.quant, name))


def test_frozen_networks_give_monotone_quantizer_objective(toy_dataset, toy_hyper, toy_encoder):
    hyper = replace(toy_hyper, learning_rate=0.0, outer_iters=15, tol=0.0)
    state = train(toy_dataset.subset("train"), hyper, toy_encoder)
    o_q = [h["O_q"] for h in state.history]
    assert state.step == 0 and len(o_q) == 16
    assert np.all(np.diff(o_q) <= 1e-9)


def test_objective_falls_on_separable_data(toy_dataset, toy_hyper, toy_encoder):
    for seed in (0, 1, 2):
        state = train(toy_dataset.subset("train"), replace(toy_hyper, seed=seed, outer_iters=5), toy_encoder)
        assert state.history[-1]["O"] < state.history[0]["O"]


def test_early_stop_on_plateau(toy_dataset, toy_hyper, toy_encoder):
    hyper = replace(toy_hyper, learning_rate=0.0, outer_iters=50, tol=1e-3, patience=2)
    state = train(toy_dataset.subset("train"), hyper, toy_encoder)
    assert state.outer < 50


def test_non_finite_gradient_is_reported(toy_dataset, toy_hyper, toy_encoder, rng):
    state = init_state(toy_dataset.subset("train"), toy_hyper, toy_encoder)
    state.params.arrays["image/h0.W"][0, 0] = np.nan
    with pytest.raises(NumericalError):
        sgd_step(state, make_batch(toy_dataset.subset("train"), 16, rng), toy_hyper)


def test_write_history(tmp_path, toy_dataset, toy_hyper, toy_encoder):
    state = train(toy_dataset.subset("train"), replace(toy_hyper, outer_iters=2), toy_encoder)
    write_history(state.history, tmp_path / "h.csv", "config_hash=x")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["# config_hash=x"] and rows[1] == ["iteration", "O_l", "O_q", "O"]
    assert [int(r[0]) for r in rows[2:]] == [0, 1, 2]
    assert float(rows[-1][3]) == state.history[-1]["O"]
