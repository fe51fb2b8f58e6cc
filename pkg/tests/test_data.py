import itertools

import numpy as np
import pytest

from spdq.data import Dataset, generate_synthetic, load_dataset, save_dataset, split
from spdq.errors import DimensionError, MissingArtifactError, SchemaError


def test_validation_errors(rng):
    x = rng.standard_normal((3, 4))
    labels = np.eye(2)[:, [0, 1, 0, 1]]
    with pytest.raises(DimensionError):
        Dataset(x, x[:, :3], labels)
    with pytest.raises(SchemaError):
        Dataset(x, x, labels * 0.5)
    with pytest.raises(SchemaError, match="all zero: 2"):
        Dataset(x, x, np.array([[1, 0, 0, 1], [0, 1, 0, 0.0]]))
    with pytest.raises(SchemaError):
        Dataset(x, x, labels, tags=np.array(["train", "train", "test", "query"]))


def test_prototypes_are_equidistant_without_noise():
    ds = generate_synthetic(4, 40, dims=(6, 5), separation=3.0, noise=0.0, seed=1, latent_dim=8)
    centres = [ds.latent[:, np.argmax(ds.labels[k])] for k in range(4)]
    for a, b in itertools.combinations(centres, 2):
        assert np.linalg.norm(a - b) == pytest.approx(3.0, abs=1e-12)


def test_single_label_is_balanced_and_deterministic():
    a = generate_synthetic(5, 103, dims=(4, 3), seed=2)
    b = generate_synthetic(5, 103, dims=(4, 3), seed=2)
    assert np.array_equal(a.xi, b.xi) and np.array_equal(a.labels, b.labels)
    counts = a.labels.sum(axis=1)
    assert counts.max() - counts.min() <= 1 and np.all(a.labels.sum(axis=0) == 1)
    assert np.all(np.abs(a.xi) < 1)


def test_multi_label_counts():
    ds = generate_synthetic(6, 300, dims=(4, 3), label_mode="multi", seed=0)
    per_point = ds.labels.sum(axis=0)
    assert per_point.min() >= 1 and per_point.max() <= 3 and per_point.max() > 1


def test_infeasible_requests():
    with pytest.raises(ValueError, match="latent dimension"):
        generate_synthetic(10, 100, latent_dim=4)
    with pytest.raises(ValueError):
        generate_synthetic(5, 6)
    with pytest.raises(ValueError):
        generate_synthetic(3, 30, label_mode="soft")


def test_split_sizes_and_pairing():
    ds = split(generate_synthetic(4, 100, dims=(4, 3), seed=0), seed=5)
    sizes = {t: int((ds.tags == t).sum()) for t in ("train", "validation", "query")}
    assert sizes == {"train": 80, "validation": 10, "query": 10}
    q = ds.subset("query")
    cols = np.flatnonzero(ds.tags == "query")
    assert np.array_equal(q.xi, ds.xi[:, cols]) and np.array_equal(q.labels, ds.labels[:, cols])
    assert ds.subset(("train", "validation")).n == 90
    with pytest.raises(ValueError):
        split(ds, (0.5, 0.6, 0.1))


@pytest.mark.parametrize("fmt", ["bin", "csv"])
def test_save_load_round_trip(tmp_path, fmt):
    ds = split(generate_synthetic(3, 30, dims=(4, 3), seed=0), seed=0)
    save_dataset(ds, tmp_path / "d", fmt)
    back = load_dataset(tmp_path / "d")
    for name in ("xi", "xt", "labels", "tags"):
        assert np.array_equal(getattr(back, name), getattr(ds, name))


def test_missing_dataset(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_dataset(tmp_path / "nothing")
