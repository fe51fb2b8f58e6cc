"""Paired cross-modal datasets: container, synthetic generator, splits, disk I/O.

Feature and label matrices are stored column-per-point: ``xi`` is
``image_dim x N``, ``xt`` is ``text_dim x N`` and ``labels`` is ``K_c x N``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, MissingArtifactError, SchemaError
from .numerics import read_matrix, write_matrix

SPLITS = ("train", "validation", "query")


@dataclass(eq=False)
class Dataset:
    xi: np.ndarray
    xt: np.ndarray
    labels: np.ndarray
    tags: np.ndarray | None = None
    seed: int | None = None
    # synthetic data only: the latent each point was generated from
    latent: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        validate(self)

    @property
    def n(self) -> int:
        return self.labels.shape[1]

    @property
    def n_classes(self) -> int:
        return self.labels.shape[0]

    def subset(self, which) -> "Dataset":
        """Columns selected by a split tag, a tuple of tags, or an index array."""
        if isinstance(which, str) or (isinstance(which, tuple) and all(isinstance(w, str) for w in which)):
            if self.tags is None:
                raise ValueError("dataset has no split tags")
            names = (which,) if isinstance(which, str) else which
            idx = np.flatnonzero(np.isin(self.tags, names))
        else:
            idx = np.asarray(which, dtype=np.int64)
        tags = None if self.tags is None else self.tags[idx]
        latent = None if self.latent is None else self.latent[:, idx]
        return Dataset(self.xi[:, idx], self.xt[:, idx], self.labels[:, idx], tags, self.seed, latent)

    def features(self, modality: str) -> np.ndarray:
        return {"image": self.xi, "text": self.xt}[modality]


def validate(d: Dataset) -> None:
    for name in ("xi", "xt", "labels"):
        arr = np.asarray(getattr(d, name), dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
        setattr(d, name, arr)
    n = d.labels.shape[1]
    if d.xi.shape[1] != n or d.xt.shape[1] != n:
        raise DimensionError(
            f"column counts differ: xi={d.xi.shape[1]}, xt={d.xt.shape[1]}, labels={n}"
        )
    if not np.all((d.labels == 0) | (d.labels == 1)):
        raise SchemaError("labels must be 0/1")
    empty = np.flatnonzero(d.labels.sum(axis=0) == 0)
    if empty.size:
        shown = ", ".join(map(str, empty[:10])) + (" ..." if empty.size > 10 else "")
        raise SchemaError(f"{empty.size} label columns are all zero: {shown}")
    if d.tags is not None:
        d.tags = np.asarray(d.tags, dtype="<U10")
        if d.tags.shape != (n,):
            raise DimensionError(f"tags must have length {n}")
        bad = set(np.unique(d.tags)) - set(SPLITS)
        if bad:
            raise SchemaError(f"unknown split tags {sorted(bad)}")


def generate_synthetic(
    n_classes: int,
    n: int,
    dims=(128, 64),
    separation: float = 10.0,
    noise: float = 0.3,
    label_mode: str = "single",
    seed: int = 0,
    latent_dim: int = 32,
) -> Dataset:
    """Paired image/text features driven by a shared latent class structure.

    Each class gets a prototype along its own orthonormal direction, scaled so
    that any two prototypes are exactly ``separation`` apart. A point's latent
    is the mean of its classes' prototypes plus Gaussian noise; each modality
    sees ``tanh(A @ latent + noise)`` through its own fixed random map ``A``.
    ``label_mode="multi"`` gives each point 1 to 3 labels.
    """
    if n_classes < 2 or n < 2 * n_classes:
        raise ValueError("need n_classes >= 2 and n >= 2 * n_classes")
    if separation <= 0 or noise < 0:
        raise ValueError("separation must be positive and noise non-negative")
    if latent_dim < n_classes:
        raise ValueError(
            f"cannot place {n_classes} prototypes {separation} apart along orthogonal "
            f"directions in latent dimension {latent_dim}"
        )
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((latent_dim, n_classes)))
    prototypes = q * (separation / np.sqrt(2.0))

    labels = np.zeros((n_classes, n))
    if label_mode == "single":
        cls = rng.permutation(np.arange(n) % n_classes)
        labels[cls, np.arange(n)] = 1.0
    elif label_mode == "multi":
        counts = rng.integers(1, min(3, n_classes) + 1, size=n)
        for j, c in enumerate(counts):
            labels[rng.choice(n_classes, size=c, replace=False), j] = 1.0
    else:
        raise ValueError(f"label_mode must be 'single' or 'multi', got {label_mode!r}")

    latent = (prototypes @ labels) / labels.sum(axis=0)
    latent = latent + noise * rng.standard_normal(latent.shape)
    image_dim, text_dim = dims
    A_i = rng.standard_normal((image_dim, latent_dim)) / np.sqrt(latent_dim)
    A_t = rng.standard_normal((text_dim, latent_dim)) / np.sqrt(latent_dim)
    xi = np.tanh(A_i @ latent + noise * rng.standard_normal((image_dim, n)))
    xt = np.tanh(A_t @ latent + noise * rng.standard_normal((text_dim, n)))
    return Dataset(xi, xt, labels, None, seed, latent)


def split(dataset: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> Dataset:
    """Tag every column as train / validation / query.

    Sizes are ``floor(f * N)`` with leftovers handed out by largest remainder,
    so an 80/10/10 split of 100 points is exactly (80, 10, 10). Columns are
    not reordered, so pairing across ``xi``, ``xt`` and ``labels`` is intact.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    n = dataset.n
    exact = fr * n
    sizes = np.floor(exact).astype(int)
    for j in np.argsort(-(exact - sizes), kind="stable")[: n - sizes.sum()]:
        sizes[j] += 1
    order = np.random.default_rng(seed).permutation(n)
    tags = np.empty(n, dtype="<U10")
    start = 0
    for name, size in zip(SPLITS, sizes):
        tags[order[start : start + size]] = name
        start += size
    return replace(dataset, tags=tags)


def save_dataset(dataset: Dataset, directory, fmt: str = "bin") -> None:
    os.makedirs(directory, exist_ok=True)
    ext = "csv" if fmt == "csv" else "bin"
    files = {}
    for name in ("xi", "xt", "labels"):
        files[name] = f"{name}.{ext}"
        write_matrix(os.path.join(directory, files[name]), getattr(dataset, name), ext)
    manifest = {
        "format": "spdq-dataset-1",
        "files": files,
        "dims": {"image": dataset.xi.shape[0], "text": dataset.xt.shape[0]},
        "n_classes": dataset.n_classes,
        "n": dataset.n,
        "seed": dataset.seed,
        "tags": None if dataset.tags is None else dataset.tags.tolist(),
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True)


def load_dataset(directory) -> Dataset:
    path = os.path.join(directory, "manifest.json")
    if not os.path.exists(path):
        raise MissingArtifactError(f"no dataset manifest at {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "spdq-dataset-1":
        raise SchemaError(f"{path}: not a dataset manifest")
    arrays = {
        name: read_matrix(os.path.join(directory, manifest["files"][name]))
        for name in ("xi", "xt", "labels")
    }
    tags = manifest.get("tags")
    ds = Dataset(arrays["xi"], arrays["xt"], arrays["labels"], None if tags is None else np.array(tags), manifest.get("seed"))
    if ds.n != manifest["n"] or ds.n_classes != manifest["n_classes"]:
        raise SchemaError(f"{path}: manifest sizes disagree with the matrix files")
    return ds
