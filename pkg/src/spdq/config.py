"""Hyperparameters and the JSON run configuration."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

from .errors import SchemaError


@dataclass
class Hyperparams:
    alpha: float = 1.0
    beta: float = 1.0
    lam: float = 0.01
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 128
    M: int = 2
    K_d: int = 256
    d_z: int | None = None  # None means d_z = d_s
    ridge: float = 1e-6
    icm_sweeps: int = 3
    icm_restarts: int = 1
    outer_iters: int = 20
    epochs_per_outer: int = 1
    tol: float = 1e-5
    patience: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "beta", "lam", "learning_rate", "momentum", "ridge", "tol"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise SchemaError(f"{name} must be a finite non-negative number, got {v!r}")
        if self.K_d < 2 or self.K_d > 256 or self.K_d & (self.K_d - 1):
            raise SchemaError(f"K_d must be a power of two in [2, 256], got {self.K_d}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise SchemaError(f"batch_size must be even and >= 2, got {self.batch_size}")
        for name in ("M", "icm_sweeps", "icm_restarts", "epochs_per_outer", "patience"):
            if getattr(self, name) < 1:
                raise SchemaError(f"{name} must be >= 1")
        if self.outer_iters < 0:
            raise SchemaError("outer_iters must be >= 0")

    @property
    def bits(self) -> int:
        return self.M * int(math.log2(self.K_d))


@dataclass
class EncoderConfig:
    hidden: tuple[int, ...] = (256, 256)
    text_hidden: tuple[int, ...] | None = None
    d_s: int = 256
    d_p: int = 48


@dataclass
class KernelConfig:
    # bandwidth = median squared distance * scale; uniform weights
    scales: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class EvalConfig:
    R: int = 50
    n_grid: tuple[int, ...] = (1, 5, 10, 20, 50, 100)
    map_norm: str = "all"
    train_fraction: float = 0.8
    validation_fraction: float = 0.1
    query_fraction: float = 0.1

    def __post_init__(self):
        if self.map_norm not in ("all", "min"):
            raise SchemaError(f"map_norm must be 'all' or 'min', got {self.map_norm!r}")
        if self.R < 1 or not self.n_grid or min(self.n_grid) < 1:
            raise SchemaError("R and every n_grid entry must be >= 1")
        fr = (self.train_fraction, self.validation_fraction, self.query_fraction)
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise SchemaError(f"split fractions must be non-negative and sum to 1, got {fr}")


@dataclass
class RunConfig:
    hyper: Hyperparams = field(default_factory=Hyperparams)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.hyper.seed

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise SchemaError("config must be a JSON object")
        sections = {"hyper": Hyperparams, "encoder": EncoderConfig, "kernel": KernelConfig, "eval": EvalConfig}
        unknown = set(doc) - set(sections) - {"paths", "seed"}
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        built = {}
        for key, klass in sections.items():
            built[key] = _build_section(klass, doc.get(key, {}), key)
        paths = doc.get("paths", {})
        if not isinstance(paths, dict) or not all(isinstance(v, str) for v in paths.values()):
            raise SchemaError("paths must map names to strings")
        cfg = cls(paths=dict(paths), **built)
        if "seed" in doc:
            cfg.hyper.seed = _as_int(doc["seed"], "seed")
        return cfg


def _as_int(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{name} must be an integer, got {v!r}")
    return v


def _build_section(klass, values, section):
    if not isinstance(values, dict):
        raise SchemaError(f"{section} must be a JSON object")
    known = {f.name: f for f in fields(klass)}
    unknown = set(values) - set(known)
    if unknown:
        raise SchemaError(f"unknown keys in {section}: {sorted(unknown)}")
    kwargs = {}
    for name, value in values.items():
        default = known[name].default
        if isinstance(default, tuple) or (name == "text_hidden" and value is not None):
            if not isinstance(value, list):
                raise SchemaError(f"{section}.{name} must be a list")
            value = tuple(value)
        elif isinstance(default, bool):
            pass
        elif isinstance(default, int) and not (name == "d_z"):
            value = _as_int(value, f"{section}.{name}")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaError(f"{section}.{name} must be a number, got {value!r}")
            value = float(value)
        elif name == "d_z" and value is not None:
            value = _as_int(value, f"{section}.{name}")
        kwargs[name] = value
    try:
        return klass(**kwargs)
    except TypeError as exc:
        raise SchemaError(f"{section}: {exc}") from exc


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(doc)
