"""Command-line entry point: ``spdq {gen,train,index,query,eval,sweep}``.

Every command is deterministic given its inputs and ``--seed``. Logs go to
stderr as ``key=value`` lines; metrics are written only to CSV files, each of
which starts with a ``# config_hash=...`` comment line followed by a header.
On failure a single ``error=<category> message=...`` line is printed and the
process exits with status 2.

Model directory layout (written by ``train``)::

    config.json  encoder.bin  encoder.json  history.csv  quant/

Index directory layout (written by ``index``)::

    codes.bin  D.bin  ids.csv  index.json
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .config import Hyperparams, RunConfig, load_config
from .data import generate_synthetic, load_dataset, save_dataset, split
from .encoders import load_encoder, save_encoder
from .errors import DimensionError, MissingArtifactError, SchemaError, SPDQError
from .numerics import read_codes, read_matrix, write_codes, write_matrix
from .pipeline import build_index, evaluate, rank_queries
from .quantizer import load_quant_model, save_quant_model
from .search import SearchIndex, write_ranking
from .trainer import train, write_history

log = logging.getLogger("spdq")


def kv(**fields) -> str:
    return " ".join(f"{k}={v}" for k, v in fields.items())


def thread_limit():
    """Cap BLAS worker threads when ``SPDQ_THREADS`` is set."""
    raw = os.environ.get("SPDQ_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise SchemaError(f"SPDQ_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise SchemaError(f"SPDQ_THREADS must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


# ---------------------------------------------------------------- config


def resolve_config(args, model_dir: str | None = None) -> RunConfig:
    """``--config`` if given, else the config stored with the model, else defaults.

    ``--seed`` overrides whatever seed the chosen config carries.
    """
    if args.config:
        if not os.path.exists(args.config):
            raise MissingArtifactError(f"no config file at {args.config}")
        cfg = load_config(args.config)
    elif model_dir and os.path.exists(os.path.join(model_dir, "config.json")):
        cfg = load_config(os.path.join(model_dir, "config.json"))
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg.hyper.seed = args.seed
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def hash_line(cfg: RunConfig) -> str:
    return f"config_hash={cfg.hash()}"


def write_csv(path, cfg: RunConfig, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {hash_line(cfg)}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- artifacts


def load_model(model_dir):
    if not os.path.isdir(model_dir):
        raise MissingArtifactError(f"no model directory at {model_dir}")
    params, manifest = load_encoder(
        os.path.join(model_dir, "encoder.bin"), os.path.join(model_dir, "encoder.json")
    )
    quant = load_quant_model(os.path.join(model_dir, "quant"))
    return params, quant, manifest


def check_compatible(params, quant, ds) -> None:
    dims = {"image": ds.xi.shape[0], "text": ds.xt.shape[0]}
    if dims != params.input_dims:
        raise DimensionError(f"dataset feature dims {dims} differ from the model's {params.input_dims}")
    if ds.n_classes != params.n_classes or quant.Z.shape[1] != ds.n_classes:
        raise DimensionError(f"dataset has {ds.n_classes} classes, model expects {params.n_classes}")


def database_of(ds):
    """Train + validation columns and their positions in the full dataset."""
    if ds.tags is None:
        raise SchemaError("dataset has no split tags; regenerate it with `spdq gen`")
    cols = np.flatnonzero(np.isin(ds.tags, ("train", "validation")))
    return ds.subset(cols), cols


def save_index(index: SearchIndex, directory, cfg: RunConfig) -> None:
    os.makedirs(directory, exist_ok=True)
    write_codes(os.path.join(directory, "codes.bin"), index.codes, index.K_d)
    write_matrix(os.path.join(directory, "D.bin"), index.D, "bin")
    write_csv(os.path.join(directory, "ids.csv"), cfg, ["position", "id"],
              [[p, int(i)] for p, i in enumerate(index.ids)])
    meta = {"format": "spdq-index-1", "modality": index.modality, "K_d": index.K_d, "M": index.M,
            "n": len(index), "config_hash": cfg.hash()}
    with open(os.path.join(directory, "index.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_index(directory) -> SearchIndex:
    path = os.path.join(directory, "index.json")
    if not os.path.exists(path):
        raise MissingArtifactError(f"no index manifest at {path}")
    with open(path) as fh:
        meta = json.load(fh)
    if meta.get("format") != "spdq-index-1":
        raise SchemaError(f"{path}: not an index manifest")
    codes, K_d = read_codes(os.path.join(directory, "codes.bin"))
    D = read_matrix(os.path.join(directory, "D.bin"), "bin")
    with open(os.path.join(directory, "ids.csv")) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))][1:]
    ids = np.array([int(r[1]) for r in rows], dtype=np.int64)
    return SearchIndex(D, codes, K_d, meta["modality"], ids)


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> None:
    cfg = resolve_config(args)
    dims = tuple(int(d) for d in args.dims.split(","))
    if len(dims) != 2:
        raise SchemaError(f"--dims needs two comma-separated sizes, got {args.dims!r}")
    ds = generate_synthetic(
        args.classes, args.n, dims=dims, separation=args.separation, noise=args.noise,
        label_mode=args.label_mode, seed=cfg.seed, latent_dim=max(args.latent_dim, args.classes),
    )
    ev = cfg.eval
    ds = split(ds, (ev.train_fraction, ev.validation_fraction, ev.query_fraction), seed=cfg.seed)
    save_dataset(ds, args.out, args.format)
    log.info(kv(event="gen", out=args.out, n=ds.n, classes=ds.n_classes, seed=cfg.seed))


def cmd_train(args) -> None:
    cfg = resolve_config(args)
    ds = load_dataset(args.data)
    train_set = ds.subset("train") if ds.tags is not None else ds
    state = train(train_set, cfg.hyper, cfg.encoder, cfg.kernel)
    os.makedirs(args.out, exist_ok=True)
    save_config(cfg, os.path.join(args.out, "config.json"))
    save_encoder(state.params, os.path.join(args.out, "encoder.bin"), os.path.join(args.out, "encoder.json"),
                 extra={"config_hash": cfg.hash(), "n_train": train_set.n})
    save_quant_model(state.quant, os.path.join(args.out, "quant"))
    write_history(state.history, os.path.join(args.out, "history.csv"), hash_line(cfg))
    last = state.history[-1]
    log.info(kv(event="train", out=args.out, outer=state.outer, steps=state.step,
                O=f"{last['O']:.6g}", O_q=f"{last['O_q']:.6g}", config_hash=cfg.hash()))


def cmd_index(args) -> None:
    cfg = resolve_config(args, args.model)
    params, quant, manifest = load_model(args.model)
    ds = load_dataset(args.data)
    check_compatible(params, quant, ds)
    db, cols = database_of(ds)
    known = db.tags == "train"
    if known.sum() != quant.codes.shape[0]:
        raise DimensionError(
            f"dataset has {known.sum()} training items but the model holds {quant.codes.shape[0]} codes"
        )
    index = build_index(params, quant, db, args.modality, cfg.hyper.icm_sweeps, ids=cols, known=known)
    save_index(index, args.out, cfg)
    log.info(kv(event="index", out=args.out, modality=args.modality, n=len(index), M=index.M, K_d=index.K_d))


def cmd_query(args) -> None:
    cfg = resolve_config(args, args.model)
    params, quant, _ = load_model(args.model)
    index = load_index(args.index)
    ds = load_dataset(args.data)
    check_compatible(params, quant, ds)
    if index.D.shape != quant.D.shape or not np.array_equal(index.D, quant.D):
        raise SchemaError("index dictionaries do not belong to this model")
    modality = args.modality or ("text" if index.modality == "image" else "image")
    if args.item is not None:
        items = np.array([int(v) for v in args.item.split(",")], dtype=np.int64)
        if items.min() < 0 or items.max() >= ds.n:
            raise DimensionError(f"--item must index into the {ds.n} dataset columns")
    else:
        if ds.tags is None:
            raise SchemaError("dataset has no split tags; pass --item")
        items = np.flatnonzero(ds.tags == "query")
    topn = min(args.topn, len(index))
    ids, scores = rank_queries(params, quant, ds.features(modality)[:, items], modality, index, topn)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    if len(items) == 1:
        write_ranking(args.out, ids[0], scores[0], hash_line(cfg))
    else:
        write_ranking(args.out, ids, scores, hash_line(cfg), query_ids=items)
    log.info(kv(event="query", out=args.out, queries=len(items), topn=topn, modality=modality))


def write_eval(results, cfg: RunConfig, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "ap.csv"), cfg, ["direction", "query", "ap"],
              [[r.name, q, fmt(a)] for r in results for q, a in enumerate(r.ap) if not np.isnan(a)])
    write_csv(os.path.join(out_dir, "map.csv"), cfg,
              ["direction", "R", "norm", "map", "map_all", "map_min", "excluded"],
              [[r.name, cfg.eval.R, cfg.eval.map_norm, fmt(r.map), fmt(r.map_all), fmt(r.map_min), r.excluded]
               for r in results])
    write_csv(os.path.join(out_dir, "topn.csv"), cfg, ["direction", "n", "precision"],
              [[r.name, int(n), fmt(p)] for r in results for n, p in r.topn])


def cmd_eval(args) -> None:
    cfg = resolve_config(args, args.model)
    if args.map_norm:
        cfg.eval.map_norm = args.map_norm
    params, quant, _ = load_model(args.model)
    ds = load_dataset(args.data)
    check_compatible(params, quant, ds)
    results = evaluate(params, quant, ds, cfg)
    write_eval(results, cfg, args.out)
    log.info(kv(event="eval", out=args.out, **{f"map_{r.name}": f"{r.map:.4f}" for r in results}))


def cmd_sweep(args) -> None:
    cfg = resolve_config(args)
    if args.map_norm:
        cfg.eval.map_norm = args.map_norm
    names = {f for f in Hyperparams.__dataclass_fields__ if f != "seed"}
    if args.param not in names:
        raise SchemaError(f"--param must be one of {sorted(names)}, got {args.param!r}")
    cast = float if isinstance(getattr(Hyperparams(), args.param), float) else int
    try:
        values = [cast(v) for v in args.values.split(",")]
    except ValueError:
        raise SchemaError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    ds = load_dataset(args.data)
    train_set = ds.subset("train")
    rows = []
    for v in values:
        run_cfg = RunConfig.from_dict(cfg.to_dict())
        run_cfg.hyper = replace(run_cfg.hyper, **{args.param: v})
        state = train(train_set, run_cfg.hyper, run_cfg.encoder, run_cfg.kernel)
        for r in evaluate(state.params, state.quant, ds, run_cfg):
            rows.append([args.param, v, r.name, run_cfg.hyper.bits, fmt(r.map), fmt(r.map_all), fmt(r.map_min)])
            log.info(kv(event="sweep", param=args.param, value=v, direction=r.name, map=f"{r.map:.4f}"))
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "sweep.csv"), cfg,
              ["param", "value", "direction", "bits", "map", "map_all", "map_min"], rows)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", required=True, help="output directory (or file for query)")

    p = argparse.ArgumentParser(prog="spdq", description="Cross-modal deep quantization toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic paired dataset")
    g.add_argument("--classes", type=int, default=5)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--dims", default="128,64", help="image,text feature sizes")
    g.add_argument("--separation", type=float, default=10.0)
    g.add_argument("--noise", type=float, default=0.3)
    g.add_argument("--latent-dim", type=int, default=32)
    g.add_argument("--label-mode", choices=("single", "multi"), default="single")
    g.add_argument("--format", choices=("bin", "csv"), default="bin")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", parents=[common], help="train both networks and the quantizer")
    t.add_argument("--data", required=True)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("index", parents=[common], help="encode the database into codes")
    i.add_argument("--model", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--modality", choices=("image", "text"), default="text")
    i.set_defaults(func=cmd_index)

    q = sub.add_parser("query", parents=[common], help="rank the index for one or more queries")
    q.add_argument("--model", required=True)
    q.add_argument("--index", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--item", help="comma-separated dataset columns to use as queries (default: query split)")
    q.add_argument("--modality", choices=("image", "text"), help="query modality (default: opposite of index)")
    q.add_argument("--topn", type=int, default=50)
    q.set_defaults(func=cmd_query)

    e = sub.add_parser("eval", parents=[common], help="MAP@R and topN-precision in both directions")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--map-norm", choices=("all", "min"))
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", parents=[common], help="retrain over values of one hyperparameter")
    s.add_argument("--data", required=True)
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--map-norm", choices=("all", "min"))
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        with thread_limit():
            args.func(args)
    except SPDQError as exc:
        print(kv(error=exc.category, message=json.dumps(str(exc))), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(kv(error="missing_file", message=json.dumps(str(exc))), file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(kv(error="schema_violation", message=json.dumps(str(exc))), file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(kv(error="invalid_input", message=json.dumps(str(exc))), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
