"""Command line for the full benchmark pipeline.

Subcommands cover each batch stage: partition a dataset, build router
models, compute (and cache) exact ground truth, evaluate recall versus
points probed, measure prediction error, and dump sketch-assumption
diagnostics. Every artifact gets a sidecar recording the checksums of its
inputs, and later stages refuse to mix artifacts from different runs.

Exit codes: 0 on success, 2 for configuration errors, 3 for data or file
format errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import evaluate as ev
from . import routers as rt
from .core import VectorSet
from .datasets import DataError, checksum_file, load_dataset, normalize_rows
from .partition import (
    Partitioning,
    default_shard_count,
    fit_kmeans,
    load_partitioning,
    save_partitioning,
    MODES,
)

DEFAULT_DELTA = 0.8
DEFAULT_SCANN_T = 0.5
CACHE_ENV = "SHARDROUTE_CACHE"


class ConfigError(Exception):
    """Bad flags, bad config file, or artifacts that do not belong together."""


# --- config handling ------------------------------------------------------


def _load_config_file(path) -> Dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _resolve(args: argparse.Namespace, defaults: Dict) -> Dict:
    """Merge flag values over config-file values over defaults.

    Flags parse with default None so absence is detectable; a config file
    key that no flag of this subcommand knows is an error.
    """
    cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        out[key] = flag_val if flag_val is not None else cfg.get(key, default)
    return out


def _require(cfg: Dict, key: str):
    if cfg[key] is None:
        raise ConfigError(f"missing required option --{key.replace('_', '-')}")
    return cfg[key]


# --- router specs ---------------------------------------------------------

_SPEC_RE = re.compile(r"([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_router_spec(spec: str) -> Tuple[str, Dict]:
    """Parse strings like ``optimist(t=4,delta=0.8)`` into (kind, params)."""
    m = _SPEC_RE.fullmatch(spec.strip())
    if not m:
        raise ConfigError(f"cannot parse router spec {spec!r}")
    kind, arg_str = m.group(1), m.group(2)
    params: Dict = {}
    if arg_str:
        for part in arg_str.split(","):
            if "=" not in part:
                raise ConfigError(f"router spec {spec!r}: expected key=value, got {part!r}")
            key, val = (s.strip() for s in part.split("=", 1))
            params[key] = val

    def _take(key, conv, default=None, required=False):
        if key in params:
            raw = params.pop(key)
            try:
                return conv(raw)
            except ValueError:
                raise ConfigError(f"router spec {spec!r}: bad value for {key}: {raw!r}")
        if required:
            raise ConfigError(f"router spec {spec!r}: missing required parameter {key}")
        return default

    if kind == "mean" or kind == "normalized_mean":
        out = (kind, {})
    elif kind == "scann":
        out = (kind, {"threshold": _take("T", float, DEFAULT_SCANN_T)})
    elif kind == "subpartition":
        out = (
            kind,
            {
                "t": _take("t", int, required=True),
                "stat": _take("stat", str, "max"),
            },
        )
    elif kind in ("optimist", "optimist_gaussian"):
        out = (
            kind,
            {
                "t": _take("t", int, required=True),
                "delta": _take("delta", float, DEFAULT_DELTA),
            },
        )
    else:
        raise ConfigError(f"unknown router kind {kind!r}")
    if params:
        raise ConfigError(f"router spec {spec!r}: unknown parameters {sorted(params)}")
    if out[1].get("stat") not in (None, "max", "mean"):
        raise ConfigError(f"router spec {spec!r}: stat must be max or mean")
    return out


def build_router(
    data: VectorSet, partitioning: Partitioning, spec: str, seed: int = 0
) -> rt.RouterModel:
    kind, params = parse_router_spec(spec)
    try:
        if kind == "mean":
            return rt.build_mean(data, partitioning)
        if kind == "normalized_mean":
            return rt.build_normalized_mean(data, partitioning)
        if kind == "scann":
            return rt.build_scann(data, partitioning, threshold=params["threshold"])
        if kind == "subpartition":
            return rt.build_subpartition(
                data, partitioning, t=params["t"], seed=seed, stat=params["stat"]
            )
        return rt.build_optimist(
            data,
            partitioning,
            t=params["t"],
            delta=params["delta"],
            gaussian=kind == "optimist_gaussian",
        )
    except ValueError as e:
        raise ConfigError(f"router spec {spec!r}: {e}")


def router_filename(name: str) -> str:
    slug = name.replace("(", "_").replace(")", "").replace(",", "_")
    return f"{slug}.router"


# --- sidecars -------------------------------------------------------------


def _write_sidecar(path, meta: Dict) -> None:
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_sidecar(path) -> Optional[Dict]:
    meta_path = f"{path}.meta.json"
    if not os.path.exists(meta_path):
        return None
    with open(meta_path) as fh:
        return json.load(fh)


def _check_sidecar(path, expectations: Dict, what: str) -> None:
    meta = _read_sidecar(path)
    if meta is None:
        print(f"warning: {path} has no sidecar; cannot verify {what}", file=sys.stderr)
        return
    for key, want in expectations.items():
        have = meta.get(key)
        if have is not None and have != want:
            raise ConfigError(
                f"{path}: {key} is {have}, expected {want}; "
                f"this {what} was produced from different inputs"
            )


# --- shared loading -------------------------------------------------------


def _load_vectors(manifest_path, normalize_override: Optional[bool] = None):
    data, manifest = load_dataset(manifest_path)
    if normalize_override and not manifest.normalize:
        if data.count > 0:
            data = VectorSet(normalize_rows(data.vectors).astype(np.float32))
    return data, manifest


def _parse_ell_grid(text: Optional[str], C: int):
    if text is None or text == "auto":
        return None
    if text == "all":
        return np.arange(1, C + 1, dtype=np.int64)
    try:
        vals = sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise ConfigError(f"bad ell grid {text!r}; use 'auto', 'all', or ints")
    if not vals:
        raise ConfigError("ell grid is empty")
    if vals[0] < 1 or vals[-1] > C:
        raise ConfigError(f"ell grid must lie in [1, {C}]")
    return np.asarray(vals, dtype=np.int64)


def _cache_dir(value: Optional[str]) -> str:
    return value or os.environ.get(CACHE_ENV) or ".shardroute_cache"


def _limit_workers(workers: Optional[int]):
    if workers is None:
        return
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(workers)
    except ImportError:
        print("warning: threadpoolctl not installed; --workers ignored", file=sys.stderr)


def _parse_k_list(value) -> List[int]:
    if isinstance(value, int):
        return [value]
    if isinstance(value, list):
        ks = [int(v) for v in value]
    else:
        try:
            ks = [int(v) for v in str(value).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad k list {value!r}; use ints like 1,10,100")
    if not ks or any(k < 1 for k in ks):
        raise ConfigError("k values must be >= 1")
    return sorted(set(ks))


def _cached_ground_truth(
    data: VectorSet,
    queries: VectorSet,
    ks: List[int],
    cache_dir: str,
    data_ck: str,
    query_ck: str,
    normalized: bool,
    refresh: bool = False,
) -> Dict[int, Tuple[ev.GroundTruth, str, bool]]:
    """Ground truth per requested k, from cache where possible.

    Misses are computed once at max(k) and prefix-sliced: under the fixed
    (-score, id) order, the top-k list is a prefix of the top-k' list for
    k <= k'.
    """
    os.makedirs(cache_dir, exist_ok=True)
    tag = "norm" if normalized else "raw"
    out: Dict[int, Tuple[ev.GroundTruth, str, bool]] = {}
    missing = []
    for k in ks:
        path = os.path.join(cache_dir, f"gt_{data_ck}_{query_ck}_k{k}_{tag}.npz")
        meta = {
            "dataset_checksum": data_ck,
            "queries_checksum": query_ck,
            "k": k,
            "normalized_queries": normalized,
        }
        if os.path.exists(path) and not refresh:
            truth, stored = ev.load_ground_truth(path)
            if stored != meta:
                raise ConfigError(
                    f"{path}: cached ground truth was built with {stored}, wanted "
                    f"{meta}; use --refresh-cache or a different cache dir"
                )
            out[k] = (truth, path, True)
        else:
            missing.append((k, path, meta))
    if missing:
        kmax = max(k for k, _, _ in missing)
        full = ev.ground_truth(data, queries, kmax)
        for k, path, meta in missing:
            truth = ev.GroundTruth(ids=full.ids[:, :k].copy(), scores=full.scores[:, :k].copy())
            ev.save_ground_truth(truth, path, meta)
            out[k] = (truth, path, False)
    return out


# --- subcommands ----------------------------------------------------------


def cmd_partition(args) -> int:
    cfg = _resolve(
        args,
        {
            "dataset": None,
            "shards": 0,
            "mode": "spherical",
            "iters": 25,
            "seed": 0,
            "out": None,
        },
    )
    _limit_workers(getattr(args, "workers", None))
    dataset = _require(cfg, "dataset")
    out = _require(cfg, "out")
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if cfg["iters"] < 1:
        raise ConfigError("iters must be >= 1")
    data, manifest = _load_vectors(dataset)
    if data.count < 1:
        raise DataError(f"{manifest.path}: dataset is empty")
    C = int(cfg["shards"]) or default_shard_count(data.count)
    if not (1 <= C <= data.count):
        raise ConfigError(f"shards must be in [1, {data.count}], got {C}")
    part = fit_kmeans(data, C, iters=int(cfg["iters"]), seed=int(cfg["seed"]), mode=cfg["mode"])
    save_partitioning(part, out)
    _write_sidecar(
        out,
        {
            "dataset_checksum": manifest.checksum,
            "shards": C,
            "mode": cfg["mode"],
            "iters": int(cfg["iters"]),
            "seed": int(cfg["seed"]),
        },
    )
    sizes = part.sizes()
    print(
        f"partitioned {data.count} points into {C} shards "
        f"(sizes min={sizes.min()} mean={sizes.mean():.1f} max={sizes.max()}); "
        f"wrote {out}"
    )
    return 0


def cmd_build(args) -> int:
    cfg = _resolve(
        args,
        {
            "dataset": None,
            "partition": None,
            "routers": None,
            "out_dir": "models",
            "seed": 0,
        },
    )
    _limit_workers(getattr(args, "workers", None))
    dataset = _require(cfg, "dataset")
    part_path = _require(cfg, "partition")
    specs = _require(cfg, "routers")
    if isinstance(specs, str):
        specs = [s for s in specs.split(";") if s.strip()]
    if not specs:
        raise ConfigError("no routers requested")
    data, manifest = _load_vectors(dataset)
    part = load_partitioning(part_path)
    _check_sidecar(part_path, {"dataset_checksum": manifest.checksum}, "partitioning")
    part_ck = checksum_file(part_path)
    os.makedirs(cfg["out_dir"], exist_ok=True)
    for spec in specs:
        model = build_router(data, part, spec, seed=int(cfg["seed"]))
        path = os.path.join(cfg["out_dir"], router_filename(model.name))
        rt.save_router(model, path)
        _write_sidecar(
            path,
            {
                "router": model.name,
                "dataset_checksum": manifest.checksum,
                "partition_checksum": part_ck,
                "seed": int(cfg["seed"]),
            },
        )
        flagged = "" if model.fallback is None else f", {int(model.fallback.sum())} fallback shards"
        print(f"built {model.name} -> {path}{flagged}")
    return 0


def cmd_ground_truth(args) -> int:
    cfg = _resolve(
        args,
        {
            "dataset": None,
            "queries": None,
            "k": 100,
            "normalize_queries": True,
            "cache_dir": None,
            "refresh_cache": False,
        },
    )
    _limit_workers(getattr(args, "workers", None))
    data, manifest = _load_vectors(_require(cfg, "dataset"))
    queries, qmanifest = _load_vectors(
        _require(cfg, "queries"), normalize_override=cfg["normalize_queries"]
    )
    ks = _parse_k_list(cfg["k"])
    if ks[-1] > data.count:
        raise ConfigError(f"k={ks[-1]} exceeds dataset size {data.count}")
    normalized = bool(cfg["normalize_queries"]) or qmanifest.normalize
    results = _cached_ground_truth(
        data,
        queries,
        ks,
        _cache_dir(cfg["cache_dir"]),
        manifest.checksum,
        qmanifest.checksum,
        normalized,
        refresh=bool(cfg["refresh_cache"]),
    )
    for k in ks:
        _, path, hit = results[k]
        print(f"ground truth for {queries.count} queries at k={k}: "
              f"{'cache hit' if hit else 'computed'} ({path})")
    return 0


def _load_eval_inputs(cfg):
    data, manifest = _load_vectors(_require(cfg, "dataset"))
    queries, qmanifest = _load_vectors(
        _require(cfg, "queries"), normalize_override=cfg["normalize_queries"]
    )
    if queries.count < 1:
        raise DataError(f"{qmanifest.path}: query set is empty")
    if queries.dim != data.dim:
        raise DataError(
            f"query dim {queries.dim} does not match dataset dim {data.dim}"
        )
    part_path = _require(cfg, "partition")
    part = load_partitioning(part_path)
    if part.count != data.count or part.dim != data.dim:
        raise ConfigError(
            f"{part_path}: partitioning shape ({part.count}, {part.dim}) does not "
            f"match dataset ({data.count}, {data.dim})"
        )
    _check_sidecar(part_path, {"dataset_checksum": manifest.checksum}, "partitioning")
    part_ck = checksum_file(part_path)
    models = []
    for mp in _require(cfg, "models"):
        model = rt.load_router(mp)
        if model.d != data.dim or model.C != part.C:
            raise ConfigError(
                f"{mp}: model shape (C={model.C}, d={model.d}) does not match "
                f"partitioning (C={part.C}, d={data.dim})"
            )
        _check_sidecar(
            mp,
            {"dataset_checksum": manifest.checksum, "partition_checksum": part_ck},
            "router model",
        )
        models.append(model)
    return data, manifest, queries, qmanifest, part, models


def cmd_evaluate(args) -> int:
    cfg = _resolve(
        args,
        {
            "dataset": None,
            "queries": None,
            "partition": None,
            "models": None,
            "k": "1,10,100",
            "ell_grid": None,
            "normalize_queries": True,
            "cache_dir": None,
            "refresh_cache": False,
            "with_pred_error": False,
            "out_dir": ".",
            "name": "report",
        },
    )
    _limit_workers(getattr(args, "workers", None))
    data, manifest, queries, qmanifest, part, models = _load_eval_inputs(cfg)
    ks = _parse_k_list(cfg["k"])
    if ks[-1] > data.count:
        raise ConfigError(f"k={ks[-1]} exceeds dataset size {data.count}")
    grid = _parse_ell_grid(cfg["ell_grid"], part.C)
    normalized = bool(cfg["normalize_queries"]) or qmanifest.normalize
    truths = _cached_ground_truth(
        data,
        queries,
        ks,
        _cache_dir(cfg["cache_dir"]),
        manifest.checksum,
        qmanifest.checksum,
        normalized,
        refresh=bool(cfg["refresh_cache"]),
    )
    tables = None
    if cfg["with_pred_error"]:
        tables = [
            ev.prediction_error(m, part, data, queries, ell_grid=grid) for m in models
        ]
    part_ck = checksum_file(cfg["partition"])
    for k in ks:
        truth, gt_path, _ = truths[k]
        curves = [ev.recall_curve(m, part, queries, truth, ell_grid=grid) for m in models]
        config_echo = {
            "dataset_checksum": manifest.checksum,
            "queries_checksum": qmanifest.checksum,
            "partition_checksum": part_ck,
            "k": k,
            "ell_grid": None if grid is None else [int(v) for v in grid],
            "normalize_queries": normalized,
            "routers": [m.name for m in models],
            "ground_truth": os.path.basename(gt_path),
        }
        name = cfg["name"] if len(ks) == 1 else f"{cfg['name']}_k{k}"
        csv_path, json_path = ev.emit_report(
            curves, tables, out_dir=cfg["out_dir"], name=name, config=config_echo
        )
        print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_predict_error(args) -> int:
    cfg = _resolve(
        args,
        {
            "dataset": None,
            "queries": None,
            "partition": None,
            "models": None,
            "ell_grid": None,
            "normalize_queries": True,
            "out": None,
        },
    )
    _limit_workers(getattr(args, "workers", None))
    out = _require(cfg, "out")
    data, manifest, queries, qmanifest, part, models = _load_eval_inputs(cfg)
    grid = _parse_ell_grid(cfg["ell_grid"], part.C)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["router", "l", "pred_err_mean", "skipped"])
        for model in models:
            table = ev.prediction_error(model, part, data, queries, ell_grid=grid)
            for j, ell in enumerate(table.ell):
                err = table.mean_error[j]
                err_s = "" if np.isnan(err) else format(float(err), ".10g")
                writer.writerow([table.router, str(int(ell)), err_s, str(int(table.skipped[j]))])
    print(f"wrote {out}")
    return 0


def cmd_diagnostics(args) -> int:
    cfg = _resolve(
        args,
        {
            "dataset": None,
            "partition": None,
            "t": None,
            "out": None,
        },
    )
    _limit_workers(getattr(args, "workers", None))
    from .sketch import assumption_diagnostics, compute_moments

    out = _require(cfg, "out")
    t = int(_require(cfg, "t"))
    data, manifest = _load_vectors(_require(cfg, "dataset"))
    part_path = _require(cfg, "partition")
    part = load_partitioning(part_path)
    if part.count != data.count or part.dim != data.dim:
        raise ConfigError(f"{part_path}: partitioning does not match dataset")
    _check_sidecar(part_path, {"dataset_checksum": manifest.checksum}, "partitioning")
    if not (0 <= t < part.dim):
        raise ConfigError(f"t must be in [0, {part.dim}) for diagnostics")
    lines = ["shard,n,lambda_t_plus_1,diag_ratio"]
    excluded = 0
    for i in range(part.C):
        ids = part.shards[i]
        if ids.size < 2:
            excluded += 1
            continue
        moments = compute_moments(data.vectors[ids])
        try:
            diag = assumption_diagnostics(moments, t)
        except ValueError:
            excluded += 1
            continue
        lines.append(
            f"{i},{ids.size},{format(diag.lambda_t_plus_1, '.10g')},"
            f"{format(diag.diag_ratio, '.10g')}"
        )
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out} ({part.C - excluded} shards, {excluded} excluded as degenerate)")
    return 0


# --- parser ---------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--workers", type=int, help="cap BLAS thread count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shardroute",
        description="Cluster a vector dataset, route queries optimistically, measure recall.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="fit a k-means partitioning")
    _add_common(p)
    p.add_argument("--dataset", help="dataset manifest JSON")
    p.add_argument("--shards", type=int, help="shard count C (default: round(sqrt(m)))")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output partitioning file")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("build", help="build router models")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--partition")
    p.add_argument(
        "--routers",
        nargs="+",
        help="router specs, e.g. mean scann(T=0.5) optimist(t=4,delta=0.8)",
    )
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("ground-truth", help="compute and cache exact top-k")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--queries")
    p.add_argument("--k", help="k or comma list, e.g. 1,10,100")
    p.add_argument(
        "--no-normalize-queries",
        dest="normalize_queries",
        action="store_const",
        const=False,
    )
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--refresh-cache", dest="refresh_cache", action="store_const", const=True)
    p.set_defaults(func=cmd_ground_truth)

    p = sub.add_parser("evaluate", help="recall vs points probed for router models")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--queries")
    p.add_argument("--partition")
    p.add_argument("--models", nargs="+", help="router model files")
    p.add_argument("--k", help="k or comma list, e.g. 1,10,100")
    p.add_argument("--ell-grid", dest="ell_grid", help="'auto', 'all', or comma ints")
    p.add_argument(
        "--no-normalize-queries",
        dest="normalize_queries",
        action="store_const",
        const=False,
    )
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--refresh-cache", dest="refresh_cache", action="store_const", const=True)
    p.add_argument(
        "--with-pred-error",
        dest="with_pred_error",
        action="store_const",
        const=True,
        help="also compute prediction error (extra full scan)",
    )
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--name", help="report base name")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict-error", help="router score vs true shard maxima")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--queries")
    p.add_argument("--partition")
    p.add_argument("--models", nargs="+")
    p.add_argument("--ell-grid", dest="ell_grid")
    p.add_argument(
        "--no-normalize-queries",
        dest="normalize_queries",
        action="store_const",
        const=False,
    )
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_predict_error)

    p = sub.add_parser("diagnostics", help="per-shard sketch assumption diagnostics")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--partition")
    p.add_argument("--t", type=int, help="sketch rank to diagnose")
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_diagnostics)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        # Binary artifact loaders report malformed files as ValueError.
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
