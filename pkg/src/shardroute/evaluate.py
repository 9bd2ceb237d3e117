"""Exact ground truth, recall-versus-probed curves, and prediction error.

Recall here is always measured against the cost that matters: the number
of points scanned, not the number of shards probed. Shards vary in size,
so two routers probing the same number of shards can do very different
amounts of work.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import VectorSet
from .partition import Partitioning
from .routers import RouterModel, score_batch

_GT_CHUNK = 64

# A shard whose true best score is this close to zero is skipped by the
# prediction-error metric (the relative error is undefined there).
PRED_ERR_EPS = 1e-9


@dataclass(frozen=True)
class GroundTruth:
    """Exact top-k ids and scores for each query, best first."""

    ids: np.ndarray
    scores: np.ndarray

    @property
    def nq(self) -> int:
        return int(self.ids.shape[0])

    @property
    def k(self) -> int:
        return int(self.ids.shape[1])


@dataclass(frozen=True)
class RecallCurve:
    """Mean recall and scan cost for one router over a grid of probe depths."""

    router: str
    k: int
    ell: np.ndarray
    points_probed_mean: np.ndarray
    recall_mean: np.ndarray
    recall_std: np.ndarray
    per_query_recall: np.ndarray
    per_query_probed: np.ndarray


@dataclass(frozen=True)
class PredictionErrorTable:
    """Mean relative error of router scores against true shard maxima.

    ``mean_error`` averages, over queries, the per-query mean of
    |score / true_max - 1| across the first ell probed shards;
    shards whose true max is within PRED_ERR_EPS of zero (and empty
    shards) are skipped and counted in ``skipped``. A grid entry with no
    usable shard anywhere is NaN.
    """

    router: str
    ell: np.ndarray
    mean_error: np.ndarray
    skipped: np.ndarray


def _top_k_row(scores: np.ndarray, k: int) -> np.ndarray:
    """Ids of the k best scores, ties broken by ascending id.

    Exact: every element tied with the k-th best is considered before the
    (-score, id) sort decides.
    """
    m = scores.shape[0]
    if k >= m:
        return np.lexsort((np.arange(m), -scores))[:k]
    kth = np.partition(scores, m - k)[m - k]
    cand = np.flatnonzero(scores >= kth)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order[:k]]


def ground_truth(data: VectorSet, queries: VectorSet, k: int) -> GroundTruth:
    """Exact top-k inner products by brute force, in float64."""
    m = data.count
    if not (1 <= k <= m):
        raise ValueError(f"k must be in [1, {m}], got {k}")
    if queries.count < 1:
        raise ValueError("need at least one query")
    if queries.dim != data.dim:
        raise ValueError(f"query dim {queries.dim} != dataset dim {data.dim}")
    Xt = np.asarray(data.vectors, dtype=np.float64).T
    ids = np.empty((queries.count, k), dtype=np.int64)
    scores = np.empty((queries.count, k), dtype=np.float64)
    for lo in range(0, queries.count, _GT_CHUNK):
        hi = min(lo + _GT_CHUNK, queries.count)
        S = np.asarray(queries.vectors[lo:hi], dtype=np.float64) @ Xt
        for r in range(hi - lo):
            top = _top_k_row(S[r], k)
            ids[lo + r] = top
            scores[lo + r] = S[r, top]
    return GroundTruth(ids=ids, scores=scores)


def recall(retrieved_ids, truth_ids) -> float:
    """|retrieved ∩ truth| / |truth|."""
    truth = np.asarray(truth_ids, dtype=np.int64)
    if truth.size == 0:
        raise ValueError("truth set is empty")
    hits = np.intersect1d(np.asarray(retrieved_ids, dtype=np.int64), truth).size
    return hits / truth.size


def default_ell_grid(C: int) -> np.ndarray:
    """Powers of two below C, plus C itself."""
    grid = []
    v = 1
    while v < C:
        grid.append(v)
        v *= 2
    grid.append(C)
    return np.asarray(grid, dtype=np.int64)


def recall_curve(
    model: RouterModel,
    partitioning: Partitioning,
    queries: VectorSet,
    truth: GroundTruth,
    ell_grid: Optional[Sequence[int]] = None,
) -> RecallCurve:
    """Recall at each probe depth, plus the points scanned to get there.

    Scanning the first ell probed shards and taking the top k equals, in
    true top-k membership, checking which truth ids live in those shards:
    any scanned point that outranks a true top-k point under the
    (-score, id) order is itself in the true top-k. So only shard
    membership is needed, never a rescan.
    """
    C = partitioning.C
    grid = default_ell_grid(C) if ell_grid is None else np.asarray(ell_grid, dtype=np.int64)
    if grid.size == 0 or grid.min() < 1 or grid.max() > C:
        raise ValueError(f"ell grid must lie in [1, {C}]")
    if truth.nq != queries.count:
        raise ValueError("ground truth does not match the query set")
    k = truth.k

    sizes = partitioning.sizes()
    scores = score_batch(model, queries.vectors)
    nq = queries.count
    truth_shards = partitioning.assignments[truth.ids].astype(np.int64)

    per_query_recall = np.empty((nq, grid.size), dtype=np.float64)
    per_query_probed = np.empty((nq, grid.size), dtype=np.float64)
    cols = np.arange(C)
    for qi in range(nq):
        order = np.lexsort((cols, -scores[qi]))
        rank_of = np.empty(C, dtype=np.int64)
        rank_of[order] = cols
        hits_at_rank = np.bincount(rank_of[truth_shards[qi]], minlength=C)
        cum_hits = np.cumsum(hits_at_rank)
        cum_points = np.cumsum(sizes[order])
        per_query_recall[qi] = cum_hits[grid - 1] / k
        per_query_probed[qi] = cum_points[grid - 1]

    return RecallCurve(
        router=model.name,
        k=k,
        ell=grid,
        points_probed_mean=per_query_probed.mean(axis=0),
        recall_mean=per_query_recall.mean(axis=0),
        recall_std=per_query_recall.std(axis=0),
        per_query_recall=per_query_recall,
        per_query_probed=per_query_probed,
    )


def shard_max_scores(
    data: VectorSet, partitioning: Partitioning, queries: VectorSet
) -> np.ndarray:
    """True best inner product per (query, shard); -inf for empty shards."""
    C = partitioning.C
    nq = queries.count
    keep = [i for i in range(C) if partitioning.shards[i].size > 0]
    perm = np.concatenate([partitioning.shards[i] for i in keep])
    counts = np.array([partitioning.shards[i].size for i in keep])
    starts = np.concatenate(([0], np.cumsum(counts[:-1])))
    Xp = np.asarray(data.vectors[perm], dtype=np.float64).T
    out = np.full((nq, C), -np.inf, dtype=np.float64)
    for lo in range(0, nq, _GT_CHUNK):
        hi = min(lo + _GT_CHUNK, nq)
        S = np.asarray(queries.vectors[lo:hi], dtype=np.float64) @ Xp
        out[lo:hi, keep] = np.maximum.reduceat(S, starts, axis=1)
    return out


def prediction_error(
    model: RouterModel,
    partitioning: Partitioning,
    data: VectorSet,
    queries: VectorSet,
    ell_grid: Optional[Sequence[int]] = None,
) -> PredictionErrorTable:
    """How tightly router scores track the true per-shard maxima."""
    C = partitioning.C
    grid = default_ell_grid(C) if ell_grid is None else np.asarray(ell_grid, dtype=np.int64)
    if grid.size == 0 or grid.min() < 1 or grid.max() > C:
        raise ValueError(f"ell grid must lie in [1, {C}]")
    if queries.count < 1:
        raise ValueError("need at least one query")

    scores = score_batch(model, queries.vectors)
    true_max = shard_max_scores(data, partitioning, queries)
    nq = queries.count
    cols = np.arange(C)

    cum_terms = np.empty((nq, C), dtype=np.float64)
    cum_used = np.empty((nq, C), dtype=np.int64)
    for qi in range(nq):
        order = np.lexsort((cols, -scores[qi]))
        tm = true_max[qi, order]
        usable = np.isfinite(tm) & (np.abs(tm) >= PRED_ERR_EPS)
        terms = np.zeros(C, dtype=np.float64)
        terms[usable] = np.abs(scores[qi, order][usable] / tm[usable] - 1.0)
        cum_terms[qi] = np.cumsum(terms)
        cum_used[qi] = np.cumsum(usable)

    used = cum_used[:, grid - 1]
    terms = cum_terms[:, grid - 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        per_query = np.where(used > 0, terms / np.maximum(used, 1), np.nan)
    have = ~np.isnan(per_query)
    counts = have.sum(axis=0)
    mean_error = np.full(grid.size, np.nan)
    nonzero = counts > 0
    mean_error[nonzero] = np.nansum(per_query[:, nonzero], axis=0) / counts[nonzero]
    skipped = (grid[None, :] - used).sum(axis=0)

    return PredictionErrorTable(
        router=model.name,
        ell=grid,
        mean_error=mean_error,
        skipped=skipped.astype(np.int64),
    )


# --- report emission ------------------------------------------------------

CSV_HEADER = "router,l,points_probed_mean,recall_mean,recall_std,pred_err_mean"


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def config_hash(config: Dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canon.encode(), digest_size=8).hexdigest()


def emit_report(
    curves: Sequence[RecallCurve],
    tables: Optional[Sequence[PredictionErrorTable]] = None,
    out_dir=".",
    name: str = "report",
    config: Optional[Dict] = None,
) -> Tuple[str, str]:
    """Write the CSV and JSON report files; returns their paths.

    The CSV holds one row per (router, probe depth); its pred_err_mean
    column is empty when no prediction-error table was supplied for that
    router (or the value is undefined). Router names may contain commas,
    so cells follow RFC 4180 minimal quoting. The JSON mirrors the curves
    with per-query recall percentiles and echoes the run configuration.
    """
    if not curves:
        raise ValueError("no results to report")
    by_router: Dict[str, PredictionErrorTable] = {}
    for table in tables or ():
        by_router[table.router] = table

    rows = []
    for curve in curves:
        table = by_router.get(curve.router)
        err_by_ell = {}
        if table is not None:
            err_by_ell = {int(l): e for l, e in zip(table.ell, table.mean_error)}
        for j, ell in enumerate(curve.ell):
            err = err_by_ell.get(int(ell))
            err_s = "" if err is None or np.isnan(err) else _fmt(err)
            rows.append(
                [
                    curve.router,
                    str(int(ell)),
                    _fmt(curve.points_probed_mean[j]),
                    _fmt(curve.recall_mean[j]),
                    _fmt(curve.recall_std[j]),
                    err_s,
                ]
            )

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    json_path = os.path.join(out_dir, f"{name}.json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        writer.writerows(rows)

    cfg = dict(config or {})
    routers_json = {}
    for curve in curves:
        pr = curve.per_query_recall
        pcts = np.percentile(pr, [10, 50, 90], axis=0)
        entry = {
            "k": curve.k,
            "l": [int(v) for v in curve.ell],
            "points_probed_mean": [float(v) for v in curve.points_probed_mean],
            "recall_mean": [float(v) for v in curve.recall_mean],
            "recall_std": [float(v) for v in curve.recall_std],
            "recall_p10": [float(v) for v in pcts[0]],
            "recall_p50": [float(v) for v in pcts[1]],
            "recall_p90": [float(v) for v in pcts[2]],
        }
        table = by_router.get(curve.router)
        if table is not None:
            entry["pred_err_mean"] = [
                None if np.isnan(e) else float(e) for e in table.mean_error
            ]
            entry["pred_err_skipped"] = [int(s) for s in table.skipped]
        routers_json[curve.router] = entry

    doc = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "environment": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
        "routers": routers_json,
    }
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def save_ground_truth(truth: GroundTruth, path, meta: Optional[Dict] = None) -> None:
    np.savez(
        path,
        ids=truth.ids,
        scores=truth.scores,
        meta=json.dumps(meta or {}, sort_keys=True),
    )


def load_ground_truth(path) -> Tuple[GroundTruth, Dict]:
    with np.load(path, allow_pickle=False) as z:
        truth = GroundTruth(ids=z["ids"].copy(), scores=z["scores"].copy())
        meta = json.loads(str(z["meta"]))
    return truth, meta
