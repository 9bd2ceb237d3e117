"""Shard routers: build per-shard summaries, score them for queries.

Every router reduces each shard to a small state vector (or a few), scores
all C shards for a query, and orders them best-first; probing then walks
that order. The optimistic routers score a shard by an upper-confidence
bound on its best inner product: mean response plus a concentration term
driven by the shard's covariance (exact, full-rank, or masked sketch).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import beta as _beta_fn
from scipy.special import betainc as _betainc
from scipy.special import ndtri as _ndtri

from .core import VectorSet, rank_descending
from .partition import Partitioning, kmeans_arrays
from .sketch import compute_moments, masked_sketch

KIND_MEAN = "mean"
KIND_NORMALIZED_MEAN = "normalized_mean"
KIND_SCANN = "scann"
KIND_SUBPARTITION = "subpartition"
KIND_OPTIMIST = "optimist"
KIND_OPTIMIST_GAUSSIAN = "optimist_gaussian"

_KINDS = (
    KIND_MEAN,
    KIND_NORMALIZED_MEAN,
    KIND_SCANN,
    KIND_SUBPARTITION,
    KIND_OPTIMIST,
    KIND_OPTIMIST_GAUSSIAN,
)

SUBPARTITION_STATS = ("max", "mean")

_MAGIC = b"OPTR"
_VERSION = 1
_HEADER = struct.Struct("<4sIBIIIddB")

# Condition-number guard for the score-aware linear system; beyond this the
# solve is numerically meaningless and the shard falls back to its mean.
_SCANN_MAX_COND = 1e12


@dataclass(frozen=True)
class RouterModel:
    """Per-shard routing state for one router kind.

    Exactly one family of state arrays is populated, depending on ``kind``:
    ``reps`` for the single-representative routers, ``sub_reps`` for
    sub-partition routers, and the moment stacks for the optimistic ones
    (``sigma`` when t == d, otherwise the sketch arrays). ``empty`` marks
    shards with no points; they score -inf and route last. ``fallback``
    marks shards whose representative fell back to the shard mean.
    """

    kind: str
    d: int
    t: int = 0
    delta: float = 0.0
    threshold: float = 0.0
    stat: str = "max"
    reps: Optional[np.ndarray] = None
    sub_reps: Optional[Tuple[np.ndarray, ...]] = None
    mu: Optional[np.ndarray] = None
    diag: Optional[np.ndarray] = None
    eigvals: Optional[np.ndarray] = None
    eigvecs: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    empty: np.ndarray = None
    fallback: Optional[np.ndarray] = None
    ns: np.ndarray = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown router kind {self.kind!r}")
        if self.stat not in SUBPARTITION_STATS:
            raise ValueError(f"unknown sub-partition statistic {self.stat!r}")
        if self.empty is None or self.ns is None:
            raise ValueError("empty mask and shard sizes are required")
        object.__setattr__(self, "empty", np.asarray(self.empty, dtype=bool))
        object.__setattr__(self, "ns", np.asarray(self.ns, dtype=np.int64))
        if self.fallback is not None:
            object.__setattr__(self, "fallback", np.asarray(self.fallback, dtype=bool))

    @property
    def C(self) -> int:
        return int(self.ns.shape[0])

    @property
    def name(self) -> str:
        if self.kind == KIND_MEAN:
            return "mean"
        if self.kind == KIND_NORMALIZED_MEAN:
            return "normalized_mean"
        if self.kind == KIND_SCANN:
            return f"scann(T={self.threshold:g})"
        if self.kind == KIND_SUBPARTITION:
            if self.stat == "max":
                return f"subpartition(t={self.t})"
            return f"subpartition(t={self.t},stat={self.stat})"
        base = "optimist_gaussian" if self.kind == KIND_OPTIMIST_GAUSSIAN else "optimist"
        return f"{base}(t={self.t},delta={self.delta:g})"


@dataclass(frozen=True)
class ShardScores:
    """Scores for all C shards and the best-first probe order."""

    scores: np.ndarray
    order: np.ndarray


def _shard_points(data: VectorSet, partitioning: Partitioning, i: int) -> np.ndarray:
    return np.asarray(data.vectors[partitioning.shards[i]], dtype=np.float64)


def _check_geometry(data: VectorSet, partitioning: Partitioning) -> None:
    if data.count != partitioning.count:
        raise ValueError(
            f"partitioning covers {partitioning.count} points, dataset has {data.count}"
        )
    if data.dim != partitioning.dim:
        raise ValueError(
            f"partitioning dim {partitioning.dim} != dataset dim {data.dim}"
        )


def build_mean(data: VectorSet, partitioning: Partitioning) -> RouterModel:
    """Each shard is represented by its mean vector."""
    _check_geometry(data, partitioning)
    C, d = partitioning.C, partitioning.dim
    reps = np.zeros((C, d), dtype=np.float32)
    empty = np.zeros(C, dtype=bool)
    ns = partitioning.sizes()
    for i in range(C):
        if ns[i] == 0:
            empty[i] = True
            continue
        reps[i] = _shard_points(data, partitioning, i).mean(axis=0)
    return RouterModel(kind=KIND_MEAN, d=d, reps=reps, empty=empty, ns=ns)


def build_normalized_mean(data: VectorSet, partitioning: Partitioning) -> RouterModel:
    """Each shard is represented by its mean scaled to unit norm.

    A shard whose mean is exactly zero keeps the zero vector and is
    flagged as a fallback (there is no direction to keep).
    """
    _check_geometry(data, partitioning)
    C, d = partitioning.C, partitioning.dim
    reps = np.zeros((C, d), dtype=np.float32)
    empty = np.zeros(C, dtype=bool)
    fallback = np.zeros(C, dtype=bool)
    ns = partitioning.sizes()
    for i in range(C):
        if ns[i] == 0:
            empty[i] = True
            continue
        mu = _shard_points(data, partitioning, i).mean(axis=0)
        norm = float(np.linalg.norm(mu))
        if norm == 0.0:
            fallback[i] = True
            continue
        reps[i] = mu / norm
    return RouterModel(
        kind=KIND_NORMALIZED_MEAN, d=d, reps=reps, empty=empty, fallback=fallback, ns=ns
    )


def _angle_integral(p: float, s: np.ndarray) -> np.ndarray:
    """Integral of sin^p over [0, arcsin(sqrt(s))], via the incomplete beta."""
    a = (p + 1.0) / 2.0
    return 0.5 * _beta_fn(a, 0.5) * _betainc(a, 0.5, s)


def scann_weights(norms: np.ndarray, threshold: float, d: int):
    """Parallel/orthogonal residual weights for the score-aware loss.

    Points with norm at or below the threshold contribute nothing (both
    weights are zero); the caller must mask zero-norm points beforehand.
    """
    if d < 2:
        raise ValueError("score-aware weights need d >= 2")
    s = 1.0 - np.minimum(threshold / norms, 1.0) ** 2
    h_perp = _angle_integral(float(d), s)
    h_par = (d - 1.0) * (_angle_integral(float(d) - 2.0, s) - h_perp)
    return h_par, h_perp


def _scann_representative(points: np.ndarray, threshold: float):
    """Minimiser of the score-aware loss for one shard, or (mean, True)."""
    n, d = points.shape
    mu = points.mean(axis=0)
    if d < 2:
        return mu, True
    norms = np.linalg.norm(points, axis=1)
    keep = norms > 0.0
    if not np.any(keep):
        return mu, True
    pts = points[keep]
    h_par, h_perp = scann_weights(norms[keep], threshold, d)
    if float(h_par.sum()) <= 0.0 and float(h_perp.sum()) <= 0.0:
        return mu, True
    unit = pts / norms[keep][:, None]
    A = float(h_perp.sum()) * np.eye(d)
    A += (unit * (h_par - h_perp)[:, None]).T @ unit
    b = pts.T @ h_par
    if np.linalg.cond(A) > _SCANN_MAX_COND:
        return mu, True
    try:
        rep = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return mu, True
    if not np.all(np.isfinite(rep)):
        return mu, True
    return rep, False


def build_scann(
    data: VectorSet, partitioning: Partitioning, threshold: float = 0.5
) -> RouterModel:
    """Score-aware representative per shard (threshold-weighted loss).

    Shards where the weighted system is degenerate fall back to the shard
    mean and are flagged. As threshold -> 0 the representative converges
    to the mean.
    """
    if threshold < 0.0:
        raise ValueError("threshold must be >= 0")
    _check_geometry(data, partitioning)
    C, d = partitioning.C, partitioning.dim
    reps = np.zeros((C, d), dtype=np.float32)
    empty = np.zeros(C, dtype=bool)
    fallback = np.zeros(C, dtype=bool)
    ns = partitioning.sizes()
    for i in range(C):
        if ns[i] == 0:
            empty[i] = True
            continue
        rep, fell_back = _scann_representative(
            _shard_points(data, partitioning, i), threshold
        )
        reps[i] = rep
        fallback[i] = fell_back
    return RouterModel(
        kind=KIND_SCANN,
        d=d,
        threshold=float(threshold),
        reps=reps,
        empty=empty,
        fallback=fallback,
        ns=ns,
    )


def build_subpartition(
    data: VectorSet,
    partitioning: Partitioning,
    t: int,
    seed: int = 0,
    stat: str = "max",
) -> RouterModel:
    """Represent each shard by min(t + 2, n_i) sub-cluster centroids.

    Shards at most t + 2 points keep the points themselves. The shard score
    is the max (default) or mean of the query's inner products with the
    shard's sub-centroids.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if stat not in SUBPARTITION_STATS:
        raise ValueError(f"unknown sub-partition statistic {stat!r}")
    _check_geometry(data, partitioning)
    C, d = partitioning.C, partitioning.dim
    ns = partitioning.sizes()
    empty = np.zeros(C, dtype=bool)
    sub_reps: List[np.ndarray] = []
    k_target = t + 2
    for i in range(C):
        n = int(ns[i])
        if n == 0:
            empty[i] = True
            sub_reps.append(np.zeros((0, d), dtype=np.float32))
            continue
        pts = _shard_points(data, partitioning, i)
        if n <= k_target:
            sub_reps.append(pts.astype(np.float32))
            continue
        shard_seed = (seed * 1_000_003 + i) % (2**32)
        _, centroids, _ = kmeans_arrays(
            pts, k_target, iters=10, seed=shard_seed, mode="standard"
        )
        sub_reps.append(centroids.astype(np.float32))
    return RouterModel(
        kind=KIND_SUBPARTITION,
        d=d,
        t=int(t),
        stat=stat,
        sub_reps=tuple(sub_reps),
        empty=empty,
        ns=ns,
    )


def build_optimist(
    data: VectorSet,
    partitioning: Partitioning,
    t: int,
    delta: float,
    gaussian: bool = False,
    dtype=np.float32,
) -> RouterModel:
    """Optimistic router state: per-shard mean plus covariance summary.

    With t == d the exact covariance is stored; smaller t stores the masked
    sketch (full diagonal, t whitened residual eigenpairs). delta is the
    confidence level in [0, 1).
    """
    if not (0.0 <= delta < 1.0):
        raise ValueError(f"delta must be in [0, 1), got {delta}")
    _check_geometry(data, partitioning)
    C, d = partitioning.C, partitioning.dim
    if not (0 <= t <= d):
        raise ValueError(f"t must be in [0, {d}], got {t}")
    ns = partitioning.sizes()
    empty = np.zeros(C, dtype=bool)
    mu = np.zeros((C, d), dtype=dtype)
    full = t == d
    if full:
        sigma = np.zeros((C, d, d), dtype=dtype)
        diag = eigvals = eigvecs = None
    else:
        sigma = None
        diag = np.zeros((C, d), dtype=dtype)
        eigvals = np.zeros((C, t), dtype=dtype)
        eigvecs = np.zeros((C, d, t), dtype=dtype)
    for i in range(C):
        if ns[i] == 0:
            empty[i] = True
            continue
        moments = compute_moments(_shard_points(data, partitioning, i))
        if full:
            mu[i] = moments.mu
            sigma[i] = moments.sigma
        else:
            sk = masked_sketch(moments, t, dtype=dtype)
            mu[i] = sk.mu
            diag[i] = sk.diag
            eigvals[i] = sk.eigvals
            eigvecs[i] = sk.eigvecs
    return RouterModel(
        kind=KIND_OPTIMIST_GAUSSIAN if gaussian else KIND_OPTIMIST,
        d=d,
        t=int(t),
        delta=float(delta),
        mu=mu,
        diag=diag,
        eigvals=eigvals,
        eigvecs=eigvecs,
        sigma=sigma,
        empty=empty,
        ns=ns,
    )


def _optimist_variances(model: RouterModel, Q: np.ndarray) -> np.ndarray:
    """Quadratic form q' S_i q for every query/shard pair, clamped at 0."""
    nq = Q.shape[0]
    C = model.C
    if model.sigma is not None:
        var = np.empty((nq, C), dtype=np.float64)
        sigma = np.asarray(model.sigma, dtype=np.float64)
        for c in range(C):
            var[:, c] = np.einsum("qi,qi->q", Q @ sigma[c], Q)
    else:
        diag = np.asarray(model.diag, dtype=np.float64)
        var = (Q * Q) @ diag.T
        if model.t > 0:
            root = np.sqrt(diag)
            vecs = np.asarray(model.eigvecs, dtype=np.float64)
            weighted = root[:, :, None] * vecs
            proj = np.einsum("qj,cjr->qcr", Q, weighted)
            var += np.einsum(
                "qcr,cr->qc", proj * proj, np.asarray(model.eigvals, dtype=np.float64)
            )
    return np.maximum(var, 0.0)


def score_batch(model: RouterModel, queries) -> np.ndarray:
    """Score all shards for each query row; returns (nq, C) float64.

    Empty shards score -inf so they order last.
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if Q.shape[1] != model.d:
        raise ValueError(f"query dim {Q.shape[1]} != model dim {model.d}")
    nq = Q.shape[0]
    C = model.C

    if model.kind in (KIND_MEAN, KIND_NORMALIZED_MEAN, KIND_SCANN):
        scores = Q @ np.asarray(model.reps, dtype=np.float64).T
    elif model.kind == KIND_SUBPARTITION:
        scores = np.full((nq, C), -np.inf, dtype=np.float64)
        keep = [i for i in range(C) if model.sub_reps[i].shape[0] > 0]
        if keep:
            cat = np.concatenate([model.sub_reps[i] for i in keep], axis=0)
            counts = np.array([model.sub_reps[i].shape[0] for i in keep])
            starts = np.concatenate(([0], np.cumsum(counts[:-1])))
            P = Q @ np.asarray(cat, dtype=np.float64).T
            if model.stat == "max":
                seg = np.maximum.reduceat(P, starts, axis=1)
            else:
                seg = np.add.reduceat(P, starts, axis=1) / counts[None, :]
            scores[:, keep] = seg
    else:
        base = Q @ np.asarray(model.mu, dtype=np.float64).T
        var = _optimist_variances(model, Q)
        if model.kind == KIND_OPTIMIST:
            ratio = (1.0 + model.delta) / (1.0 - model.delta)
            scores = base + np.sqrt(ratio * var)
        else:
            z = float(_ndtri((1.0 + model.delta) / 2.0))
            scores = base + z * np.sqrt(var)

    scores[:, model.empty] = -np.inf
    return scores


def score(model: RouterModel, q) -> ShardScores:
    """Score one query against all shards and order them best-first."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1:
        raise ValueError("score expects a single 1-d query")
    scores = score_batch(model, q[None, :])[0]
    return ShardScores(scores=scores, order=rank_descending(scores))


def score_optimist(model: RouterModel, q) -> ShardScores:
    """Chebyshev-bound scoring; validates the model kind."""
    if model.kind != KIND_OPTIMIST:
        raise ValueError(f"expected an optimist model, got {model.kind!r}")
    return score(model, q)


def score_optimist_gaussian(model: RouterModel, q) -> ShardScores:
    """Gaussian-quantile scoring; validates the model kind."""
    if model.kind != KIND_OPTIMIST_GAUSSIAN:
        raise ValueError(f"expected an optimist_gaussian model, got {model.kind!r}")
    return score(model, q)


def route(model: RouterModel, q, ell: int) -> np.ndarray:
    """Ids of the ell best shards for the query, best first."""
    if not (1 <= ell <= model.C):
        raise ValueError(f"ell must be in [1, {model.C}], got {ell}")
    return score(model, q).order[:ell]


# --- persistence ---------------------------------------------------------

_KIND_TAGS = {kind: i for i, kind in enumerate(_KINDS)}
_STAT_TAGS = {stat: i for i, stat in enumerate(SUBPARTITION_STATS)}

_REP_RECORD = struct.Struct("<IQB")
_SUB_RECORD = struct.Struct("<IQI")
_OPT_RECORD = struct.Struct("<IQIB")


def _flags(model: RouterModel, i: int) -> int:
    bits = 0
    if bool(model.empty[i]):
        bits |= 1
    if model.fallback is not None and bool(model.fallback[i]):
        bits |= 2
    return bits


def save_router(model: RouterModel, path) -> None:
    """Write the model in its little-endian binary format (float32 arrays)."""
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _MAGIC,
                _VERSION,
                _KIND_TAGS[model.kind],
                model.C,
                model.d,
                model.t,
                float(model.delta),
                float(model.threshold),
                _STAT_TAGS[model.stat],
            )
        )
        for i in range(model.C):
            n = int(model.ns[i])
            if model.kind in (KIND_MEAN, KIND_NORMALIZED_MEAN, KIND_SCANN):
                fh.write(_REP_RECORD.pack(i, n, _flags(model, i)))
                fh.write(model.reps[i].astype("<f4").tobytes())
            elif model.kind == KIND_SUBPARTITION:
                reps = model.sub_reps[i]
                fh.write(_SUB_RECORD.pack(i, n, reps.shape[0]))
                fh.write(reps.astype("<f4").tobytes())
            else:
                fh.write(_OPT_RECORD.pack(i, n, model.t, _flags(model, i)))
                fh.write(model.mu[i].astype("<f4").tobytes())
                if model.sigma is not None:
                    fh.write(model.sigma[i].astype("<f4").tobytes())
                else:
                    fh.write(model.diag[i].astype("<f4").tobytes())
                    fh.write(model.eigvals[i].astype("<f4").tobytes())
                    fh.write(model.eigvecs[i].astype("<f4").tobytes())


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.off = 0

    def unpack(self, fmt: struct.Struct):
        if self.off + fmt.size > len(self.raw):
            raise ValueError("router file is truncated")
        vals = fmt.unpack_from(self.raw, self.off)
        self.off += fmt.size
        return vals

    def floats(self, count: int) -> np.ndarray:
        nbytes = 4 * count
        if self.off + nbytes > len(self.raw):
            raise ValueError("router file is truncated")
        out = np.frombuffer(self.raw, dtype="<f4", count=count, offset=self.off).copy()
        self.off += nbytes
        return out


def load_router(path) -> RouterModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("router file is truncated")
    magic, version, kind_tag, C, d, t, delta, threshold, stat_tag = _HEADER.unpack_from(
        raw, 0
    )
    if magic != _MAGIC:
        raise ValueError("not a router model file (bad magic)")
    if version != _VERSION:
        raise ValueError(f"unsupported router file version {version}")
    if kind_tag >= len(_KINDS) or stat_tag >= len(SUBPARTITION_STATS):
        raise ValueError("unknown kind or statistic tag")
    kind = _KINDS[kind_tag]
    stat = SUBPARTITION_STATS[stat_tag]
    rd = _Reader(raw)
    rd.off = _HEADER.size

    ns = np.zeros(C, dtype=np.int64)
    empty = np.zeros(C, dtype=bool)
    fallback = np.zeros(C, dtype=bool)
    reps = sub_reps = mu = diag = eigvals = eigvecs = sigma = None

    if kind in (KIND_MEAN, KIND_NORMALIZED_MEAN, KIND_SCANN):
        reps = np.zeros((C, d), dtype=np.float32)
        for i in range(C):
            sid, n, bits = rd.unpack(_REP_RECORD)
            if sid != i:
                raise ValueError(f"shard record {i} has id {sid}")
            ns[i] = n
            empty[i] = bool(bits & 1)
            fallback[i] = bool(bits & 2)
            reps[i] = rd.floats(d)
    elif kind == KIND_SUBPARTITION:
        parts = []
        for i in range(C):
            sid, n, k = rd.unpack(_SUB_RECORD)
            if sid != i:
                raise ValueError(f"shard record {i} has id {sid}")
            ns[i] = n
            empty[i] = n == 0
            parts.append(rd.floats(k * d).reshape(k, d))
        sub_reps = tuple(parts)
    else:
        full = t == d
        mu = np.zeros((C, d), dtype=np.float32)
        if full:
            sigma = np.zeros((C, d, d), dtype=np.float32)
        else:
            diag = np.zeros((C, d), dtype=np.float32)
            eigvals = np.zeros((C, t), dtype=np.float32)
            eigvecs = np.zeros((C, d, t), dtype=np.float32)
        for i in range(C):
            sid, n, rec_t, bits = rd.unpack(_OPT_RECORD)
            if sid != i:
                raise ValueError(f"shard record {i} has id {sid}")
            if rec_t != t:
                raise ValueError(f"shard {i} stores rank {rec_t}, header says {t}")
            ns[i] = n
            empty[i] = bool(bits & 1)
            mu[i] = rd.floats(d)
            if full:
                sigma[i] = rd.floats(d * d).reshape(d, d)
            else:
                diag[i] = rd.floats(d)
                eigvals[i] = rd.floats(t)
                eigvecs[i] = rd.floats(d * t).reshape(d, t)

    if rd.off != len(raw):
        raise ValueError("router file has trailing bytes")
    return RouterModel(
        kind=kind,
        d=d,
        t=t,
        delta=delta,
        threshold=threshold,
        stat=stat,
        reps=reps,
        sub_reps=sub_reps,
        mu=mu,
        diag=diag,
        eigvals=eigvals,
        eigvecs=eigvecs,
        sigma=sigma,
        empty=empty,
        fallback=fallback if kind != KIND_SUBPARTITION else None,
        ns=ns,
    )
