"""Shard assignment via k-means, plus a compact binary format for the result.

Both modes use k-means++ seeding and Lloyd iterations. Standard mode
assigns by Euclidean distance; spherical mode renormalises centroids each
round and assigns by inner product, which suits datasets queried by dot
product. Empty clusters are repaired immediately so every shard in the
output is non-empty.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .core import VectorSet

MODES = ("standard", "spherical")

_MAGIC = b"OPTP"
_VERSION = 1
_HEADER = struct.Struct("<4sIQIIB")

_ASSIGN_BLOCK = 16384


@dataclass(frozen=True)
class Partitioning:
    """Assignment of every point to one of C shards.

    ``shards`` is derived from ``assignments``: shard i holds the ids
    assigned to it, in ascending order. ``objective`` records the clustering
    cost after each update step of the fit that produced this partitioning
    (empty for partitionings loaded from disk).
    """

    assignments: np.ndarray
    centroids: np.ndarray
    mode: str
    objective: Tuple[float, ...] = ()
    shards: Tuple[np.ndarray, ...] = field(init=False)

    def __post_init__(self):
        assignments = np.ascontiguousarray(self.assignments, dtype=np.uint32)
        centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if centroids.ndim != 2:
            raise ValueError("centroids must be a (C, d) array")
        C = centroids.shape[0]
        if assignments.ndim != 1:
            raise ValueError("assignments must be 1-d")
        if assignments.size and int(assignments.max()) >= C:
            raise ValueError("assignment refers to a shard beyond C")
        object.__setattr__(self, "assignments", assignments)
        object.__setattr__(self, "centroids", centroids)
        order = np.argsort(assignments, kind="stable")
        counts = np.bincount(assignments, minlength=C)
        bounds = np.cumsum(counts)[:-1]
        shards = tuple(np.asarray(s, dtype=np.int64) for s in np.split(order, bounds))
        object.__setattr__(self, "shards", shards)

    @property
    def C(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    @property
    def count(self) -> int:
        return int(self.assignments.shape[0])

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.C).astype(np.int64)


def default_shard_count(m: int) -> int:
    """Square-root rule: round(sqrt(m)), at least 1."""
    if m < 1:
        raise ValueError("need at least one point")
    return max(1, int(math.floor(math.sqrt(m) + 0.5)))


def extract_shard(data: VectorSet, partitioning: Partitioning, i: int) -> VectorSet:
    """Materialise shard i's points, in the id order of ``shards[i]``."""
    if not (0 <= i < partitioning.C):
        raise ValueError(f"shard index {i} out of range [0, {partitioning.C})")
    return VectorSet(data.vectors[partitioning.shards[i]].copy())


def _plus_plus_seed(X: np.ndarray, C: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ D^2 seeding; returns (C, d) float64 centroids."""
    m = X.shape[0]
    Xf = np.ascontiguousarray(X, dtype=np.float32)
    xsq = np.einsum("ij,ij->i", Xf, Xf, dtype=np.float64)
    chosen = np.zeros(m, dtype=bool)
    first = int(rng.integers(m))
    centroids = np.empty((C, X.shape[1]), dtype=np.float64)
    centroids[0] = X[first]
    chosen[first] = True
    d2 = None
    for j in range(C):
        if j > 0:
            total = float(d2.sum())
            if total > 0.0:
                idx = int(rng.choice(m, p=d2 / total))
            else:
                # All remaining mass is zero (duplicate points): take the
                # first unused index so seeds stay distinct.
                idx = int(np.flatnonzero(~chosen)[0])
            centroids[j] = X[idx]
            chosen[idx] = True
        cj = centroids[j].astype(np.float32)
        dist = xsq - 2.0 * (Xf @ cj).astype(np.float64) + float(cj @ cj)
        np.maximum(dist, 0.0, out=dist)
        d2 = dist if d2 is None else np.minimum(d2, dist)
    return centroids


def _assign(X: np.ndarray, centroids: np.ndarray, mode: str) -> np.ndarray:
    """Nearest-centroid assignment, blocked to bound the score buffer."""
    m = X.shape[0]
    out = np.empty(m, dtype=np.uint32)
    if mode == "spherical":
        ct = np.ascontiguousarray(centroids.T, dtype=X.dtype)
        for lo in range(0, m, _ASSIGN_BLOCK):
            hi = min(lo + _ASSIGN_BLOCK, m)
            out[lo:hi] = np.argmax(X[lo:hi] @ ct, axis=1)
        return out
    # Euclidean argmin via ||x - c||^2 = ||x||^2 - 2<x,c> + ||c||^2; the
    # ||x||^2 term is constant per row and can be dropped.
    ct = np.ascontiguousarray(centroids.T, dtype=X.dtype)
    half_csq = 0.5 * np.einsum("ij,ij->i", centroids, centroids)
    for lo in range(0, m, _ASSIGN_BLOCK):
        hi = min(lo + _ASSIGN_BLOCK, m)
        scores = X[lo:hi] @ ct
        scores -= half_csq[None, :]
        out[lo:hi] = np.argmax(scores, axis=1)
    return out


def _repair_empty(X, assignments, centroids, counts):
    """Move the point farthest from its centroid into each empty cluster.

    Only points from clusters of size >= 2 are eligible, so the donor
    cluster never becomes empty itself. Ties go to the smallest point id.
    """
    for c in np.flatnonzero(counts == 0):
        eligible = counts[assignments] >= 2
        diff = X - centroids[assignments]
        dist2 = np.einsum("ij,ij->i", diff, diff)
        dist2[~eligible] = -np.inf
        p = int(np.argmax(dist2))  # argmax takes the smallest index on ties
        counts[assignments[p]] -= 1
        assignments[p] = c
        counts[c] += 1
        centroids[c] = X[p]
    return assignments, counts


def _cluster_means(X: np.ndarray, assignments: np.ndarray, counts: np.ndarray) -> np.ndarray:
    C = counts.shape[0]
    sums = np.empty((C, X.shape[1]), dtype=np.float64)
    for j in range(X.shape[1]):
        sums[:, j] = np.bincount(assignments, weights=X[:, j], minlength=C)
    return sums / counts[:, None]


def _normalize_centroids(centroids: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(centroids, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return centroids / safe[:, None]


def kmeans_arrays(
    X: np.ndarray,
    C: int,
    iters: int = 25,
    seed: int = 0,
    mode: str = "standard",
) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """Core Lloyd loop on a raw array; returns (assignments, centroids, objective).

    Stops early once assignments stop changing. The objective (total squared
    Euclidean distance to assigned centroids) is recorded after each update
    step; in standard mode it is non-increasing. Standard mode runs its
    assignment arithmetic in float64 so that guarantee is not lost to
    rounding; spherical mode uses float32 for the big inner-product matmul.
    """
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    if m < 1:
        raise ValueError("need at least one point")
    if not (1 <= C <= m):
        raise ValueError(f"C must be in [1, {m}], got {C}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_seed(X, C, rng)
    if mode == "spherical":
        centroids = _normalize_centroids(centroids)
    X_assign = X.astype(np.float32) if mode == "spherical" else X

    assignments = None
    objective: List[float] = []
    for _ in range(iters):
        new_assign = _assign(X_assign, centroids, mode)
        counts = np.bincount(new_assign, minlength=C)
        new_assign, counts = _repair_empty(X, new_assign, centroids, counts)

        centroids = _cluster_means(X, new_assign, counts)
        if mode == "spherical":
            centroids = _normalize_centroids(centroids)

        diff = X - centroids[new_assign]
        objective.append(float(np.einsum("ij,ij->i", diff, diff).sum()))
        if assignments is not None and np.array_equal(new_assign, assignments):
            break
        assignments = new_assign

    return assignments, centroids, objective


def fit_kmeans(
    data: VectorSet,
    C: int,
    iters: int = 25,
    seed: int = 0,
    mode: str = "spherical",
) -> Partitioning:
    """Partition a vector set into C non-empty shards."""
    assignments, centroids, objective = kmeans_arrays(
        data.vectors, C, iters=iters, seed=seed, mode=mode
    )
    return Partitioning(
        assignments=assignments,
        centroids=centroids.astype(np.float32),
        mode=mode,
        objective=tuple(objective),
    )


def save_partitioning(partitioning: Partitioning, path) -> None:
    """Write the partitioning in its little-endian binary format."""
    mode_tag = MODES.index(partitioning.mode)
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _MAGIC,
                _VERSION,
                partitioning.count,
                partitioning.dim,
                partitioning.C,
                mode_tag,
            )
        )
        fh.write(partitioning.assignments.astype("<u4").tobytes())
        fh.write(partitioning.centroids.astype("<f4").tobytes())


def load_partitioning(path) -> Partitioning:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("partitioning file is truncated")
    magic, version, m, d, C, mode_tag = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ValueError("not a partitioning file (bad magic)")
    if version != _VERSION:
        raise ValueError(f"unsupported partitioning version {version}")
    if mode_tag >= len(MODES):
        raise ValueError(f"unknown mode tag {mode_tag}")
    expected = _HEADER.size + 4 * m + 4 * C * d
    if len(raw) != expected:
        raise ValueError(f"partitioning file has {len(raw)} bytes, expected {expected}")
    off = _HEADER.size
    assignments = np.frombuffer(raw, dtype="<u4", count=m, offset=off).copy()
    off += 4 * m
    centroids = (
        np.frombuffer(raw, dtype="<f4", count=C * d, offset=off).reshape(C, d).copy()
    )
    return Partitioning(
        assignments=assignments, centroids=centroids, mode=MODES[mode_tag]
    )
