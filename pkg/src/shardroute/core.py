"""Dense vector primitives shared by every stage of the pipeline.

Vectors are stored as float32 rows; anything that accumulates (inner
products, norms, score sums) runs in float64 so results do not drift with
row order or chunking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np


@dataclass(frozen=True)
class VectorSet:
    """A read-only, C-contiguous block of float32 row vectors.

    The constructor takes ownership of the array: it converts to float32
    C-order if needed and marks the buffer immutable. An empty set may have
    zero columns (the shape a zero-length file decodes to); any non-empty
    set must have dim >= 1.
    """

    vectors: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"expected a 2-d array, got shape {v.shape}")
        if v.shape[0] > 0 and v.shape[1] < 1:
            raise ValueError("vectors must have dim >= 1")
        if not np.all(np.isfinite(v)):
            row = int(np.argwhere(~np.isfinite(v).all(axis=1))[0, 0])
            raise ValueError(f"non-finite value in row {row}")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def row(self, i: int) -> np.ndarray:
        return self.vectors[i]


@dataclass(frozen=True)
class TopKResult:
    """Ids and scores of the best k candidates, best first.

    Ties on score are broken by ascending id, so two runs over the same
    data always agree element-for-element.
    """

    ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=np.int64))
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        if self.ids.shape != self.scores.shape or self.ids.ndim != 1:
            raise ValueError("ids and scores must be 1-d arrays of equal length")

    @property
    def k(self) -> int:
        return int(self.ids.shape[0])


def inner_product(a, b) -> float:
    """Inner product of two equal-length vectors, accumulated in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("inner_product expects 1-d vectors")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.dot(a, b))


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit Euclidean norm. Zero vectors are an error."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def rank_descending(scores: np.ndarray) -> np.ndarray:
    """Indices that sort scores descending, ascending index on ties."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.shape[0]), -scores))


def top_k_arrays(ids: np.ndarray, scores: np.ndarray, k: int) -> TopKResult:
    """Top-k by score over parallel id/score arrays. Ids must be unique."""
    ids = np.asarray(ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if ids.shape != scores.shape or ids.ndim != 1:
        raise ValueError("ids and scores must be 1-d arrays of equal length")
    # Sort key is (-score, id); np.lexsort orders by the last key first.
    order = np.lexsort((ids, -scores))
    sel = order[: min(k, ids.shape[0])]
    return TopKResult(ids=ids[sel].copy(), scores=scores[sel].copy())


def top_k(scored: Iterable[Tuple[int, float]], k: int) -> TopKResult:
    """Top-k over an iterable of (id, score) pairs."""
    pairs = list(scored)
    ids = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
    scores = np.fromiter((p[1] for p in pairs), dtype=np.float64, count=len(pairs))
    return top_k_arrays(ids, scores, k)
