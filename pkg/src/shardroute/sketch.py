"""Shard moments and the diagonal-masked low-rank covariance sketch.

A shard's second moment is summarised by its mean, the covariance
diagonal, and the top eigenpairs of the diagonally whitened residual
correlation. Storing rank t costs t + 2 vectors of length d, and the
sketch supports the quadratic form q' S q without ever materialising a
d x d matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative floor applied to covariance diagonals before whitening, so a
# coordinate with zero variance cannot produce a division by zero.
DIAG_FLOOR_REL = 1e-9


@dataclass(frozen=True)
class ShardMoments:
    """Population mean and covariance of one shard (n points, dim d)."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return int(self.mu.shape[0])


@dataclass(frozen=True)
class SymmetricEigen:
    """Eigendecomposition of a symmetric matrix, eigenvalues non-increasing."""

    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class MaskedSketch:
    """Rank-t sketch: full diagonal plus t whitened residual eigenpairs."""

    mu: np.ndarray       # (d,) shard mean
    diag: np.ndarray     # (d,) floored covariance diagonal
    eigvals: np.ndarray  # (t,) residual eigenvalues, non-increasing, >= -1
    eigvecs: np.ndarray  # (d, t) orthonormal columns

    @property
    def dim(self) -> int:
        return int(self.mu.shape[0])

    @property
    def t(self) -> int:
        return int(self.eigvals.shape[0])


@dataclass(frozen=True)
class AssumptionDiagnostics:
    """Per-shard quantities governing when the sketch beats plain low rank."""

    lambda_t_plus_1: float
    diag_ratio: float


def compute_moments(points, dtype=np.float64) -> ShardMoments:
    """Population mean and covariance of a set of row vectors.

    Accumulates in float64 regardless of the requested output dtype; the
    covariance is the biased (divide by n) estimator.
    """
    X = np.asarray(getattr(points, "vectors", points), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("moments need at least one point")
    n = X.shape[0]
    mu = X.mean(axis=0)
    centered = X - mu
    sigma = centered.T @ centered / n
    return ShardMoments(mu=mu.astype(dtype), sigma=sigma.astype(dtype), n=n)


def symmetric_eigen(matrix: np.ndarray) -> SymmetricEigen:
    """Eigenpairs of a symmetric matrix, sorted by signed value descending."""
    values, vectors = np.linalg.eigh(np.asarray(matrix, dtype=np.float64))
    return SymmetricEigen(values=values[::-1].copy(), vectors=vectors[:, ::-1].copy())


def masked_sketch(moments: ShardMoments, t: int, dtype=np.float64) -> MaskedSketch:
    """Build the rank-t masked sketch of a shard's covariance.

    The residual (covariance minus its diagonal) is whitened by the floored
    diagonal, and the t eigenpairs largest by signed eigenvalue are kept.
    Every residual eigenvalue is >= -1 because the whitened correlation
    matrix diag + residual is positive semi-definite.
    """
    sigma = np.asarray(moments.sigma, dtype=np.float64)
    d = sigma.shape[0]
    if sigma.shape != (d, d):
        raise ValueError("covariance must be square")
    if not np.all(np.isfinite(sigma)):
        raise ValueError("covariance contains non-finite values")
    if not (0 <= t <= d):
        raise ValueError(f"rank t must be in [0, {d}], got {t}")

    raw_diag = np.diag(sigma).copy()
    dmax = float(raw_diag.max(initial=0.0))
    if dmax <= 0.0:
        # Zero covariance (single point, or identical points): everything
        # vanishes, and any orthonormal basis works for the zero eigenpairs.
        return MaskedSketch(
            mu=np.asarray(moments.mu, dtype=dtype).copy(),
            diag=np.zeros(d, dtype=dtype),
            eigvals=np.zeros(t, dtype=dtype),
            eigvecs=np.eye(d, t, dtype=dtype),
        )

    diag = np.maximum(raw_diag, DIAG_FLOOR_REL * dmax)
    inv_sqrt = 1.0 / np.sqrt(diag)
    residual = sigma.copy()
    np.fill_diagonal(residual, 0.0)
    whitened = inv_sqrt[:, None] * residual * inv_sqrt[None, :]
    eig = symmetric_eigen(whitened)
    return MaskedSketch(
        mu=np.asarray(moments.mu, dtype=dtype).copy(),
        diag=diag.astype(dtype),
        eigvals=eig.values[:t].astype(dtype),
        eigvecs=eig.vectors[:, :t].astype(dtype),
    )


def sketch_quadratic_form(sketch: MaskedSketch, q) -> float:
    """Evaluate q' S q against the sketch, clamped at zero.

    Works in the whitened frame: scale q by sqrt(diag), then add the
    eigenvalue-weighted energy of its projection onto the kept eigvecs.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (sketch.dim,):
        raise ValueError(f"query must have shape ({sketch.dim},)")
    qt = q * np.sqrt(np.asarray(sketch.diag, dtype=np.float64))
    value = float(qt @ qt)
    if sketch.t > 0:
        proj = np.asarray(sketch.eigvecs, dtype=np.float64).T @ qt
        value += float(np.asarray(sketch.eigvals, dtype=np.float64) @ (proj * proj))
    return max(value, 0.0)


def sketch_matrix(sketch: MaskedSketch) -> np.ndarray:
    """Densify the sketch: diag + sqrt(diag) Q Lambda Q' sqrt(diag)."""
    root = np.sqrt(np.asarray(sketch.diag, dtype=np.float64))
    out = np.diag(np.asarray(sketch.diag, dtype=np.float64))
    if sketch.t > 0:
        Q = np.asarray(sketch.eigvecs, dtype=np.float64)
        lam = np.asarray(sketch.eigvals, dtype=np.float64)
        out += (root[:, None] * Q) @ (lam[:, None] * (Q.T * root[None, :]))
    return out


def low_rank_sketch(moments: ShardMoments, t: int) -> np.ndarray:
    """Best rank-t approximation of the covariance (top eigenpairs kept)."""
    sigma = np.asarray(moments.sigma, dtype=np.float64)
    d = sigma.shape[0]
    if not (0 <= t <= d):
        raise ValueError(f"rank t must be in [0, {d}], got {t}")
    eig = symmetric_eigen(sigma)
    if float(eig.values.min(initial=0.0)) < -1e-8 * max(1.0, float(eig.values.max(initial=0.0))):
        raise ValueError("covariance is not positive semi-definite")
    if t == 0:
        return np.zeros((d, d))
    vecs = eig.vectors[:, :t]
    return (vecs * eig.values[:t]) @ vecs.T


def approximation_error(sigma: np.ndarray, approx: np.ndarray) -> float:
    """Spectral-norm distance between two symmetric matrices."""
    sigma = np.asarray(sigma, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    if sigma.shape != approx.shape or sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("expected two square matrices of equal shape")
    for name, m in (("sigma", sigma), ("approx", approx)):
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        if float(np.abs(m - m.T).max(initial=0.0)) > 1e-8 * scale:
            raise ValueError(f"{name} is not symmetric")
    diff_vals = np.linalg.eigvalsh(sigma - approx)
    return float(np.abs(diff_vals).max(initial=0.0))


def assumption_diagnostics(moments: ShardMoments, t: int) -> AssumptionDiagnostics:
    """Measure how far a shard is from the regime favouring the masked sketch.

    Reports the (t+1)-th eigenvalue of the diagonally whitened covariance
    and the min/max ratio of the raw diagonal. Requires t < d so the
    (t+1)-th eigenvalue exists, and a non-degenerate diagonal.
    """
    sigma = np.asarray(moments.sigma, dtype=np.float64)
    d = sigma.shape[0]
    if not (0 <= t < d):
        raise ValueError(f"rank t must be in [0, {d}) for diagnostics, got {t}")
    raw_diag = np.diag(sigma).copy()
    dmax = float(raw_diag.max(initial=0.0))
    if dmax <= 0.0:
        raise ValueError("shard covariance is zero; diagnostics are undefined")
    diag = np.maximum(raw_diag, DIAG_FLOOR_REL * dmax)
    inv_sqrt = 1.0 / np.sqrt(diag)
    whitened = inv_sqrt[:, None] * sigma * inv_sqrt[None, :]
    values = symmetric_eigen(whitened).values
    return AssumptionDiagnostics(
        lambda_t_plus_1=float(values[t]),
        diag_ratio=float(raw_diag.min() / dmax),
    )
