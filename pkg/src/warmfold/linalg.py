"""Truncated SVD of sparse matrices, pseudo-inverses of tall-thin matrices, mat-vecs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, NumericalWarning


@dataclass(frozen=True)
class TruncatedSVD:
    left: np.ndarray             # M x r, orthonormal columns
    singular_values: np.ndarray  # r, descending
    right: np.ndarray            # N x r, orthonormal columns
    rank_deficient: bool = False

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def _orthonormalize(x):
    q, _ = np.linalg.qr(x)
    return q


def truncated_svd(
    matrix,
    rank: int,
    seed: int = 0,
    oversample: int = 8,
    power_iters: int = 4,
    tol: float = 1e-13,
    max_iters: int = 300,
    rank_tol: float = 1e-10,
) -> TruncatedSVD:
    """Randomized subspace iteration for the leading ``rank`` singular triplets.

    Runs at least ``power_iters`` power iterations and keeps iterating until
    the Ritz values of the sketch stop moving (relative change below ``tol``)
    or ``max_iters`` is reached. Singular values at or below
    ``rank_tol * sigma_max`` are dropped and ``rank_deficient`` is set.
    """
    m, n = matrix.shape
    if not 1 <= rank <= min(m, n):
        raise DimensionError(f"rank must be in [1, {min(m, n)}], got {rank}")
    a = matrix.tocsr().astype(np.float64) if sp.issparse(matrix) else np.asarray(matrix, np.float64)
    at = a.T.tocsr() if sp.issparse(a) else a.T

    width = min(rank + oversample, min(m, n))
    rng = np.random.default_rng(seed)
    q = _orthonormalize(a @ rng.standard_normal((n, width)))

    prev = None
    for it in range(max_iters):
        z = _orthonormalize(at @ q)
        q = _orthonormalize(a @ z)
        if it + 1 < power_iters:
            continue
        ritz = np.linalg.svd(at @ q, compute_uv=False)[:rank]
        if prev is not None:
            scale = max(ritz[0], np.finfo(float).tiny)
            if np.max(np.abs(ritz - prev)) <= tol * scale:
                break
        prev = ritz

    b = (at @ q).T  # width x n
    ub, s, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ ub[:, :rank]
    s = s[:rank]
    v = vt[:rank].T

    keep = s > rank_tol * s[0] if s[0] > 0 else np.zeros(rank, dtype=bool)
    deficient = not keep.all()
    if deficient:
        warnings.warn(
            f"matrix has numerical rank {int(keep.sum())} < requested {rank}",
            NumericalWarning, stacklevel=2,
        )
        u, s, v = u[:, keep], s[keep], v[:, keep]
    return TruncatedSVD(np.ascontiguousarray(u), s, np.ascontiguousarray(v), deficient)


@dataclass(frozen=True)
class PseudoInverse:
    """Moore-Penrose inverse of an N x d matrix V = A diag(s) B^T.

    ``matrix`` is the materialized d x N inverse B diag(1/s) A^T.
    """

    factor_a: np.ndarray       # N x r
    singular_values: np.ndarray  # r
    factor_b: np.ndarray       # d x r
    matrix: np.ndarray         # d x N

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    @property
    def degenerate(self) -> bool:
        return self.rank == 0

    @property
    def source_shape(self) -> tuple[int, int]:
        return self.factor_a.shape[0], self.factor_b.shape[0]


def pseudo_inverse(v, rank_tol: float = 1e-10) -> PseudoInverse:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or min(v.shape) < 1:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {v.shape}")
    a, s, bt = np.linalg.svd(v, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        keep = np.zeros(s.size, dtype=bool)
    else:
        keep = s > rank_tol * s[0]
    a, s, b = a[:, keep], s[keep], bt[keep].T
    if s.size == 0:
        warnings.warn("pseudo-inverse of a zero matrix", NumericalWarning, stacklevel=2)
    mat = np.ascontiguousarray((b / s) @ a.T)
    return PseudoInverse(a, s, b, mat)


def matvec(matrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or matrix.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot multiply {matrix.shape} matrix by vector of shape {x.shape}")
    if sp.issparse(matrix):
        return np.asarray(matrix @ x, dtype=np.float64)
    return np.asarray(matrix, dtype=np.float64) @ x
