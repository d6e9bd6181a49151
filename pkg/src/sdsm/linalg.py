"""Dense symmetric positive-definite helpers built on LAPACK.

Every Gaussian density in the sampler goes through :func:`cholesky`, so the
jitter policy lives here and nowhere else.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite

JITTER_START = 1e-10
JITTER_MAX = 1e-4
JITTER_GROWTH = 10.0


@dataclass(frozen=True)
class CholFactor:
    """Lower Cholesky factor ``L`` with ``L @ L.T == m + jitter_applied * I``."""

    lower: np.ndarray
    jitter_applied: float = 0.0

    @property
    def order(self) -> int:
        return self.lower.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def _potrf(a: np.ndarray):
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    return c, info


def _validate(a, symmetry_rtol):
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = np.max(np.abs(a))
    if scale > 0 and np.max(np.abs(a - a.T)) > symmetry_rtol * scale:
        raise DimensionMismatch("matrix is not symmetric")


def cholesky(m, *, symmetry_rtol: float = 1e-12, check: bool = True) -> CholFactor:
    """Factor a symmetric matrix, escalating a diagonal ridge if needed.

    The ridge starts at ``1e-10`` times the mean diagonal and grows by a
    factor of ten up to ``1e-4`` times the mean diagonal.

    ``check=False`` skips the shape, finiteness and symmetry checks; it is
    meant for matrices that are symmetric by construction.

    Raises
    ------
    NotPositiveDefinite
        If the factorization fails at the largest ridge.
    """
    a = np.asarray(m, dtype=float)
    if check:
        _validate(a, symmetry_rtol)

    c, info = _potrf(a)
    if info == 0:
        return CholFactor(c, 0.0)

    mean_diag = float(np.mean(np.diag(a)))
    if mean_diag <= 0:
        raise NotPositiveDefinite("matrix has a non-positive mean diagonal")
    jitter = JITTER_START * mean_diag
    idx = np.diag_indices_from(a)
    while jitter <= JITTER_MAX * mean_diag * (1 + 1e-12):
        b = a.copy()
        b[idx] += jitter
        c, info = _potrf(b)
        if info == 0:
            return CholFactor(c, jitter)
        jitter *= JITTER_GROWTH
    raise NotPositiveDefinite(
        f"factorization failed with jitter up to {JITTER_MAX:g} x mean diagonal"
    )


def solve(f: CholFactor, rhs) -> np.ndarray:
    """Solve ``(L L^T) x = rhs`` for a vector or matrix right-hand side."""
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != f.order:
        raise DimensionMismatch(f"rhs has leading dimension {b.shape[0]}, factor order {f.order}")
    return cho_solve((f.lower, True), b, check_finite=False)


def half_solve(f: CholFactor, rhs) -> np.ndarray:
    """Return ``L^{-1} rhs``."""
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != f.order:
        raise DimensionMismatch(f"rhs has leading dimension {b.shape[0]}, factor order {f.order}")
    return solve_triangular(f.lower, b, lower=True, check_finite=False)


def log_det(f: CholFactor) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(f.lower))))


def quad_form(f: CholFactor, x) -> float:
    """``x^T (L L^T)^{-1} x`` through one triangular solve."""
    u = half_solve(f, x)
    return float(u @ u)


def lower_inverse(f: CholFactor) -> np.ndarray:
    """Explicit ``L^{-1}``; used only to batch many triangular solves into a GEMM."""
    inv, info = lapack.dtrtri(f.lower, lower=1)
    if info != 0:
        raise NotPositiveDefinite("triangular inverse failed")
    return inv
