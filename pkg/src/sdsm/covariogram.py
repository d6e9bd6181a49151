"""Isotropic correlation functions and the correlation matrices built from them."""
from __future__ import annotations

import enum

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidParameter


class Covariogram(str, enum.Enum):
    """Supported correlation families. Only the exponential one ships for now."""

    EXPONENTIAL = "exponential"

    @classmethod
    def parse(cls, value) -> "Covariogram":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidParameter(f"unknown covariogram {value!r}") from None


EXPONENTIAL = Covariogram.EXPONENTIAL


def _check_phi(phi):
    if not np.all(np.asarray(phi) > 0):
        raise InvalidParameter(f"phi must be positive, got {phi!r}")


def corr(c, lag_norm, phi):
    """Correlation at lag distance ``lag_norm``; ``exp(-phi * d)`` for the exponential kind."""
    c = Covariogram.parse(c)
    _check_phi(phi)
    d = np.asarray(lag_norm, dtype=float)
    if np.any(d < 0):
        raise InvalidParameter("lag norm must be non-negative")
    out = np.exp(-phi * d)
    return float(out) if out.ndim == 0 else out


def as_locations(locs) -> np.ndarray:
    a = np.asarray(locs, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[1] not in (1, 2, 3):
        raise InvalidParameter(f"locations must be an (m, d) array with d in 1..3, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameter("locations must be finite")
    return a


def distance_matrix(rows, cols=None) -> np.ndarray:
    rows = as_locations(rows)
    cols = rows if cols is None else as_locations(cols)
    return cdist(rows, cols)


def corr_from_distance(c, dist, phi, out=None) -> np.ndarray:
    """Apply the correlation function to a precomputed distance array (in place if ``out`` given)."""
    Covariogram.parse(c)
    _check_phi(phi)
    out = np.multiply(dist, -phi, out=out)
    return np.exp(out, out=out)


def build_corr_matrix(c, locs, phi) -> np.ndarray:
    m = corr_from_distance(c, distance_matrix(locs), phi)
    np.fill_diagonal(m, 1.0)
    return m


def build_cross_matrix(c, rows, cols, phi) -> np.ndarray:
    rows, cols = as_locations(rows), as_locations(cols)
    if len(rows) == 0 or len(cols) == 0:
        raise InvalidParameter("cross matrix needs non-empty row and column locations")
    return corr_from_distance(c, distance_matrix(rows, cols), phi)
