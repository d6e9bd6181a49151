"""Synthetic spatial data: spectral Gaussian fields, noise at a target SNR, missingness.

Spectral recipe for the exponential correlation ``exp(-phi |d|)``:

* in 2-D the spectral density is radially a bivariate Cauchy-type law whose
  radial CDF is ``F(k) = 1 - phi / sqrt(phi^2 + k^2)``; inverting gives
  ``k = phi * sqrt(1 / (1 - u)^2 - 1)`` for ``u ~ U(0, 1)``, and the
  direction is uniform on the circle;
* in 1-D the spectral law is Cauchy with scale ``phi``.

The field is ``sqrt(2 sigma2 / M) * sum_m cos(omega_m . s + U_m)``, evaluated
in location chunks so memory stays ``O(N + M)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covariogram import EXPONENTIAL, Covariogram, as_locations
from .dataset import SpatialDataset
from .errors import BlockOutOfBounds, ConfigError, InvalidParameter, UnsupportedKernel

DEFAULT_M = 5000
CHUNK = 1024
TWO_PI = 2.0 * np.pi


def spectral_frequencies(phi: float, M: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """``M`` frequency vectors drawn from the exponential kernel's spectral law."""
    if dim == 1:
        return phi * rng.standard_cauchy((M, 1))
    if dim != 2:
        raise UnsupportedKernel("spectral simulation is implemented for 1-D and 2-D locations")
    u = rng.random(M)
    radius = phi * np.sqrt(1.0 / (1.0 - u) ** 2 - 1.0)
    angle = rng.uniform(0.0, 2 * np.pi, M)
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


def spectral_field(locs, covariogram=EXPONENTIAL, phi_true: float = 3.0, sigma2_true: float = 1.0,
                   M: int = DEFAULT_M, rng=None, chunk: int = CHUNK) -> np.ndarray:
    """Approximate draw of a zero-mean stationary Gaussian field at ``locs``."""
    try:
        kind = Covariogram.parse(covariogram)
    except InvalidParameter:
        kind = None
    if kind is not EXPONENTIAL:
        raise UnsupportedKernel(f"no spectral law for {covariogram!r}")
    if M < 1:
        raise ConfigError("the number of spectral components M must be at least 1")
    rng = np.random.default_rng(rng)
    locs = as_locations(locs)
    omega = spectral_frequencies(phi_true, M, locs.shape[1], rng)
    shift = rng.uniform(0.0, 2 * np.pi, M)
    amp = np.sqrt(2.0 * sigma2_true / M)
    out = np.empty(len(locs))
    for start in range(0, len(locs), chunk):
        arg = locs[start:start + chunk] @ omega.T
        arg += shift
        # reduce the phase in double precision, then take a fast single-precision cosine
        turns = np.rint(arg * (1.0 / TWO_PI))
        turns *= TWO_PI
        arg -= turns
        out[start:start + chunk] = amp * np.cos(arg.astype(np.float32)).sum(axis=1, dtype=np.float64)
    return out


def grid_locations(rows: int, cols: int, extent=(0.0, 1.0, 0.0, 1.0)) -> np.ndarray:
    """Cell centres of a ``rows x cols`` grid, row-major, as ``(x, y)`` pairs.

    Row ``i`` runs along ``y`` and column ``j`` along ``x``.
    """
    x0, x1, y0, y1 = extent
    xs = x0 + (np.arange(cols) + 0.5) * (x1 - x0) / cols
    ys = y0 + (np.arange(rows) + 0.5) * (y1 - y0) / rows
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def quadrant_strata(locs, split=(0.5, 0.5)) -> np.ndarray:
    """Four strata numbered ``2 * (x > sx) + (y > sy)``."""
    locs = as_locations(locs)
    return 2 * (locs[:, 0] > split[0]).astype(int) + (locs[:, 1] > split[1]).astype(int)


def grid_strata(rows: int, cols: int, k: int) -> np.ndarray:
    """``k x k`` blocks of a row-major grid; block sizes differ by at most one row/column."""
    if k < 1 or k > min(rows, cols):
        raise ConfigError(f"cannot split a {rows}x{cols} grid into {k}x{k} blocks")
    row_band = np.concatenate([np.full(len(b), i) for i, b in enumerate(np.array_split(np.arange(rows), k))])
    col_band = np.concatenate([np.full(len(b), j) for j, b in enumerate(np.array_split(np.arange(cols), k))])
    return (row_band[:, None] * k + col_band[None, :]).ravel()


def make_strata(grid, scheme) -> np.ndarray:
    """Stratum labels for ``grid = (rows, cols)``; ``scheme`` is ``"quadrant"`` or an int ``k`` for k x k."""
    rows, cols = grid
    if scheme == "quadrant":
        return quadrant_strata(grid_locations(rows, cols))
    return grid_strata(rows, cols, int(scheme))


@dataclass(frozen=True)
class SimConfig:
    rows: int = 100
    cols: int = 100
    extent: tuple = (0.0, 1.0, 0.0, 1.0)
    phi_true: float = 3.0
    sigma2_true: float = 1.0
    beta_true: tuple = (2.0, 3.0)
    covariates: str = "uniform"
    covariate_file: str | None = None
    snr: float = 3.0
    M: int = DEFAULT_M
    missing_fraction: float = 0.2
    block: tuple | None = (0, 25, 0, 40)
    strata: str | int | None = "quadrant"
    covariogram: Covariogram = EXPONENTIAL
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("grid dimensions must be positive")
        if self.snr <= 0:
            raise ConfigError("snr must be positive")
        if self.M < 1:
            raise ConfigError("M must be at least 1")
        if not 0 <= self.missing_fraction < 1:
            raise ConfigError("missing_fraction must lie in [0, 1)")
        if self.covariates not in ("uniform", "file"):
            raise ConfigError("covariates must be 'uniform' or 'file'")
        if self.covariates == "file" and not self.covariate_file:
            raise ConfigError("covariates='file' needs covariate_file")
        if self.block is not None:
            r0, r1, c0, c1 = self.block
            if not (0 <= r0 < r1 <= self.rows and 0 <= c0 < c1 <= self.cols):
                raise BlockOutOfBounds(
                    f"block rows [{r0}, {r1}) x cols [{c0}, {c1}) outside a {self.rows}x{self.cols} grid"
                )

    @property
    def N(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True, eq=False)
class Truth:
    """Everything hidden from the sampler, kept for scoring."""

    w: np.ndarray
    nu: np.ndarray
    eps: np.ndarray
    y_full: np.ndarray
    beta_true: np.ndarray
    tau2: float
    missing: np.ndarray = field(repr=False)

    @property
    def snr(self) -> float:
        return float(np.var(self.w) / np.var(self.eps))


def missing_mask(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Rectangular block plus a random fraction of the full grid drawn from outside the block.

    On the default 100 x 100 grid this masks 1000 block cells and 2000 others.
    """
    N = config.N
    mask = np.zeros(N, dtype=bool)
    if config.block is not None:
        r0, r1, c0, c1 = config.block
        rr, cc = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
        mask[(rr * config.cols + cc).ravel()] = True
    k = int(round(config.missing_fraction * N))
    outside = np.flatnonzero(~mask)
    if k > len(outside):
        raise ConfigError(f"cannot mask {k} random cells outside a block leaving {len(outside)}")
    mask[rng.choice(outside, size=k, replace=False)] = True
    return mask


def _load_covariates(path, N):
    X = np.loadtxt(path, delimiter=",", ndmin=2)
    if len(X) != N:
        raise ConfigError(f"covariate file has {len(X)} rows, grid has {N}")
    return X


def synthesize(config: SimConfig):
    """Simulate ``y = X beta + nu + eps`` on the grid; returns ``(dataset, truth)``."""
    ss = np.random.SeedSequence(config.seed)
    r_field, r_cov, r_noise, r_mask = (np.random.default_rng(s) for s in ss.spawn(4))
    locs = grid_locations(config.rows, config.cols, config.extent)
    N = len(locs)
    beta = np.asarray(config.beta_true, dtype=float)
    if config.covariates == "uniform":
        X = r_cov.random((N, len(beta)))
    else:
        X = _load_covariates(config.covariate_file, N)
        if X.shape[1] != len(beta):
            raise ConfigError(f"covariate file has {X.shape[1]} columns, beta_true has {len(beta)}")
    nu = spectral_field(locs, config.covariogram, config.phi_true, config.sigma2_true, config.M, r_field)
    w = X @ beta + nu
    tau2 = float(np.var(w) / config.snr)
    eps = np.sqrt(tau2) * r_noise.standard_normal(N)
    y = w + eps
    mask = missing_mask(config, r_mask)
    values = np.where(mask, np.nan, y)
    strata = None if config.strata is None else make_strata((config.rows, config.cols), config.strata)
    ds = SpatialDataset(locs, values, X, strata)
    return ds, Truth(w, nu, eps, y, beta, tau2, mask)
