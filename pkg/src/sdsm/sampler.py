"""Gibbs-within-composite sampler for the spatial data subset model.

Each composite iteration draws a fresh subsample ``delta`` of the observed
rows, then runs ``K`` Gibbs scans of the conjugate full conditionals on that
subsample only. Parameters are carried from one composite iteration to the
next; predictions are taken from the last scan of every kept iteration.

The per-iteration cost depends on ``n`` (and on the number of prediction
targets), never on the size of the full dataset.
"""
from __future__ import annotations

import enum
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import blas, solve_triangular
from scipy.special import logsumexp

from . import linalg
from .covariogram import EXPONENTIAL, Covariogram, as_locations, corr_from_distance, distance_matrix
from .dataset import SpatialDataset
from .designs import DesignKind, DesignSpec, draw, equal_allocation
from .errors import (
    ConfigError,
    DataError,
    InsufficientData,
    NotPositiveDefinite,
    NumericalError,
    SamplerFailure,
)
from .params import Theta

DEFAULT_PHI_SUPPORT = tuple(np.round(np.arange(1.0, 5.0 + 1e-9, 0.5), 10).tolist())
DEFAULT_PRIOR_SHAPE = 1.0
DEFAULT_PRIOR_SCALE = 1.0
DEFAULT_K = 1
GAUSSIAN_DET_EXPONENT = 0.5


class PredictionTarget(str, enum.Enum):
    LATENT = "latent"
    OBSERVED = "observed"


@dataclass(frozen=True)
class ModelConfig:
    """Everything the sampler needs besides the data.

    ``det_exponent`` is the power of ``det H(phi)`` in the phi update; 0.5 is
    the Gaussian density, 1.0 reproduces the alternative printed form.
    """

    n: int
    G: int
    K: int = DEFAULT_K
    burn_in: int = 0
    covariogram: Covariogram = EXPONENTIAL
    phi_support: tuple = DEFAULT_PHI_SUPPORT
    prior_shape: float = DEFAULT_PRIOR_SHAPE
    prior_scale: float = DEFAULT_PRIOR_SCALE
    design: DesignKind = DesignKind.SRS
    allocations: dict | None = None
    seed: int = 0
    prediction_target: PredictionTarget = PredictionTarget.LATENT
    det_exponent: float = GAUSSIAN_DET_EXPONENT
    init: Theta | None = None
    keep_draws: bool = True

    def __post_init__(self):
        object.__setattr__(self, "covariogram", Covariogram.parse(self.covariogram))
        object.__setattr__(self, "design", DesignKind(self.design))
        object.__setattr__(self, "prediction_target", PredictionTarget(self.prediction_target))
        grid = tuple(float(v) for v in self.phi_support)
        object.__setattr__(self, "phi_support", grid)
        if self.G < 1 or self.K < 1:
            raise ConfigError(f"G and K must be at least 1 (got G={self.G}, K={self.K})")
        if not 0 <= self.burn_in < self.G:
            raise ConfigError(f"burn_in must lie in [0, G), got {self.burn_in}")
        if not grid or any(v <= 0 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("phi_support must be a non-empty, strictly ascending grid of positive values")
        if self.prior_shape <= 0 or self.prior_scale <= 0:
            raise ConfigError("prior shape and scale must be positive")
        if self.det_exponent <= 0:
            raise ConfigError("det_exponent must be positive")

    def initial_theta(self, p: int) -> Theta:
        if self.init is not None:
            if len(self.init.beta) != p:
                raise ConfigError(f"initial beta has length {len(self.init.beta)}, data has p={p}")
            if self.init.phi not in self.phi_support:
                raise ConfigError(f"initial phi {self.init.phi} is not on the support grid")
            return self.init
        return Theta(np.zeros(p), 1.0, 1.0, 1.0, self.phi_support[(len(self.phi_support) - 1) // 2])


@dataclass(frozen=True, eq=False)
class PosteriorState:
    nu_delta: np.ndarray
    beta: np.ndarray
    tau2: float
    sigma2: float
    sigma_beta2: float
    phi: float

    @classmethod
    def from_theta(cls, theta: Theta, n: int) -> "PosteriorState":
        return cls(np.zeros(n), theta.beta.copy(), theta.tau2, theta.sigma2, theta.sigma_beta2, theta.phi)

    @property
    def theta(self) -> Theta:
        return Theta(self.beta, self.tau2, self.sigma2, self.sigma_beta2, self.phi)


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    """Kept predictive draws (one row per kept composite iteration) at the target rows."""

    targets: np.ndarray
    draws: np.ndarray | None
    mean: np.ndarray
    latent_mean: np.ndarray
    target_kind: PredictionTarget


@dataclass(frozen=True, eq=False)
class ChainOutput:
    beta: np.ndarray
    tau2: np.ndarray
    sigma2: np.ndarray
    sigma_beta2: np.ndarray
    phi: np.ndarray
    nu_delta: np.ndarray
    delta: np.ndarray
    predictions: PredictionRecord
    fit_seconds: float
    predict_seconds: float
    iteration_fit_seconds: np.ndarray = field(repr=False)
    burn_in: int = 0

    @property
    def G(self) -> int:
        return len(self.tau2)

    def kept(self, name: str) -> np.ndarray:
        return getattr(self, name)[self.burn_in:]


# ---------------------------------------------------------------- conditionals


def inv_gamma(shape: float, scale: float, rng: np.random.Generator) -> float:
    return scale / rng.gamma(shape)


def fc_nu_delta(state: PosteriorState, y, X, factor: linalg.CholFactor, rng) -> np.ndarray:
    """Draw the latent process at the subsampled rows from its full conditional.

    With ``H = L L^T`` the precision ``I/tau2 + H^{-1}/sigma2`` equals
    ``L^{-T} (L^T L / tau2 + I / sigma2) L^{-1}``; the bracket is factored as
    ``R R^T`` and the draw is ``L R^{-T} (R^{-1} L^T r / tau2 + z)``.
    """
    L = factor.lower
    n = L.shape[0]
    r = np.asarray(y, dtype=float) - np.asarray(X, dtype=float) @ state.beta
    inner = (L.T @ L) / state.tau2
    inner[np.diag_indices(n)] += 1.0 / state.sigma2
    R = linalg.cholesky(inner, check=False).lower
    u = solve_triangular(R, L.T @ r / state.tau2, lower=True, check_finite=False)
    u += rng.standard_normal(n)
    return L @ solve_triangular(R, u, lower=True, trans="T", check_finite=False)


def fc_beta(state: PosteriorState, y, X, rng) -> np.ndarray:
    """Draw the regression coefficients given the current latent process."""
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    if p == 0:
        return np.zeros(0)
    prec = X.T @ X / state.tau2
    prec[np.diag_indices(p)] += 1.0 / state.sigma_beta2
    C = linalg.cholesky(prec, check=False).lower
    rhs = X.T @ (np.asarray(y, dtype=float) - state.nu_delta) / state.tau2
    u = solve_triangular(C, rhs, lower=True, check_finite=False) + rng.standard_normal(p)
    return solve_triangular(C, u, lower=True, trans="T", check_finite=False)


def fc_tau2(residual, a: float, b: float, rng) -> float:
    r = np.asarray(residual, dtype=float)
    return inv_gamma(a + r.size / 2, b + float(r @ r) / 2, rng)


def fc_sigma2(nu_delta, factor: linalg.CholFactor, a: float, b: float, rng) -> float:
    nu = np.asarray(nu_delta, dtype=float)
    return inv_gamma(a + nu.size / 2, b + linalg.quad_form(factor, nu) / 2, rng)


def fc_sigma_beta2(beta, a: float, b: float, rng) -> float:
    beta = np.asarray(beta, dtype=float)
    return inv_gamma(a + beta.size / 2, b + float(beta @ beta) / 2, rng)


class FactorCache:
    """Cholesky factors of the subsample correlation matrix, one per phi, for one delta.

    For the exponential kernel ``exp(-phi_j D) = exp(-phi_i D) * exp(-(phi_j - phi_i) D)``,
    so on a grid the matrices are built by elementwise products and one
    ``exp`` per distinct grid gap rather than per grid point.
    """

    def __init__(self, locs, covariogram=EXPONENTIAL):
        self.covariogram = Covariogram.parse(covariogram)
        self.dist = distance_matrix(locs)
        self._factors: dict[float, linalg.CholFactor] = {}
        self._corr: dict[float, np.ndarray] = {}
        self._steps: dict[float, np.ndarray] = {}

    def corr(self, phi: float) -> np.ndarray:
        h = self._corr.get(phi)
        if h is not None:
            return h
        below = [q for q in self._corr if q < phi]
        if below:
            base = max(below)
            gap = round(phi - base, 12)
            step = self._steps.get(gap)
            if step is None:
                step = self._steps[gap] = corr_from_distance(self.covariogram, self.dist, gap)
            h = self._corr[base] * step
        else:
            h = corr_from_distance(self.covariogram, self.dist, phi)
        np.fill_diagonal(h, 1.0)
        self._corr[phi] = h
        return h

    def prime(self, phis) -> None:
        for phi in sorted(phis):
            self.corr(phi)

    def __call__(self, phi: float) -> linalg.CholFactor:
        f = self._factors.get(phi)
        if f is None:
            try:
                f = linalg.cholesky(self.corr(phi), check=False)
            except NotPositiveDefinite as exc:
                raise NotPositiveDefinite(f"phi={phi}: {exc}", phi=phi) from None
            self._factors[phi] = f
        return f


def phi_log_mass(nu_delta, sigma2: float, phi_support, factors, det_exponent=GAUSSIAN_DET_EXPONENT):
    """Unnormalized log mass of each grid value of phi."""
    nu = np.asarray(nu_delta, dtype=float)
    out = np.empty(len(phi_support))
    for j, phi in enumerate(phi_support):
        f = factors(phi)
        out[j] = -det_exponent * linalg.log_det(f) - linalg.quad_form(f, nu) / (2.0 * sigma2)
    return out


def phi_probabilities(nu_delta, sigma2, phi_support, factors, det_exponent=GAUSSIAN_DET_EXPONENT):
    lm = phi_log_mass(nu_delta, sigma2, phi_support, factors, det_exponent)
    return np.exp(lm - logsumexp(lm))


def fc_phi(nu_delta, sigma2: float, locs_delta, phi_support, covariogram=EXPONENTIAL, rng=None,
           factors=None, det_exponent=GAUSSIAN_DET_EXPONENT) -> float:
    """Draw phi from its discrete full conditional over ``phi_support``."""
    support = tuple(float(v) for v in phi_support)
    if len(support) == 1:
        return support[0]
    if factors is None:
        factors = FactorCache(locs_delta, covariogram)
    probs = phi_probabilities(nu_delta, sigma2, support, factors, det_exponent)
    j = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    return support[min(j, len(support) - 1)]


# ------------------------------------------------------------------ prediction


def predictive_moments(factor: linalg.CholFactor, nu_delta, cross, linv=None):
    """Conditional mean and unit-variance factor of the process at new locations.

    ``cross`` is the ``m x n`` correlation between targets and subsample. The
    returned variance multiplier is ``max(0, 1 - h' H^{-1} h)``.
    """
    if linv is None:
        linv = linalg.lower_inverse(factor)
    alpha = linv.T @ (linv @ np.asarray(nu_delta, dtype=float))
    mean = cross @ alpha
    # L^{-1} h for every target at once; triangular multiply on the column-major transpose
    u = blas.dtrmm(1.0, linv, cross.T, lower=1)
    var = 1.0 - np.einsum("ij,ij->j", u, u)
    return mean, np.maximum(var, 0.0)


def predict(factor, nu_delta, sigma2: float, cross, z) -> np.ndarray:
    """Latent draws at all targets given one standard-normal vector ``z``."""
    mean, var = predictive_moments(factor, nu_delta, cross)
    return mean + np.sqrt(sigma2 * var) * z


def predict_at(loc, nu_delta, sigma2: float, phi: float, locs_delta, rng,
               covariogram=EXPONENTIAL, factor=None) -> float:
    """Single-location draw of the latent process given the subsample values."""
    locs_delta = as_locations(locs_delta)
    loc = np.asarray(loc, dtype=float).reshape(1, -1)
    if factor is None:
        factor = FactorCache(locs_delta, covariogram)(phi)
    h = corr_from_distance(covariogram, distance_matrix(loc, locs_delta), phi)[0]
    mean = float(h @ linalg.solve(factor, nu_delta))
    var = max(0.0, 1.0 - linalg.quad_form(factor, h))
    return mean + np.sqrt(sigma2 * var) * rng.standard_normal()


# ---------------------------------------------------------------- composite loop


def chain_streams(seed: int, chain: int = 0):
    """Independent generators for design draws, Gibbs updates, latent prediction and nugget noise."""
    ss = np.random.SeedSequence(seed, spawn_key=(chain,))
    return tuple(np.random.default_rng(s) for s in ss.spawn(4))


def design_over_observed(config: ModelConfig, data: SpatialDataset, observed) -> DesignSpec:
    n_obs = len(observed)
    if config.n < 1:
        raise InsufficientData("the sampler needs a subsample size of at least 1")
    if config.n > n_obs:
        raise InsufficientData(f"subsample size n={config.n} exceeds the {n_obs} observed rows")
    if config.design is DesignKind.SRS:
        return DesignSpec.srs(n_obs, config.n)
    if data.strata is None:
        raise DataError("a stratified design needs stratum labels in the data")
    labels = data.strata[observed]
    alloc = config.allocations if config.allocations is not None else equal_allocation(labels, config.n)
    spec = DesignSpec.stratified(labels, alloc)
    if spec.n != config.n:
        raise ConfigError(f"allocations sum to {spec.n}, but n={config.n}")
    return spec


def run_composite(config: ModelConfig, data: SpatialDataset, targets, chain: int = 0) -> ChainOutput:
    """Run one chain of the Gibbs-within-composite sampler.

    ``targets`` are row indices of ``data`` to predict at. Response values are
    read only through ``data.take`` at the rows of the current subsample.
    """
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.size == 0:
        raise DataError("at least one prediction target is required")
    observed = data.observed_index()
    spec = design_over_observed(config, data, observed)
    rng_design, rng_gibbs, rng_pred, rng_noise = chain_streams(config.seed, chain)
    a, b = config.prior_shape, config.prior_scale
    G, K, g0 = config.G, config.K, config.burn_in
    n, p, m = config.n, data.p, targets.size
    target_locs, target_X = data.locate(targets)

    state = PosteriorState.from_theta(config.initial_theta(p), n)
    out_beta = np.empty((G, p))
    out_tau2, out_sigma2, out_sb2, out_phi = (np.empty(G) for _ in range(4))
    out_nu = np.empty((G, n))
    out_delta = np.empty((G, n), dtype=np.int64)
    iter_fit = np.empty(G)
    kept = G - g0
    draws = np.empty((kept, m)) if config.keep_draws else None
    sum_draw = np.zeros(m)
    sum_latent = np.zeros(m)
    observed_target = config.prediction_target is PredictionTarget.OBSERVED
    fit_total = pred_total = 0.0

    for g in range(G):
        t0 = time.perf_counter()
        k = 0
        try:
            rows = observed[draw(spec, rng_design).included]
            y = data.take(rows)
            locs, X = data.locate(rows)
            factors = FactorCache(locs, config.covariogram)
            factors.prime(config.phi_support)
            for k in range(1, K + 1):
                phi_prev, sigma2_prev = state.phi, state.sigma2
                f_prev = factors(phi_prev)
                nu = fc_nu_delta(state, y, X, f_prev, rng_gibbs)
                state = replace(state, nu_delta=nu)
                beta = fc_beta(state, y, X, rng_gibbs)
                tau2 = fc_tau2(y - X @ beta - nu, a, b, rng_gibbs)
                sigma2 = fc_sigma2(nu, f_prev, a, b, rng_gibbs)
                sb2 = fc_sigma_beta2(beta, a, b, rng_gibbs)
                phi = fc_phi(nu, sigma2, locs, config.phi_support, config.covariogram, rng_gibbs,
                             factors=factors, det_exponent=config.det_exponent)
                state = PosteriorState(nu, beta, tau2, sigma2, sb2, phi)
            t1 = time.perf_counter()
            if g >= g0:
                # last scan only: uses phi, sigma2 from before that scan and its new nu
                cross = corr_from_distance(config.covariogram, distance_matrix(target_locs, locs), phi_prev)
                latent = target_X @ state.beta + predict(f_prev, state.nu_delta, sigma2_prev, cross,
                                                         rng_pred.standard_normal(m))
                sum_latent += latent
                if observed_target:
                    latent = latent + np.sqrt(state.tau2) * rng_noise.standard_normal(m)
                sum_draw += latent
                if draws is not None:
                    draws[g - g0] = latent
            t2 = time.perf_counter()
        except NumericalError as exc:
            raise SamplerFailure(str(exc), g=g + 1, k=k, phi=getattr(exc, "phi", None)) from exc
        except np.linalg.LinAlgError as exc:
            raise SamplerFailure(str(exc), g=g + 1, k=k) from exc
        iter_fit[g] = t1 - t0
        fit_total += t1 - t0
        pred_total += t2 - t1
        out_beta[g] = state.beta
        out_tau2[g], out_sigma2[g], out_sb2[g], out_phi[g] = state.tau2, state.sigma2, state.sigma_beta2, state.phi
        out_nu[g] = state.nu_delta
        out_delta[g] = rows

    record = PredictionRecord(targets, draws, sum_draw / kept, sum_latent / kept, config.prediction_target)
    return ChainOutput(out_beta, out_tau2, out_sigma2, out_sb2, out_phi, out_nu, out_delta, record,
                       fit_total, pred_total, iter_fit, g0)


def _run_one(args):
    config, data, targets, chain = args
    return run_composite(config, data, targets, chain)


def run_chains(config: ModelConfig, data: SpatialDataset, targets, chains: int = 1,
               workers: int | None = None) -> list[ChainOutput]:
    """Run independent chains (chain ``c`` uses seed substream ``c``); results do not depend on ``workers``."""
    jobs = [(config, data, targets, c) for c in range(chains)]
    if chains == 1 or workers == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
