"""Closed-form data moments and spatial profiles under a subsampling design.

The data at an unsampled position follows an unspecified "true" model; here
that model is pinned down by a Gaussian surrogate (:class:`TrueModelSpec`)
so the moment formulas can be evaluated and checked by simulation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .covariogram import EXPONENTIAL, as_locations, corr, distance_matrix
from .designs import DesignKind, DesignSpec, srs_coefficients
from .errors import InvalidParameter, NonStationaryTrueModel
from .params import Theta


@dataclass(frozen=True)
class TrueModelSpec:
    """Gaussian surrogate for the true data model.

    Parameters
    ----------
    mean : callable or array_like
        True mean per location; a callable receives an ``(m, d)`` array.
    sigma2 : float
        True variance, shared by all locations.
    cov : callable
        ``cov(si, sj)`` for two distinct locations.
    nugget : float
        Nugget of the de-trended true process (jump of the covariance at lag 0+).
    lag_cov : callable, optional
        Covariance as a function of the lag norm ``d > 0``. Present only for a
        weakly stationary true model; spatial profiles need it.
    zero_lag : float, optional
        First lag at which ``lag_cov`` is exactly zero (``inf`` if never), when
        known analytically. Otherwise it is searched for numerically.
    """

    mean: Callable | np.ndarray
    sigma2: float
    cov: Callable
    nugget: float = 0.0
    lag_cov: Callable | None = None
    zero_lag: float | None = None

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise InvalidParameter("true variance must be positive")
        if not 0 <= self.nugget <= self.sigma2:
            raise InvalidParameter("true nugget must lie in [0, sigma2]")

    @classmethod
    def exponential(cls, mean, sill: float, nugget: float, phi: float) -> "TrueModelSpec":
        """Stationary surrogate ``C(d) = (sill - nugget) exp(-phi d)`` for ``d > 0``."""
        psill = sill - nugget

        def lag_cov(d):
            return psill * np.exp(-phi * np.asarray(d, dtype=float))

        def cov(si, sj):
            return float(lag_cov(np.linalg.norm(np.subtract(si, sj))))

        return cls(mean, float(sill), cov, float(nugget), lag_cov, float("inf"))

    @property
    def stationary(self) -> bool:
        return self.lag_cov is not None

    def mean_at(self, locs) -> np.ndarray:
        locs = as_locations(locs)
        if callable(self.mean):
            return np.asarray(self.mean(locs), dtype=float).reshape(len(locs))
        m = np.asarray(self.mean, dtype=float)
        return np.broadcast_to(m, (len(locs),)).astype(float)

    def cov_matrix(self, locs) -> np.ndarray:
        """Full covariance among ``locs`` (diagonal ``sigma2``)."""
        locs = as_locations(locs)
        m = len(locs)
        if self.lag_cov is not None:
            c = self.lag_cov(distance_matrix(locs))
        else:
            c = np.empty((m, m))
            for i in range(m):
                for j in range(i + 1):
                    c[i, j] = c[j, i] = self.cov(locs[i], locs[j])
        c = np.array(c, dtype=float)
        np.fill_diagonal(c, self.sigma2)
        return c


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    variance: np.ndarray
    cov: np.ndarray
    design: DesignKind
    mean_se: np.ndarray | None = None
    variance_se: np.ndarray | None = None
    cov_se: np.ndarray | None = None


@dataclass(frozen=True)
class SpatialProfile:
    sill: float
    nugget: float
    effective_range: float
    lags: np.ndarray | None = None
    variogram: np.ndarray | None = None
    case: str = "srs"


def _xbeta(theta: Theta, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X @ theta.beta


def _pair_weights(spec: DesignSpec):
    """Dense ``(w_true, w_param, w_cross)`` matrices over a stratified population."""
    m = spec.N
    w = [np.empty((m, m)) for _ in range(3)]
    R = len(spec.strata)
    p_r = [spec.inclusion_fraction(k) for k in range(R)]
    for k in range(R):
        for l in range(R):
            ix = np.ix_(spec.members(k), spec.members(l))
            if k == l:
                _, a, b = srs_coefficients(spec.allocations[k], spec.stratum_sizes[k])
                coefs = (a, b + p_r[k] ** 2, b)
            else:
                coefs = (p_r[k] * p_r[l] - p_r[k] - p_r[l] + 1, p_r[k] * p_r[l], 0.0)
            for target, c in zip(w, coefs):
                target[ix] = c
    return tuple(w)


def _assemble(theta, true_model, X, locs, p, weights, covariogram, kind) -> MomentSummary:
    xb = _xbeta(theta, X)
    mu = true_model.mean_at(locs)
    diff = xb - mu
    mean = p * xb + (1 - p) * mu
    variance = (p * (theta.tau2 + theta.sigma2) + (1 - p) * true_model.sigma2
                + p * (1 - p) * diff ** 2)
    h = corr(covariogram, distance_matrix(locs), theta.phi)
    w_true, w_param, w_cross = weights
    # grouping keeps the n = 0 and n = N limits exact
    cov = w_true * true_model.cov_matrix(locs) + w_param * (theta.sigma2 * h) + w_cross * np.outer(diff, diff)
    np.fill_diagonal(cov, variance)
    return MomentSummary(mean, variance, cov, kind)


def srs_moments(theta: Theta, true_model: TrueModelSpec, X, locs, N: int, n: int,
                covariogram=EXPONENTIAL) -> MomentSummary:
    """Moments of the data under SRS of ``n`` out of ``N``, at the given locations.

    The locations may be any subset of the population; SRS weights depend on
    ``N`` and ``n`` only.
    """
    locs = as_locations(locs)
    p, a, b = srs_coefficients(n, N)
    m = len(locs)
    weights = (np.full((m, m), a), np.full((m, m), b + p ** 2), np.full((m, m), b))
    return _assemble(theta, true_model, X, locs, np.full(m, p), weights, covariogram, DesignKind.SRS)


def strat_moments(theta: Theta, true_model: TrueModelSpec, X, locs, spec: DesignSpec,
                  covariogram=EXPONENTIAL) -> MomentSummary:
    """Moments of the data under a stratified design over the population ``locs``."""
    if spec.kind is not DesignKind.STRATIFIED:
        raise InvalidParameter("strat_moments needs a stratified design")
    locs = as_locations(locs)
    if len(locs) != spec.N:
        raise InvalidParameter(f"design covers {spec.N} positions but {len(locs)} locations given")
    frac = np.array([spec.inclusion_fraction(r) for r in range(len(spec.strata))])
    return _assemble(theta, true_model, X, locs, frac[spec.stratum_index], _pair_weights(spec),
                     covariogram, DesignKind.STRATIFIED)


def design_data_moments(theta: Theta, true_model: TrueModelSpec, X, locs, spec: DesignSpec,
                        covariogram=EXPONENTIAL) -> MomentSummary:
    """Dispatch to :func:`srs_moments` or :func:`strat_moments` by design kind."""
    if spec.kind is DesignKind.SRS:
        return srs_moments(theta, true_model, X, locs, spec.N, spec.n, covariogram)
    return strat_moments(theta, true_model, X, locs, spec, covariogram)


def detrended_cov(coefficients, true_cov: float, theta: Theta, h_ij: float) -> float:
    """Covariance of the de-trended data for one pair of distinct locations.

    ``coefficients`` is the triple from :func:`sdsm.designs.design_coefficients`;
    the cross-product weight does not enter the de-trended covariance.
    """
    w_true, w_param, _ = coefficients
    return w_true * true_cov + w_param * (theta.sigma2 * h_ij)


def _case_weights(spec: DesignSpec, strata):
    """Return (sill, w_true, w_param, label) for the SRS case or a stratum pair."""
    if spec.kind is DesignKind.SRS:
        p, a, b = srs_coefficients(spec.n, spec.N)
        return p, p, a, b + p ** 2, "srs"
    if strata is None:
        raise InvalidParameter("stratified profiles need a (r, t) stratum pair")
    r, t = (spec.strata.index(s) for s in strata)
    p_r, p_t = spec.inclusion_fraction(r), spec.inclusion_fraction(t)
    if r == t:
        _, a, b = srs_coefficients(spec.allocations[r], spec.stratum_sizes[r])
        return p_r, p_r, a, b + p_r ** 2, "same-stratum"
    return p_r, p_t, p_r * p_t - p_r - p_t + 1, p_r * p_t, "cross-stratum"


def _require_stationary(true_model):
    if not true_model.stationary:
        raise NonStationaryTrueModel("spatial profiles need a lag-only true covariance")


def variogram(spec: DesignSpec, theta: Theta, true_model: TrueModelSpec, lags,
              covariogram=EXPONENTIAL, strata=None) -> np.ndarray:
    """Variogram ``2 gamma(d)`` of the de-trended data on a grid of lag norms.

    For a stratified design ``strata=(r, t)`` selects the same-stratum
    (``r == t``) or cross-stratum curve. ``2 gamma(0) = 0``.
    """
    _require_stationary(true_model)
    p_i, p_j, w_true, w_param, _ = _case_weights(spec, strata)
    d = np.asarray(lags, dtype=float)
    s2 = theta.tau2 + theta.sigma2
    level = (p_i + p_j) * s2 + (2 - p_i - p_j) * true_model.sigma2
    with np.errstate(invalid="ignore"):
        c = w_true * true_model.lag_cov(d) + w_param * (theta.sigma2 * corr(covariogram, d, theta.phi))
    out = level - 2 * c
    return np.where(d > 0, out, 0.0)


def variogram_curves(spec: DesignSpec, theta: Theta, true_model: TrueModelSpec, lags,
                     covariogram=EXPONENTIAL) -> dict:
    """All variogram curves of a design, keyed by stratum pair (``None`` for SRS)."""
    if spec.kind is DesignKind.SRS:
        return {None: variogram(spec, theta, true_model, lags, covariogram)}
    out = {}
    for i, r in enumerate(spec.strata):
        for t in spec.strata[i:]:
            out[(r, t)] = variogram(spec, theta, true_model, lags, covariogram, strata=(r, t))
    return out


def sill_nugget_range(spec: DesignSpec, theta: Theta, true_model: TrueModelSpec,
                      covariogram=EXPONENTIAL, drop_fraction: float = 0.05, strata=None,
                      lags=None) -> SpatialProfile:
    """Sill, nugget and effective range of the de-trended data.

    The effective range is the smallest lag where the de-trended covariance has
    fallen to ``drop_fraction`` of its value at lag ``0+`` (bisection to 1e-9).
    With ``drop_fraction = 0`` the literal definition is used: the first lag
    where the covariance is exactly zero, which is ``inf`` for exponential
    kernels with positive weights.
    """
    _require_stationary(true_model)
    if not 0 <= drop_fraction < 1:
        raise InvalidParameter("drop_fraction must lie in [0, 1)")
    p_i, p_j, w_true, w_param, case = _case_weights(spec, strata)
    pbar = (p_i + p_j) / 2
    sill = pbar * (theta.tau2 + theta.sigma2) + (1 - pbar) * true_model.sigma2
    if case == "cross-stratum":
        q = (p_i + p_j - 2 * p_i * p_j) / 2
        nugget = (pbar * theta.tau2 + q * theta.sigma2) + (q * true_model.sigma2 + w_true * true_model.nugget)
    else:
        p, b = p_i, w_param - p_i ** 2
        nugget = ((p * theta.tau2 + (p - b - p ** 2) * theta.sigma2)
                  + ((1 - p - w_true) * true_model.sigma2 + w_true * true_model.nugget))

    def c(d):
        return float(w_true * true_model.lag_cov(d)
                     + w_param * theta.sigma2 * corr(covariogram, d, theta.phi))

    c0 = w_true * (true_model.sigma2 - true_model.nugget) + w_param * theta.sigma2
    target = drop_fraction * c0
    if c0 <= 0:
        rng_eff = 0.0
    elif drop_fraction == 0 and (w_param > 0 or true_model.zero_lag is not None):
        # the exponential correlation is positive at every finite lag; floating-point
        # underflow must not be mistaken for an exact zero
        rng_eff = float("inf") if w_param > 0 else true_model.zero_lag
    else:
        hi = 1.0
        while c(hi) > target and hi < 1e12:
            hi *= 2
        if c(hi) > target:
            rng_eff = float("inf")
        else:
            # smallest lag with c(d) <= target; c is non-increasing, so bisect the predicate
            lo = 0.0
            while hi - lo > 1e-10:
                mid = 0.5 * (lo + hi)
                if c(mid) <= target:
                    hi = mid
                else:
                    lo = mid
            rng_eff = hi
    curve = None
    if lags is not None:
        curve = variogram(spec, theta, true_model, lags, covariogram, strata)
        lags = np.asarray(lags, dtype=float)
    return SpatialProfile(sill, nugget, rng_eff, lags, curve, case)


def mc_generative_oracle(spec: DesignSpec, theta: Theta, true_model: TrueModelSpec, X, locs,
                         draws: int = 100_000, seed=None, covariogram=EXPONENTIAL,
                         batch: int = 20_000) -> MomentSummary:
    """Empirical moments of ``Y | theta`` by brute-force simulation of the data subset model.

    Each draw samples delta from the design, the latent process from the
    parametric model, and the unsampled data from the Gaussian surrogate.
    Subsets are drawn by ranking i.i.d. uniforms (within strata), which is
    independent of the samplers in :mod:`sdsm.designs`. Standard errors are
    attached to every mean, variance and covariance.
    """
    rng = np.random.default_rng(seed)
    locs = as_locations(locs)
    N = len(locs)
    if N != spec.N:
        raise InvalidParameter("oracle locations must cover the whole design population")
    xb = _xbeta(theta, X)
    mu = true_model.mean_at(locs)
    eye = 1e-12 * np.eye(N)
    L_par = np.linalg.cholesky(theta.sigma2 * corr(covariogram, distance_matrix(locs), theta.phi) + eye)
    L_true = np.linalg.cholesky(true_model.cov_matrix(locs) + eye)
    if spec.kind is DesignKind.SRS:
        groups = [(np.arange(N), spec.n)]
    else:
        groups = [(spec.members(r), k) for r, k in enumerate(spec.allocations)]

    ys = []
    for start in range(0, draws, batch):
        m = min(batch, draws - start)
        delta = np.zeros((m, N), dtype=bool)
        for members, k in groups:
            sub = np.zeros((m, len(members)), dtype=bool)
            picks = np.argsort(rng.random((m, len(members))), axis=1)[:, :k]
            np.put_along_axis(sub, picks, True, axis=1)
            delta[:, members] = sub
        nu = rng.standard_normal((m, N)) @ L_par.T
        eps = np.sqrt(theta.tau2) * rng.standard_normal((m, N))
        y_true = mu + rng.standard_normal((m, N)) @ L_true.T
        ys.append(np.where(delta, xb + nu + eps, y_true))
    y = np.concatenate(ys)
    mean = y.mean(0)
    cen = y - mean
    cov = cen.T @ cen / draws
    # SE of a covariance: spread of the centred products
    sq = np.zeros((N, N))
    for start in range(0, draws, batch):
        c = cen[start:start + batch]
        prod = c[:, :, None] * c[:, None, :]
        sq += ((prod - cov) ** 2).sum(0)
    cov_se = np.sqrt(sq / draws / draws)
    return MomentSummary(mean, np.diag(cov).copy(), cov, spec.kind,
                         np.sqrt(np.diag(cov) / draws), np.diag(cov_se).copy(), cov_se)
