"""Chain diagnostics: effective sample size, Monte-Carlo error, and the K-consistency check.

The K-consistency check compares the kept marginal draws of a K = 1 run to
runs with larger K. If the subsample conditional posterior barely depends on
which subsample was drawn, the extra inner scans change nothing and the
marginals should agree.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import gaussian_kde, ks_2samp

KS_COEF_1PCT = 1.6276  # sqrt(-ln(0.005) / 2), asymptotic two-sample 1% level


def autocorrelation(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n]
    if acf[0] == 0:
        return np.zeros(n)
    return acf / acf[0]


def effective_sample_size(x) -> float:
    """ESS with Geyer's initial positive sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    tau = max(tau, 1.0 / n)
    return float(min(n, n / tau))


def batch_means_se(x, batches: int | None = None) -> float:
    """Monte-Carlo standard error of the mean of a correlated chain by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if batches is None:
        batches = max(2, int(np.sqrt(n)))
    size = n // batches
    if size < 1:
        raise ValueError("chain shorter than the number of batches")
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(batches))


def ks_critical_value(m1: float, m2: float, coef: float = KS_COEF_1PCT) -> float:
    """Asymptotic two-sample KS critical value; pass effective sizes for correlated draws."""
    return coef * np.sqrt((m1 + m2) / (m1 * m2))


def straddles_zero(draws, level: float = 0.95) -> bool:
    """Whether the central ``level`` interval of ``draws`` contains zero."""
    lo, hi = np.quantile(np.asarray(draws, dtype=float), [(1 - level) / 2, (1 + level) / 2])
    return bool(lo <= 0 <= hi)


@dataclass(frozen=True)
class KSRow:
    parameter: str
    K: int
    ks: float
    critical: float
    ess_ref: float
    ess_other: float

    @property
    def below(self) -> bool:
        return self.ks < self.critical


def chain_marginals(chain, p: int | None = None) -> dict:
    """``{name: kept draws}`` for beta_1..beta_p, tau2 and sigma2 from a ChainOutput."""
    beta = chain.kept("beta")
    p = beta.shape[1] if p is None else p
    out = {f"beta_{j + 1}": beta[:, j] for j in range(p)}
    out["tau2"] = chain.kept("tau2")
    out["sigma2"] = chain.kept("sigma2")
    return out


def k_consistency_diagnostic(chains: dict, reference_k: int = 1, grid_points: int = 256):
    """KS distance between the reference-K marginals and every other K.

    ``chains`` maps ``K`` to either a ChainOutput or a ``{name: draws}`` dict.
    Returns ``(rows, densities)``: one :class:`KSRow` per (parameter, K) and
    ``{name: (grid, {K: density})}`` on a grid shared across K.
    """
    margs = {k: (c if isinstance(c, dict) else chain_marginals(c)) for k, c in chains.items()}
    if reference_k not in margs:
        raise KeyError(f"no chain for the reference K={reference_k}")
    ref = margs[reference_k]
    rows = []
    densities = {}
    for name, x in ref.items():
        ess_ref = effective_sample_size(x)
        for k in sorted(margs):
            y = margs[k][name]
            ess = effective_sample_size(y)
            stat = 0.0 if k == reference_k else float(ks_2samp(x, y).statistic)
            rows.append(KSRow(name, k, stat, ks_critical_value(ess_ref, ess), ess_ref, ess))
        allv = np.concatenate([margs[k][name] for k in margs])
        lo, hi = allv.min(), allv.max()
        pad = 0.05 * (hi - lo) if hi > lo else 1.0
        grid = np.linspace(lo - pad, hi + pad, grid_points)
        dens = {}
        for k in sorted(margs):
            v = margs[k][name]
            dens[k] = gaussian_kde(v)(grid) if np.ptp(v) > 0 else np.zeros_like(grid)
        densities[name] = (grid, dens)
    return rows, densities
