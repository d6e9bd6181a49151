"""Forecast scores over held-out locations."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch, TooFewSamples

DEFAULT_ALPHA = 0.05


def _pair(truth, pred):
    t = np.asarray(truth, dtype=float).reshape(-1)
    p = np.asarray(pred, dtype=float).reshape(-1)
    if t.shape != p.shape:
        raise DimensionMismatch(f"truth has {t.size} entries, predictions {p.size}")
    if t.size == 0:
        raise DimensionMismatch("need at least one location")
    return t, p


def rmse(truth, predictions) -> float:
    """Root of the mean squared error (per location, not the raw sum)."""
    t, p = _pair(truth, predictions)
    d = t - p
    return float(np.sqrt(np.mean(d * d)))


def mae(truth, predictions) -> float:
    t, p = _pair(truth, predictions)
    return float(np.mean(np.abs(t - p)))


def _samples(samples, truth):
    s = np.asarray(samples, dtype=float)
    t = np.asarray(truth, dtype=float).reshape(-1)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[1] != t.size:
        raise DimensionMismatch(f"samples cover {s.shape[1]} locations, truth has {t.size}")
    if s.shape[0] < 2:
        raise TooFewSamples("CRPS needs at least two predictive samples per location")
    return s, t


def crps_per_location(samples, truth) -> np.ndarray:
    """Empirical CRPS at each location; ``samples`` is ``(draws, locations)``.

    ``mean|X - y| - 0.5 * mean|X - X'|`` with the second mean over all ordered
    sample pairs, evaluated exactly through the order statistics:
    ``sum_ij |x_i - x_j| = 2 * sum_i (2i - m + 1) x_(i)`` for 0-based ``i``.
    """
    s, t = _samples(samples, truth)
    m = s.shape[0]
    first = np.mean(np.abs(s - t), axis=0)
    weights = 2.0 * np.arange(m) - m + 1
    pair_sum = 2.0 * (weights @ np.sort(s, axis=0))
    return first - 0.5 * pair_sum / (m * m)


def crps(samples, truth) -> float:
    return float(np.mean(crps_per_location(samples, truth)))


def predictive_interval(samples, alpha: float = DEFAULT_ALPHA):
    """Central ``1 - alpha`` interval from empirical quantiles (linear interpolation)."""
    s = np.asarray(samples, dtype=float)
    lo, hi = np.quantile(s, [alpha / 2, 1 - alpha / 2], axis=0, method="linear")
    return lo, hi


def interval_score(lower, upper, truth, alpha: float = DEFAULT_ALPHA) -> float:
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    y = np.asarray(truth, dtype=float)
    if not (lo.shape == hi.shape == y.shape):
        raise DimensionMismatch("lower, upper and truth must have the same shape")
    score = (hi - lo) + (2 / alpha) * (lo - y) * (y < lo) + (2 / alpha) * (y - hi) * (y > hi)
    return float(np.mean(score))


def coverage(lower, upper, truth, alpha: float = DEFAULT_ALPHA) -> float:
    """Fraction of truths inside ``[lower, upper]``; ``alpha`` only labels the interval."""
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    y = np.asarray(truth, dtype=float)
    if not (lo.shape == hi.shape == y.shape):
        raise DimensionMismatch("lower, upper and truth must have the same shape")
    return float(np.mean((lo <= y) & (y <= hi)))


def pairwise_prediction_gap(w_hat_seq) -> np.ndarray:
    """Squared distance between consecutive prediction vectors (ordered by ascending n)."""
    w = [np.asarray(v, dtype=float) for v in w_hat_seq]
    out = []
    for a, b in zip(w, w[1:]):
        if a.shape != b.shape:
            raise DimensionMismatch("prediction vectors must share their locations")
        d = a - b
        out.append(float(d @ d))
    return np.array(out)


@dataclass(frozen=True)
class ScoreReport:
    mae: float
    rmse: float
    crps: float
    interval_score: float
    coverage: float
    alpha: float
    n_eval: int

    def as_dict(self) -> dict:
        return asdict(self)


def score_report(samples, truth, point=None, alpha: float = DEFAULT_ALPHA, point_truth=None) -> ScoreReport:
    """All scores against ``truth``.

    ``samples`` are predictive draws ``(draws, locations)``; ``point`` is the
    point forecast for MAE/RMSE (defaults to the sample mean). Pass draws of
    the target that ``truth`` measures: noisy draws for held-out data. MAE
    and RMSE may be scored against a different reference (``point_truth``,
    for example the noise-free process).
    """
    s, t = _samples(samples, truth)
    point = s.mean(axis=0) if point is None else np.asarray(point, dtype=float)
    ref = t if point_truth is None else np.asarray(point_truth, dtype=float)
    lo, hi = predictive_interval(s, alpha)
    return ScoreReport(
        mae=mae(ref, point),
        rmse=rmse(ref, point),
        crps=crps(s, t),
        interval_score=interval_score(lo, hi, t, alpha),
        coverage=coverage(lo, hi, t, alpha),
        alpha=alpha,
        n_eval=t.size,
    )
