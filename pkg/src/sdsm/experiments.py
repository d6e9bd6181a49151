"""Multi-run experiments: the subsample-size sweep and the K-consistency check."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import SpatialDataset
from .designs import DesignKind
from .diagnostics import k_consistency_diagnostic
from .metrics import DEFAULT_ALPHA, ScoreReport, pairwise_prediction_gap, score_report
from .sampler import ModelConfig, PredictionTarget, run_composite


@dataclass(frozen=True, eq=False)
class SweepPoint:
    design: str
    n: int
    scores: ScoreReport
    fit_seconds: float
    predict_seconds: float
    latent_mean: np.ndarray


def sweep(data: SpatialDataset, targets, base: ModelConfig, n_list, designs=("srs",),
          y_heldout=None, w_true=None, alpha: float = DEFAULT_ALPHA, progress=None):
    """Fit once per ``(design, n)`` and score the predictions at ``targets``.

    ``y_heldout`` (noisy truth at the targets) scores the interval forecasts,
    ``w_true`` (noise-free process) the point forecasts; either may be
    omitted when the other is given. Returns ``{design: [SweepPoint, ...]}``
    ordered by ascending ``n`` and the gaps between consecutive predictions.
    """
    targets = np.asarray(targets)
    if y_heldout is None and w_true is None:
        raise ValueError("sweep needs held-out data or the true process to score against")
    target_kind = PredictionTarget.OBSERVED if y_heldout is not None else PredictionTarget.LATENT
    interval_truth = y_heldout if y_heldout is not None else w_true
    results, gaps = {}, {}
    for design in designs:
        points = []
        for n in sorted(n_list):
            cfg = replace(base, n=int(n), design=design, prediction_target=target_kind, keep_draws=True)
            out = run_composite(cfg, data, targets)
            pr = out.predictions
            rep = score_report(pr.draws, interval_truth, point=pr.latent_mean, alpha=alpha,
                               point_truth=w_true)
            points.append(SweepPoint(DesignKind(design).value, int(n), rep, out.fit_seconds, out.predict_seconds,
                                     pr.latent_mean))
            if progress is not None:
                progress(points[-1])
        results[design] = points
        gaps[design] = pairwise_prediction_gap([p.latent_mean for p in points])
    return results, gaps


def k_diagnostic(data: SpatialDataset, base: ModelConfig, k_list, replicates: int = 1, targets=None,
                 reference_k: int = 1):
    """Run the sampler for every K in ``k_list`` (and every replicate seed) and compare marginals.

    Replicate ``r`` uses seed ``base.seed + r``; the KS reference is ``reference_k``.
    Returns a list of ``(replicate, rows, densities, chains)``.
    """
    if targets is None:
        targets = data.observed_index()[:1]
    out = []
    for r in range(replicates):
        chains = {}
        for K in sorted(set(k_list) | {reference_k}):
            cfg = replace(base, K=int(K), seed=base.seed + r, keep_draws=False)
            chains[int(K)] = run_composite(cfg, data, targets)
        rows, dens = k_consistency_diagnostic(chains, reference_k=reference_k)
        out.append((r, rows, dens, chains))
    return out
