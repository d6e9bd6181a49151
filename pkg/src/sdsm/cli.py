"""``sdsm`` command-line entry point.

    sdsm simulate|fit|sweep|properties|diagnose|evaluate --config run.json [--out DIR]
         [--seed S] [--chains K] [--n-list 20,40] [--k-list 1,5]

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
``SDSM_THREADS`` caps the number of worker processes used for parallel chains.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plots
from .config import RunConfig, load_config
from .dataset import FLOAT_FMT, SpatialDataset, atomic_write_text, read_csv, write_csv, write_npz
from .designs import DesignKind, DesignSpec, equal_allocation
from .errors import (
    BlockOutOfBounds,
    ConfigError,
    DataError,
    DimensionMismatch,
    InvalidAllocation,
    InvalidParameter,
    NonStationaryTrueModel,
    NumericalError,
    TooFewSamples,
    UnsupportedKernel,
)
from .experiments import k_diagnostic, sweep
from .metrics import predictive_interval, score_report
from .params import Theta
from .properties import TrueModelSpec, design_data_moments, sill_nugget_range, variogram
from .sampler import PredictionTarget, run_chains
from .simulator import Truth, synthesize

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

TRUTH_COLUMNS = ("x", "y", "w", "nu", "eps", "y_full", "missing")


def _f(v) -> str:
    return FLOAT_FMT.format(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _workers() -> int | None:
    v = os.environ.get("SDSM_THREADS")
    if not v:
        return None
    try:
        return max(1, int(v))
    except ValueError:
        raise ConfigError(f"SDSM_THREADS must be an integer, got {v!r}") from None


# ------------------------------------------------------------------- truth I/O


def write_truth(ds: SpatialDataset, truth: Truth, out: Path) -> None:
    rows = [
        [_f(ds.coords[i, 0]), _f(ds.coords[i, 1]), _f(truth.w[i]), _f(truth.nu[i]), _f(truth.eps[i]),
         _f(truth.y_full[i]), int(truth.missing[i])]
        for i in range(ds.N)
    ]
    atomic_write_text(out / "truth.csv", _csv_text(TRUTH_COLUMNS, rows))
    _write_json(out / "truth.json", {
        "beta_true": truth.beta_true.tolist(),
        "tau2": truth.tau2,
        "snr": truth.snr,
        "N": ds.N,
        "missing": int(truth.missing.sum()),
        "observed": int(ds.N - truth.missing.sum()),
    })


def read_truth(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRUTH_COLUMNS:
            raise DataError(f"{path}: truth header must be {','.join(TRUTH_COLUMNS)}")
        cols = list(zip(*reader))
    try:
        return {name: np.array(col, dtype=float) for name, col in zip(header, cols)}
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric truth field ({exc})") from None


def _load_inputs(cfg: RunConfig):
    """Dataset and (optional) truth: from files if configured, else simulated in memory."""
    if cfg.data:
        ds = read_csv(cfg.data)
        truth = read_truth(cfg.truth) if cfg.truth else None
        return ds, truth
    ds, t = synthesize(cfg.sim_config())
    truth = {"w": t.w, "y_full": t.y_full, "missing": t.missing.astype(float)}
    return ds, truth


def _targets(cfg: RunConfig, ds: SpatialDataset) -> np.ndarray:
    if cfg.targets == "missing":
        t = ds.missing_index()
    elif cfg.targets == "all":
        t = np.arange(ds.N)
    else:
        t = np.asarray(cfg.targets, dtype=np.int64)
        if t.size and t.max() >= ds.N:
            raise DataError(f"target row {t.max()} outside a dataset of {ds.N} rows")
    if t.size == 0:
        raise DataError("no prediction targets (the dataset has no missing rows; set 'targets')")
    return t


# -------------------------------------------------------------------- commands


def cmd_simulate(cfg: RunConfig, out: Path) -> None:
    ds, truth = synthesize(cfg.sim_config())
    write_csv(ds, out / "data.csv")
    write_truth(ds, truth, out)
    print(f"wrote {ds.N} rows to {out / 'data.csv'}: {int(truth.missing.sum())} missing, "
          f"{ds.N - int(truth.missing.sum())} observed; realized SNR {truth.snr:.4f}")


def cmd_fit(cfg: RunConfig, out: Path) -> None:
    ds, _ = _load_inputs(cfg)
    targets = _targets(cfg, ds)
    mcfg = cfg.model_config()
    chains = run_chains(mcfg, ds, targets, cfg.chains, workers=_workers())

    p = ds.p
    header = ["chain", "g"] + [f"beta_{j + 1}" for j in range(p)] + ["tau2", "sigma2", "sigma_beta2", "phi"]
    rows = []
    for c, ch in enumerate(chains):
        for g in range(ch.G):
            rows.append([c, g + 1] + [_f(v) for v in ch.beta[g]]
                        + [_f(ch.tau2[g]), _f(ch.sigma2[g]), _f(ch.sigma_beta2[g]), _f(ch.phi[g])])
    atomic_write_text(out / "chain.csv", _csv_text(header, rows))

    draws = np.concatenate([ch.predictions.draws for ch in chains])
    latent = np.mean([ch.predictions.latent_mean for ch in chains], axis=0)
    mean = draws.mean(axis=0)
    lo, hi = predictive_interval(draws, cfg.alpha)
    coords = ds.coords[targets]
    prow = [[int(t), _f(coords[i, 0]), _f(coords[i, 1]), _f(mean[i]), _f(latent[i]), _f(lo[i]), _f(hi[i])]
            for i, t in enumerate(targets)]
    atomic_write_text(out / "predictions.csv",
                      _csv_text(["row", "x", "y", "mean", "latent_mean", "lower", "upper"], prow))
    write_npz(out / "prediction_draws.npz", draws=draws, targets=targets, latent_mean=latent,
              target_kind=np.array(mcfg.prediction_target.value))
    _write_json(out / "timing.json", {
        "fit_seconds": [ch.fit_seconds for ch in chains],
        "predict_seconds": [ch.predict_seconds for ch in chains],
        "median_iteration_fit_seconds": [float(np.median(ch.iteration_fit_seconds)) for ch in chains],
        "n": mcfg.n, "G": mcfg.G, "K": mcfg.K, "burn_in": mcfg.burn_in, "targets": int(targets.size),
    })
    print(f"fit {len(chains)} chain(s), n={mcfg.n}, G={mcfg.G}: "
          f"fit {sum(ch.fit_seconds for ch in chains):.2f}s, "
          f"prediction {sum(ch.predict_seconds for ch in chains):.2f}s")


def _score_columns():
    return ["mae", "rmse", "crps", "interval_score", "coverage", "alpha", "n_eval"]


def cmd_sweep(cfg: RunConfig, out: Path) -> None:
    ds, truth = _load_inputs(cfg)
    if truth is None:
        raise ConfigError("sweep needs a truth record ('truth') to score against")
    targets = _targets(cfg, ds)
    designs = [DesignKind(d) for d in cfg.designs]

    def progress(pt):
        print(f"{pt.design} n={pt.n}: "
              f"rmse {pt.scores.rmse:.4f}, fit {pt.fit_seconds:.1f}s, predict {pt.predict_seconds:.1f}s")

    results, gaps = sweep(ds, targets, cfg.model_config(), cfg.n_list, designs,
                          y_heldout=truth["y_full"][targets], w_true=truth["w"][targets],
                          alpha=cfg.alpha, progress=progress)
    rows = []
    for d, pts in results.items():
        for i, pt in enumerate(pts):
            gap = _f(gaps[d][i]) if i < len(gaps[d]) else ""
            s = pt.scores
            rows.append([d.value, pt.n] + [_f(getattr(s, c)) for c in _score_columns()[:6]]
                        + [s.n_eval, _f(pt.fit_seconds), _f(pt.predict_seconds), gap])
    atomic_write_text(out / "sweep.csv", _csv_text(
        ["design", "n"] + _score_columns() + ["fit_seconds", "predict_seconds", "gap_to_next"], rows))

    def series(fn):
        return {d.value: ([p.n for p in pts], [fn(p) for p in pts]) for d, pts in results.items()}

    plots.line_plot(out / "rmse_vs_n.svg", series(lambda p: p.scores.rmse), "n", "RMSE")
    plots.line_plot(out / "time_vs_n.svg",
                    {**{f"{k} fit": v for k, v in series(lambda p: p.fit_seconds).items()},
                     **{f"{k} prediction": v for k, v in series(lambda p: p.predict_seconds).items()}},
                    "n", "seconds")
    plots.line_plot(out / "gap_vs_n.svg",
                    {d.value: ([p.n for p in pts[:-1]], gaps[d]) for d, pts in results.items() if len(pts) > 1},
                    "n", "squared gap to next n")
    for d, pts in results.items():
        plots.scatter_vs_truth(out / f"scatter_{d.value}_n{pts[-1].n}.svg", truth["w"][targets],
                               pts[-1].latent_mean, f"{d.value}, n={pts[-1].n}")


def _property_designs(cfg: RunConfig, n: int):
    N = cfg.population
    yield "srs", DesignSpec.srs(N, n)
    sizes = cfg.strata_sizes or (N // 2, N - N // 2)
    if sum(sizes) != N:
        raise ConfigError(f"strata_sizes sum to {sum(sizes)}, population is {N}")
    labels = np.repeat(np.arange(len(sizes)), sizes)
    yield "stratified", DesignSpec.stratified(labels, equal_allocation(labels, n))


def cmd_properties(cfg: RunConfig, out: Path) -> None:
    N = cfg.population
    rng = np.random.default_rng(cfg.seed)
    locs = rng.random((N, 2))
    p = len(cfg.theta_beta)
    X = np.column_stack([np.ones(N)] + [rng.random(N) for _ in range(p - 1)])
    theta = Theta(np.array(cfg.theta_beta), cfg.theta_tau2, cfg.theta_sigma2, 1.0, cfg.theta_phi)
    true_model = TrueModelSpec.exponential(cfg.true_mean, cfg.true_sill, cfg.true_nugget, cfg.true_phi)
    lags = np.linspace(0.0, cfg.lag_max, cfg.lag_points)
    if N <= 50:
        n_values = list(range(N + 1))
    else:
        n_values = sorted({0, N, *[n for n in cfg.n_list if n <= N]})

    mrows, crows, prows, vrows = [], [], [], []
    curves = {}
    # the CSVs hold every n; figures show at most seven curves per case
    plotted = set(n_values) if len(n_values) <= 7 else {
        n_values[i] for i in np.linspace(0, len(n_values) - 1, 7).round().astype(int)}
    for n in n_values:
        for name, spec in _property_designs(cfg, n):
            mom = design_data_moments(theta, true_model, X, locs, spec, cfg.covariogram)
            for i in range(N):
                mrows.append([name, n, i, _f(mom.mean[i]), _f(mom.variance[i])])
                for j in range(i + 1, N):
                    crows.append([name, n, i, j, _f(mom.cov[i, j])])
            pairs = [None] if spec.kind is DesignKind.SRS else [
                (r, t) for a, r in enumerate(spec.strata) for t in spec.strata[a:]]
            for pair in pairs:
                prof = sill_nugget_range(spec, theta, true_model, cfg.covariogram, cfg.drop_fraction,
                                         strata=pair)
                case = prof.case if pair is None else f"{prof.case} {pair[0]}-{pair[1]}"
                prows.append([name, case, n, _f(prof.sill), _f(prof.nugget), _f(prof.effective_range)])
                v = variogram(spec, theta, true_model, lags, cfg.covariogram, strata=pair)
                vrows.extend([name, case, n, _f(d), _f(val)] for d, val in zip(lags, v))
                if n in plotted and (pair is None or pair[0] == pair[1] == spec.strata[0]
                                     or (pair[0] != pair[1] and pair == pairs[1])):
                    curves[f"{name} {case} n={n}"] = (lags, v)
    atomic_write_text(out / "moments.csv", _csv_text(["design", "n", "i", "mean", "variance"], mrows))
    atomic_write_text(out / "covariance.csv", _csv_text(["design", "n", "i", "j", "cov"], crows))
    atomic_write_text(out / "profiles.csv",
                      _csv_text(["design", "case", "n", "sill", "nugget", "effective_range"], prows))
    atomic_write_text(out / "variogram.csv", _csv_text(["design", "case", "n", "lag", "variogram"], vrows))
    srs_curves = {k: v for k, v in curves.items() if k.startswith("srs")}
    plots.line_plot(out / "variogram.svg", srs_curves, "lag", "2 gamma(d)", "SRS variograms", marker=None)
    plots.line_plot(out / "variogram_stratified.svg",
                    {k: v for k, v in curves.items() if not k.startswith("srs")}, "lag", "2 gamma(d)",
                    "stratified variograms", marker=None)
    print(f"wrote properties for n in {n_values} (population {N})")


def cmd_diagnose(cfg: RunConfig, out: Path) -> None:
    ds, _ = _load_inputs(cfg)
    runs = k_diagnostic(ds, cfg.model_config(), cfg.k_list, cfg.replicates,
                        reference_k=min(cfg.k_list))
    rows = []
    for r, krows, dens, _ in runs:
        for row in krows:
            rows.append([r, row.parameter, row.K, _f(row.ks), _f(row.critical), _f(row.ess_ref),
                         _f(row.ess_other), int(row.below)])
        if r == 0:
            plots.density_grid(out / "densities.svg", dens)
    atomic_write_text(out / "ks.csv", _csv_text(
        ["replicate", "parameter", "K", "ks", "critical_1pct", "ess_reference", "ess_other", "below"], rows))
    print(f"K diagnostic: {sum(r[-1] for r in rows)} of {len(rows)} comparisons below the 1% critical value")


def cmd_evaluate(cfg: RunConfig, out: Path) -> None:
    if not cfg.fit_dir:
        raise ConfigError("evaluate needs 'fit_dir' pointing at a fit output directory")
    if not cfg.truth:
        raise ConfigError("evaluate needs a 'truth' CSV")
    try:
        with np.load(Path(cfg.fit_dir) / "prediction_draws.npz") as z:
            draws, targets, latent = z["draws"], z["targets"], z["latent_mean"]
            kind = PredictionTarget(str(z["target_kind"]))
    except OSError as exc:
        raise DataError(f"cannot read fit outputs: {exc}") from None
    truth = read_truth(cfg.truth)
    w = truth["w"][targets]
    interval_truth = truth["y_full"][targets] if kind is PredictionTarget.OBSERVED else w
    rep = score_report(draws, interval_truth, point=latent, alpha=cfg.alpha, point_truth=w)
    atomic_write_text(out / "scores.csv", _csv_text(_score_columns(),
                                                    [[_f(getattr(rep, c)) for c in _score_columns()[:6]]
                                                     + [rep.n_eval]]))
    print(" ".join(f"{k}={v:.6g}" for k, v in rep.as_dict().items()))


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "properties": cmd_properties,
    "diagnose": cmd_diagnose,
    "evaluate": cmd_evaluate,
}


def _int_list(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdsm", description="Spatial data subset model toolkit")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    ap.add_argument("--seed", type=int, help="master seed (overrides seed)")
    ap.add_argument("--chains", type=int, help="independent chains for fit")
    ap.add_argument("--n-list", type=_int_list, help="subsample sizes for sweep, e.g. 20,40,60")
    ap.add_argument("--k-list", type=_int_list, help="inner scan counts for diagnose, e.g. 1,5")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        cfg = load_config(args.config)
        over = {}
        if args.out:
            over["out_dir"] = args.out
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            over["seed"] = args.seed
        if args.chains is not None:
            if args.chains < 1:
                raise ConfigError("--chains must be at least 1")
            over["chains"] = args.chains
        if args.n_list:
            over["n_list"] = args.n_list
        if args.k_list:
            over["k_list"] = args.k_list
        cfg = replace(cfg, **over)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except (ConfigError, InvalidParameter, InvalidAllocation, BlockOutOfBounds, UnsupportedKernel,
            NonStationaryTrueModel) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionMismatch, TooFewSamples, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
