import numpy as np
import pytest
from scipy import stats

from sdsm import linalg
from sdsm.covariogram import EXPONENTIAL, build_corr_matrix, build_cross_matrix
from sdsm.errors import ConfigError, DataError, InsufficientData, NotPositiveDefinite, SamplerFailure
from sdsm import sampler
from sdsm.sampler import (
    FactorCache,
    ModelConfig,
    PosteriorState,
    PredictionTarget,
    fc_beta,
    fc_nu_delta,
    fc_phi,
    fc_sigma2,
    fc_sigma_beta2,
    fc_tau2,
    phi_probabilities,
    predict_at,
    predictive_moments,
    run_chains,
    run_composite,
)

from conftest import CountingDataset, mc_se, tiny_dataset


def state(n, p=1, beta=None, tau2=1.0, sigma2=1.0, sb2=1.0, phi=3.0):
    beta = np.zeros(p) if beta is None else np.asarray(beta, dtype=float)
    return PosteriorState(np.zeros(n), beta, tau2, sigma2, sb2, phi)


# ------------------------------------------------------------ full conditionals


def test_nu_scalar_conjugate_case():
    rng = np.random.default_rng(1)
    f = linalg.cholesky([[1.0]])
    s = state(1, beta=[0.5])
    y, X = np.array([2.0]), np.array([[2.0]])
    draws = np.array([fc_nu_delta(s, y, X, f, rng)[0] for _ in range(40_000)])
    assert abs(draws.mean() - 0.5) < 4 * mc_se(draws)
    assert draws.var() == pytest.approx(0.5, rel=0.03)


def test_nu_prior_washout():
    rng = np.random.default_rng(2)
    f = linalg.cholesky(np.eye(3))
    s = state(3, sigma2=1e9)
    y = np.array([1.0, -2.0, 0.5])
    draws = np.stack([fc_nu_delta(s, y, np.zeros((3, 1)), f, rng) for _ in range(20_000)])
    assert np.all(np.abs(draws.mean(axis=0) - y) < 4 * mc_se(draws))
    np.testing.assert_allclose(np.cov(draws.T), np.eye(3), atol=0.05)


def test_beta_prior_only_and_scalar_ridge():
    rng = np.random.default_rng(3)
    s = state(4, p=2, sb2=2.0)
    draws = np.stack([fc_beta(s, np.ones(4), np.zeros((4, 2)), rng) for _ in range(40_000)])
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * mc_se(draws))
    np.testing.assert_allclose(np.cov(draws.T), 2.0 * np.eye(2), atol=0.08)

    y = np.array([1.0, 2.0, 0.0, 3.0])
    s = PosteriorState(np.array([0.5, 0.0, -0.5, 1.0]), np.zeros(1), 1.0, 1.0, 1.0, 3.0)
    draws = np.array([fc_beta(s, y, np.ones((4, 1)), rng)[0] for _ in range(40_000)])
    assert abs(draws.mean() - np.sum(y - s.nu_delta) / 5) < 4 * mc_se(draws)
    assert draws.var() == pytest.approx(0.2, rel=0.03)


def test_beta_with_no_covariates():
    assert fc_beta(state(3, p=0), np.ones(3), np.zeros((3, 0)), np.random.default_rng(0)).shape == (0,)


def test_tau2_inverse_gamma_mean():
    # IG(2, 2) has mean 2 and infinite variance, so the check runs on a frozen seed
    rng = np.random.default_rng(7)
    draws = np.array([fc_tau2([1.0, 1.0], 1.0, 1.0, rng) for _ in range(1_000_000)])
    assert np.all(draws > 0)
    assert draws.mean() == pytest.approx(2.0, rel=0.01)


def test_variance_conditionals_match_inverse_gamma_law():
    rng = np.random.default_rng(8)
    m = 50_000
    cases = {
        "tau2_zero_residual": (lambda: fc_tau2(np.zeros(4), 1.0, 1.0, rng), 3.0, 1.0),
        "sigma2_identity": (lambda: fc_sigma2([1.0, 1.0], linalg.cholesky(np.eye(2)), 1.0, 1.0, rng), 2.0, 2.0),
        "sigma2_zero": (lambda: fc_sigma2(np.zeros(3), linalg.cholesky(np.eye(3)), 1.0, 1.0, rng), 2.5, 1.0),
        "sigma_beta2": (lambda: fc_sigma_beta2([1.0, 1.0], 1.0, 1.0, rng), 2.0, 2.0),
        "sigma_beta2_zero": (lambda: fc_sigma_beta2([0.0, 0.0], 1.0, 1.0, rng), 2.0, 1.0),
    }
    for name, (fn, shape, scale) in cases.items():
        draws = np.array([fn() for _ in range(m)])
        ks = stats.kstest(draws, stats.invgamma(shape, scale=scale).cdf)
        assert ks.pvalue > 1e-3, name


def test_sigma2_quadratic_form_uses_correlation():
    h = build_corr_matrix(EXPONENTIAL, [[0.0, 0.0], [0.2, 0.0]], 3.0)
    nu = np.array([1.0, -1.0])
    rng = np.random.default_rng(4)
    draws = np.array([fc_sigma2(nu, linalg.cholesky(h), 3.0, 1.0, rng) for _ in range(100_000)])
    scale = 1.0 + nu @ np.linalg.solve(h, nu) / 2
    mean = scale / (3.0 + 1.0 - 1)
    assert abs(draws.mean() - mean) < 4 * mc_se(draws)


# -------------------------------------------------------------------- phi


def test_phi_singleton_and_single_location():
    rng = np.random.default_rng(0)
    assert fc_phi([0.3, 0.1], 1.0, [[0, 0], [1, 1]], [2.5], rng=rng) == 2.5
    support = (1.0, 2.0, 3.0)
    probs = phi_probabilities([0.7], 1.0, support, FactorCache([[0.5, 0.5]]))
    np.testing.assert_allclose(probs, 1 / 3, rtol=1e-14)


def test_phi_two_point_direct_density():
    locs = np.array([[0.0, 0.0], [0.3, 0.1]])
    nu, sigma2 = np.array([0.8, -0.2]), 0.7
    support = (1.0, 4.0)

    def density(phi, power=0.5):
        h = build_corr_matrix(EXPONENTIAL, locs, phi)
        return np.linalg.det(h) ** -power * np.exp(-nu @ np.linalg.inv(h) @ nu / (2 * sigma2))

    for power in (0.5, 1.0):
        dens = np.array([density(phi, power) for phi in support])
        got = phi_probabilities(nu, sigma2, support, FactorCache(locs), det_exponent=power)
        np.testing.assert_allclose(got, dens / dens.sum(), rtol=1e-12)
    dens = np.array([density(phi) for phi in support])
    expect = dens / dens.sum()
    rng = np.random.default_rng(11)
    m = 20_000
    factors = FactorCache(locs)
    hits = np.mean([fc_phi(nu, sigma2, locs, support, rng=rng, factors=factors) == 1.0 for _ in range(m)])
    p = expect[0]
    assert abs(hits - p) < 4 * np.sqrt(p * (1 - p) / m)


def test_factor_cache_matches_direct_construction(rng):
    locs = rng.random((30, 2))
    cache = FactorCache(locs)
    cache.prime(sampler.DEFAULT_PHI_SUPPORT)
    for phi in sampler.DEFAULT_PHI_SUPPORT:
        np.testing.assert_allclose(cache.corr(phi), build_corr_matrix(EXPONENTIAL, locs, phi), rtol=1e-12)


def test_factor_cache_names_offending_phi(monkeypatch):
    def boom(*args, **kwargs):
        raise NotPositiveDefinite("forced")

    monkeypatch.setattr(linalg, "cholesky", boom)
    with pytest.raises(NotPositiveDefinite) as err:
        FactorCache([[0.0, 0.0], [1.0, 0.0]])(2.5)
    assert err.value.phi == 2.5


# -------------------------------------------------------------- prediction


def test_predict_at_interpolates_and_reverts():
    rng = np.random.default_rng(0)
    locs = np.array([[0.1, 0.2], [0.6, 0.4], [0.3, 0.9]])
    nu = np.array([0.4, -1.1, 0.7])
    assert predict_at(locs[1], nu, 2.0, 3.0, locs, rng) == pytest.approx(-1.1, abs=1e-6)
    f = linalg.cholesky(build_corr_matrix(EXPONENTIAL, locs, 3.0))
    mean, var = predictive_moments(f, nu, build_cross_matrix(EXPONENTIAL, locs[1:2], locs, 3.0))
    assert mean[0] == pytest.approx(-1.1, abs=1e-12)
    assert 0.0 <= var[0] < 1e-12
    draws = np.array([predict_at([500.0, 500.0], nu, 2.0, 3.0, locs, rng) for _ in range(20_000)])
    assert abs(draws.mean()) < 4 * mc_se(draws)
    assert draws.var() == pytest.approx(2.0, rel=0.04)


def test_predictive_moments_two_point_hand_case():
    locs = np.array([[0.0, 0.0], [0.5, 0.0]])
    target = np.array([[0.2, 0.1]])
    phi, nu = 2.0, np.array([1.0, -0.5])
    r = np.exp(-phi * 0.5)
    h1 = np.exp(-phi * np.hypot(0.2, 0.1))
    h2 = np.exp(-phi * np.hypot(0.3, 0.1))
    det = 1 - r * r
    # inverse of [[1, r], [r, 1]] is [[1, -r], [-r, 1]] / det
    mean = (h1 * (nu[0] - r * nu[1]) + h2 * (nu[1] - r * nu[0])) / det
    var = 1 - (h1 * h1 - 2 * r * h1 * h2 + h2 * h2) / det
    f = linalg.cholesky(build_corr_matrix(EXPONENTIAL, locs, phi))
    got_mean, got_var = predictive_moments(f, nu, build_cross_matrix(EXPONENTIAL, target, locs, phi))
    assert got_mean[0] == pytest.approx(mean, abs=1e-10)
    assert got_var[0] == pytest.approx(var, abs=1e-10)


def test_batched_prediction_matches_joint_conditional(rng):
    locs, targets = rng.random((12, 2)), rng.random((7, 2))
    nu, phi = rng.standard_normal(12), 2.5
    H = build_corr_matrix(EXPONENTIAL, locs, phi)
    Hm = build_cross_matrix(EXPONENTIAL, targets, locs, phi)
    mean, var = predictive_moments(linalg.cholesky(H), nu, Hm)
    joint_cov = build_corr_matrix(EXPONENTIAL, targets, phi) - Hm @ np.linalg.inv(H) @ Hm.T
    np.testing.assert_allclose(mean, Hm @ np.linalg.solve(H, nu), atol=1e-10)
    np.testing.assert_allclose(var, np.diag(joint_cov), atol=1e-10)


# ----------------------------------------------------------------- config


def test_model_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(n=5, G=0)
    with pytest.raises(ConfigError):
        ModelConfig(n=5, G=10, burn_in=10)
    with pytest.raises(ConfigError):
        ModelConfig(n=5, G=10, phi_support=(2.0, 1.0))
    with pytest.raises(ConfigError):
        ModelConfig(n=5, G=10, prior_shape=0.0)
    cfg = ModelConfig(n=5, G=10)
    assert cfg.phi_support == (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
    assert cfg.K == 1 and cfg.prior_shape == cfg.prior_scale == 1.0
    assert cfg.initial_theta(2).phi == 3.0


# ---------------------------------------------------------------- composite


def test_single_iteration_boundary():
    ds, _ = tiny_dataset(missing=5)
    out = run_composite(ModelConfig(n=10, G=1), ds, ds.missing_index())
    assert out.G == 1
    assert out.predictions.draws.shape == (1, 5)
    assert out.delta.shape == (1, 10)


def test_same_seed_is_bit_identical():
    ds, _ = tiny_dataset(missing=5)
    cfg = ModelConfig(n=8, G=40, burn_in=10, seed=42, prediction_target=PredictionTarget.OBSERVED)
    a = run_composite(cfg, ds, ds.missing_index())
    b = run_composite(cfg, ds, ds.missing_index())
    for name in ("beta", "tau2", "sigma2", "sigma_beta2", "phi", "nu_delta", "delta"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    assert np.array_equal(a.predictions.draws, b.predictions.draws)


def test_prediction_targets_do_not_perturb_parameter_chain():
    ds, _ = tiny_dataset(missing=6)
    cfg = ModelConfig(n=8, G=30, seed=3)
    a = run_composite(cfg, ds, ds.missing_index()[:2])
    b = run_composite(cfg, ds, ds.missing_index())
    assert np.array_equal(a.tau2, b.tau2)
    assert np.array_equal(a.delta, b.delta)


def test_sampler_reads_only_subsampled_responses():
    ds, _ = tiny_dataset(N=40, missing=8)
    counted = CountingDataset(ds)
    cfg = ModelConfig(n=6, G=25, K=3, seed=1)
    out = run_composite(cfg, counted, ds.missing_index())
    assert counted.observed_calls == 1
    assert len(counted.takes) == cfg.G
    observed = set(ds.observed_index().tolist())
    for g, rows in enumerate(counted.takes):
        assert rows.size == cfg.n
        assert np.array_equal(rows, out.delta[g])
        assert set(rows.tolist()) <= observed
    assert not hasattr(counted, "values")


def test_stratified_subsample_respects_allocations():
    ds, _ = tiny_dataset(N=40)
    ds = ds.with_strata(np.repeat([0, 1, 2, 3], 10))
    cfg = ModelConfig(n=8, G=15, design="stratified", seed=2)
    out = run_composite(cfg, ds, [0, 1])
    for rows in out.delta:
        assert np.bincount(ds.strata[rows], minlength=4).tolist() == [2, 2, 2, 2]
    with pytest.raises(ConfigError):
        run_composite(ModelConfig(n=8, G=2, design="stratified", allocations={0: 1, 1: 1}), ds, [0])
    with pytest.raises(DataError):
        run_composite(ModelConfig(n=8, G=2, design="stratified"), ds.with_strata(None), [0])


def test_insufficient_data():
    ds, _ = tiny_dataset(N=10, missing=6)
    with pytest.raises(InsufficientData):
        run_composite(ModelConfig(n=5, G=2), ds, [0])


def test_numerical_failure_reports_iteration(monkeypatch):
    ds, _ = tiny_dataset(N=20)
    calls = {"n": 0}
    real = sampler.fc_phi

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 7:
            raise NotPositiveDefinite("forced", phi=4.5)
        return real(*args, **kwargs)

    monkeypatch.setattr(sampler, "fc_phi", flaky)
    with pytest.raises(SamplerFailure) as err:
        run_composite(ModelConfig(n=5, G=5, K=2), ds, [0])
    assert (err.value.g, err.value.k, err.value.phi) == (4, 1, 4.5)


def test_observed_target_adds_noise():
    ds, _ = tiny_dataset(missing=5)
    base = dict(n=20, G=400, burn_in=100, seed=5)
    lat = run_composite(ModelConfig(**base), ds, ds.missing_index())
    obs = run_composite(ModelConfig(**base, prediction_target="observed"), ds, ds.missing_index())
    np.testing.assert_allclose(obs.predictions.latent_mean, lat.predictions.latent_mean, rtol=1e-12)
    assert np.all(obs.predictions.draws.var(axis=0) > lat.predictions.draws.var(axis=0))


def test_chains_are_independent_of_worker_count():
    ds, _ = tiny_dataset(missing=5)
    cfg = ModelConfig(n=10, G=20, seed=9)
    serial = run_chains(cfg, ds, ds.missing_index(), chains=2, workers=1)
    parallel = run_chains(cfg, ds, ds.missing_index(), chains=2, workers=2)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.beta, b.beta)
        assert np.array_equal(a.predictions.draws, b.predictions.draws)
    assert not np.array_equal(serial[0].beta, serial[1].beta)


def test_kept_draws_stay_finite():
    ds, _ = tiny_dataset(N=60, missing=10, seed=4)
    out = run_composite(ModelConfig(n=30, G=10_000, burn_in=1000, seed=4), ds, ds.missing_index())
    for name in ("beta", "tau2", "sigma2", "sigma_beta2"):
        assert np.all(np.isfinite(out.kept(name)))
    assert np.all(out.tau2 > 0) and np.all(out.sigma2 > 0) and np.all(out.sigma_beta2 > 0)
    assert set(np.unique(out.phi)) <= set(sampler.DEFAULT_PHI_SUPPORT)
    assert np.all(np.isfinite(out.predictions.draws))


def test_full_data_intervals_cover_true_beta():
    covered = 0
    for rep in range(20):
        ds, _ = tiny_dataset(N=25, seed=100 + rep)
        out = run_composite(ModelConfig(n=25, G=1500, burn_in=300, seed=rep), ds, [0])
        lo, hi = np.quantile(out.kept("beta"), [0.025, 0.975], axis=0)
        covered += np.all((lo <= [2.0, 3.0]) & ([2.0, 3.0] <= hi))
    assert covered >= 16
