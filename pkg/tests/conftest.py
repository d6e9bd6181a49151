import numpy as np
import pytest

from sdsm.dataset import SpatialDataset


def random_spd(rng, n, ridge=0.5):
    a = rng.standard_normal((n, n))
    return a @ a.T + ridge * np.eye(n)


def mc_se(draws, axis=0):
    draws = np.asarray(draws, dtype=float)
    return draws.std(axis=axis, ddof=1) / np.sqrt(draws.shape[axis])


class CountingDataset:
    """Wraps a dataset, exposing only what the sampler may use and logging response reads."""

    def __init__(self, ds: SpatialDataset):
        self._ds = ds
        self.takes = []
        self.observed_calls = 0

    @property
    def N(self):
        return self._ds.N

    @property
    def p(self):
        return self._ds.p

    @property
    def strata(self):
        return self._ds.strata

    def observed_index(self):
        self.observed_calls += 1
        return self._ds.observed_index()

    def missing_index(self):
        return self._ds.missing_index()

    def take(self, idx):
        idx = np.asarray(idx)
        self.takes.append(idx.copy())
        return self._ds.take(idx)

    def locate(self, idx):
        return self._ds.locate(idx)


def tiny_dataset(seed=0, N=25, p=2, beta=(2.0, 3.0), phi=3.0, sigma2=1.0, tau2=0.25, missing=0,
                 strata=None):
    """Exact Gaussian draw from the parametric model on random unit-square locations."""
    rng = np.random.default_rng(seed)
    coords = rng.random((N, 2))
    X = rng.random((N, p))
    d = np.linalg.norm(coords[:, None] - coords[None], axis=-1)
    nu = np.linalg.cholesky(sigma2 * np.exp(-phi * d) + 1e-12 * np.eye(N)) @ rng.standard_normal(N)
    y = X @ np.asarray(beta[:p]) + nu + np.sqrt(tau2) * rng.standard_normal(N)
    if missing:
        y[rng.choice(N, missing, replace=False)] = np.nan
    return SpatialDataset(coords, y, X, strata), nu


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------- acceptance report

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    prev = _criteria.get(number, (title, True, 0.0))
    ok = prev[1] and not rep.failed
    if rep.when == "call" or rep.failed:
        _criteria[number] = (title, ok, prev[2] + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok, secs = _criteria[number]
        terminalreporter.write_line(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({secs:.1f} s)")
