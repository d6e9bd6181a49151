import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdsm import linalg
from sdsm.errors import DimensionMismatch, NotPositiveDefinite

from conftest import random_spd


def test_identity_factor_has_no_jitter():
    f = linalg.cholesky(np.eye(3))
    assert np.array_equal(f.lower, np.eye(3))
    assert f.jitter_applied == 0.0


def test_two_by_two_hand_factor():
    f = linalg.cholesky([[4.0, 2.0], [2.0, 3.0]])
    np.testing.assert_allclose(f.lower, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], rtol=1e-14)
    np.testing.assert_allclose(f.reconstruct(), [[4.0, 2.0], [2.0, 3.0]], rtol=1e-14)


def test_rank_one_matrix_needs_jitter():
    m = np.ones((2, 2))
    f = linalg.cholesky(m)
    assert f.jitter_applied > 0
    # eigen check: the smallest eigenvalue of the ridged matrix is the ridge itself
    ev = np.linalg.eigvalsh(m + f.jitter_applied * np.eye(2))
    assert ev.min() == pytest.approx(f.jitter_applied, rel=1e-6)
    rel = np.linalg.norm(f.reconstruct() - m) / np.linalg.norm(m)
    assert rel < 1e-8


def test_indefinite_matrix_fails_with_error():
    with pytest.raises(NotPositiveDefinite):
        linalg.cholesky([[1.0, 0.0], [0.0, -1.0]])


def test_rejects_asymmetric_and_nonsquare():
    with pytest.raises(DimensionMismatch):
        linalg.cholesky([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        linalg.cholesky(np.ones((2, 3)))
    with pytest.raises(NotPositiveDefinite):
        linalg.cholesky([[np.nan, 0.0], [0.0, 1.0]])


def test_solve_identity_and_hand_inverse():
    np.testing.assert_array_equal(linalg.solve(linalg.cholesky(np.eye(2)), [1.0, 2.0]), [1.0, 2.0])
    x = linalg.solve(linalg.cholesky([[4.0, 2.0], [2.0, 3.0]]), [1.0, 0.0])
    np.testing.assert_allclose(x, [0.375, -0.25], rtol=1e-13)


def test_solve_round_trip_and_shape_errors(rng):
    m = random_spd(rng, 5)
    x = rng.standard_normal(5)
    f = linalg.cholesky(m)
    np.testing.assert_allclose(linalg.solve(f, m @ x), x, rtol=1e-8)
    with pytest.raises(DimensionMismatch):
        linalg.solve(f, np.ones(4))


def test_log_det_closed_forms(rng):
    assert linalg.log_det(linalg.cholesky(np.eye(4))) == 0.0
    assert linalg.log_det(linalg.cholesky(np.diag([2.0, 8.0]))) == pytest.approx(np.log(16.0), rel=1e-14)
    m = random_spd(rng, 4)
    assert linalg.log_det(linalg.cholesky(m)) == pytest.approx(np.sum(np.log(np.linalg.eigvalsh(m))), rel=1e-8)


def test_quad_form_and_lower_inverse(rng):
    m = random_spd(rng, 6)
    x = rng.standard_normal(6)
    f = linalg.cholesky(m)
    assert linalg.quad_form(f, x) == pytest.approx(x @ np.linalg.solve(m, x), rel=1e-10)
    np.testing.assert_allclose(linalg.lower_inverse(f) @ f.lower, np.eye(6), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(order=st.integers(1, 512), seed=st.integers(0, 2**32 - 1))
def test_solve_round_trip_property(order, seed):
    rng = np.random.default_rng(seed)
    m = random_spd(rng, order, ridge=order * 0.05)
    x = rng.standard_normal(order)
    got = linalg.solve(linalg.cholesky(m), m @ x)
    assert np.linalg.norm(got - x) <= 1e-7 * max(1.0, np.linalg.norm(x))


@settings(max_examples=60, deadline=None)
@given(order=st.integers(1, 64), seed=st.integers(0, 2**32 - 1))
def test_log_det_matches_eigenvalues(order, seed):
    rng = np.random.default_rng(seed)
    m = random_spd(rng, order)
    expect = np.sum(np.log(np.linalg.eigvalsh(m)))
    assert linalg.log_det(linalg.cholesky(m)) == pytest.approx(expect, rel=1e-7, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(order=st.integers(1, 40), seed=st.integers(0, 2**32 - 1), dup=st.booleans())
def test_factor_reports_jitter_and_reconstructs(order, seed, dup):
    rng = np.random.default_rng(seed)
    pts = rng.random((order, 2))
    if dup and order > 1:
        pts[-1] = pts[0]
    m = np.exp(-3.0 * np.linalg.norm(pts[:, None] - pts[None], axis=-1))
    f = linalg.cholesky(m)
    assert f.jitter_applied >= 0
    assert np.all(np.diag(f.lower) > 0)
    target = m + f.jitter_applied * np.eye(order)
    assert np.linalg.norm(f.reconstruct() - target) <= 1e-8 * np.linalg.norm(target)
