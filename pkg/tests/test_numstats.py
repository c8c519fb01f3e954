import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from powerbandit.numstats import (
    DomainError,
    RngStream,
    SingularMatrix,
    bernoulli,
    chi2_cdf,
    chi2_inv,
    noncentral_chi2_cdf,
    normal,
    solve_c_beta,
    sphere_point,
    sym_inverse,
    sym_solve,
    test_power,
)


@pytest.mark.parametrize("x,k", [(0.5, 1), (3.0, 2), (7.81, 3), (20.0, 5), (150.0, 120)])
def test_chi2_cdf_matches_scipy(x, k):
    assert chi2_cdf(x, k) == pytest.approx(stats.chi2.cdf(x, k), abs=1e-12)


def test_chi2_cdf_domain():
    assert chi2_cdf(0.0, 3) == 0.0
    with pytest.raises(DomainError):
        chi2_cdf(-1.0, 3)
    with pytest.raises(DomainError):
        chi2_cdf(1.0, 0)
    with pytest.raises(DomainError):
        chi2_cdf(1.0, 2.5)


def test_chi2_inv_critical_value_three_dof():
    assert chi2_inv(0.95, 3) == pytest.approx(7.8147, abs=1e-3)


@given(st.floats(1e-6, 1 - 1e-9), st.integers(1, 60))
@settings(max_examples=200, deadline=None)
def test_chi2_inv_round_trip(prob, k):
    x = chi2_inv(prob, k)
    assert chi2_cdf(x, k) == pytest.approx(prob, abs=1e-10)


def test_chi2_inv_domain():
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            chi2_inv(bad, 3)


@pytest.mark.parametrize("x,k,lam", [(7.8147, 3, 10.9), (1.0, 1, 0.5), (30.0, 4, 25.0), (200.0, 3, 180.0)])
def test_noncentral_cdf_matches_scipy(x, k, lam):
    assert noncentral_chi2_cdf(x, k, lam) == pytest.approx(stats.ncx2.cdf(x, k, lam), abs=1e-10)


def test_noncentral_reduces_to_central():
    assert noncentral_chi2_cdf(5.0, 3, 0.0) == chi2_cdf(5.0, 3)


def test_noncentral_domain():
    with pytest.raises(DomainError):
        noncentral_chi2_cdf(1.0, 3, -1.0)
    with pytest.raises(DomainError):
        noncentral_chi2_cdf(-1.0, 3, 1.0)


def test_noncentral_cdf_against_monte_carlo():
    g = np.random.default_rng(7)
    draws = g.noncentral_chisquare(3, 10.9, size=2_000_000)
    assert noncentral_chi2_cdf(7.8147, 3, 10.9) == pytest.approx(np.mean(draws <= 7.8147), abs=3e-3)


def test_power_increases_with_noncentrality():
    values = [test_power(c, 0.05, 3) for c in (0.0, 1.0, 5.0, 10.9, 20.0)]
    assert values[0] == pytest.approx(0.05, abs=1e-9)
    assert all(a < b for a, b in zip(values, values[1:]))


def test_c_beta_reference_value():
    c = solve_c_beta(0.05, 0.2, 3)
    assert c == pytest.approx(10.9026, abs=1e-3)
    assert test_power(c, 0.05, 3) == pytest.approx(0.8, abs=1e-7)


def test_c_beta_zero_when_target_met_at_null():
    assert solve_c_beta(0.5, 0.6, 2) == 0.0


def test_c_beta_domain():
    with pytest.raises(DomainError):
        solve_c_beta(0.0, 0.2, 3)
    with pytest.raises(DomainError):
        solve_c_beta(0.05, 1.0, 3)


def test_sym_solve_positive_definite(rng):
    A = rng.normal(size=(5, 5))
    M = A @ A.T + 5 * np.eye(5)
    v = rng.normal(size=5)
    assert np.allclose(M @ sym_solve(M, v), v, atol=1e-12)


def test_sym_solve_indefinite_uses_ldl():
    M = np.array([[1.0, 2.0], [2.0, 1.0]])
    v = np.array([1.0, -1.0])
    assert np.allclose(M @ sym_solve(M, v), v)


def test_sym_solve_rejects_singular_and_asymmetric():
    with pytest.raises(SingularMatrix):
        sym_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))
    with pytest.raises(ValueError):
        sym_solve(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))


def test_sym_inverse_exactly_symmetric(rng):
    A = rng.normal(size=(4, 4))
    M = A @ A.T + np.eye(4)
    inv = sym_inverse(M)
    assert np.array_equal(inv, inv.T)
    assert np.allclose(inv @ M, np.eye(4), atol=1e-10)


def test_rng_stream_keys_are_reproducible_and_distinct():
    a = RngStream(1, 2, 3).generator().random(5)
    b = RngStream(1, 2, 3).generator().random(5)
    c = RngStream(1, 2, 4).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sphere_point_norm():
    g = RngStream(0).generator()
    pts = sphere_point(g, 3, 0.4, size=1000)
    assert np.allclose(np.linalg.norm(pts, axis=1), 0.4, atol=1e-12)


def test_draw_helpers_domain():
    g = RngStream(0).generator()
    with pytest.raises(DomainError):
        normal(g, sigma=-1.0)
    with pytest.raises(DomainError):
        bernoulli(g, 1.5)
    with pytest.raises(DomainError):
        sphere_point(g, 3, 0.0)
    assert set(np.unique(bernoulli(g, 0.3, size=100))) <= {0, 1}
