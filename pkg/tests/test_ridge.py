from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import beta_closed_form, random_orthogonal, ridge_normal_equations
from scts.ridge import (BetaSchedule, beta_t, elliptical_potential_bound, elliptical_potential_sum,
                        fit_ridge, ridge_tau_batch)


def random_problem(seed, t=25, r=3):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((t, r))
    a = rng.integers(0, 2, t)
    y = 0.7 * a + Z @ rng.standard_normal(r) + rng.standard_normal(t)
    return y, a, Z


def test_empty_data_is_the_prior():
    fit = fit_ridge(np.zeros(0), np.zeros(0), np.zeros((0, 3)), rho=2.0)
    assert fit.tau_hat == 0.0
    assert np.array_equal(fit.lambda_hat, np.zeros(3))
    np.testing.assert_array_equal(fit.omega, 2.0 * np.eye(4))
    assert fit.sigma_hat == pytest.approx(1 / math.sqrt(2.0))


@pytest.mark.parametrize("rho", [0.1, 1.0, 3.0])
@pytest.mark.parametrize("t", [1, 2, 10, 137])
def test_failure_instance_closed_form(rho, t):
    fit = fit_ridge(np.ones(t), np.ones(t), np.ones((t, 1)), rho)
    assert fit.tau_hat == pytest.approx(t / (rho + 2 * t), abs=1e-12)
    assert fit.lambda_hat[0] == pytest.approx(t / (rho + 2 * t), abs=1e-12)


@given(seed=st.integers(0, 100_000), rho=st.floats(0.01, 10.0))
def test_matches_normal_equation_oracle(seed, rho):
    y, a, Z = random_problem(seed)
    fit = fit_ridge(y, a, Z, rho)
    theta, inv = ridge_normal_equations(y, a, Z, rho)
    np.testing.assert_allclose(fit.theta_hat, theta, atol=1e-9)
    assert fit.sigma_hat == pytest.approx(math.sqrt(inv[0, 0]), abs=1e-9)
    assert np.linalg.eigvalsh(fit.omega).min() >= rho - 1e-8
    assert fit.sigma_hat <= 1 / math.sqrt(rho) + 1e-12


@given(seed=st.integers(0, 100_000))
def test_rotation_invariance(seed):
    y, a, Z = random_problem(seed, r=4)
    Phi = random_orthogonal(4, np.random.default_rng(seed + 1))
    f0 = fit_ridge(y, a, Z)
    f1 = fit_ridge(y, a, Z @ Phi)
    assert abs(f1.tau_hat - f0.tau_hat) <= 1e-9
    assert abs(f1.sigma_hat - f0.sigma_hat) <= 1e-9
    np.testing.assert_allclose(f1.lambda_hat, Phi.T @ f0.lambda_hat, atol=1e-9)


def test_shrinkage_in_rho():
    y, a, Z = random_problem(3)
    norms = [np.linalg.norm(fit_ridge(y, a, Z, rho).theta_hat) for rho in np.logspace(-3, 3, 25)]
    assert all(b <= a_ + 1e-12 for a_, b in zip(norms, norms[1:]))


def test_sigma_hat_shrinks_as_treated_epochs_accumulate():
    # appending epochs only adds PSD terms to Omega, so (Omega^-1)_11 cannot grow
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((60, 3))
    a = np.concatenate([np.zeros(20), np.ones(40)])
    y = rng.standard_normal(60)
    sig = [fit_ridge(y[:t], a[:t], Z[:t]).sigma_hat for t in range(20, 61)]
    assert all(b <= a_ + 1e-12 for a_, b in zip(sig, sig[1:]))
    assert sig[-1] < sig[0]


def test_frozen_context_rank_one_updates_match_refit():
    y, a, Z = random_problem(11, t=30)
    omega = np.eye(4)
    b = np.zeros(4)
    for s in range(30):
        x = np.concatenate([[a[s]], Z[s]])
        omega += np.outer(x, x)
        b += y[s] * x
        fit = fit_ridge(y[: s + 1], a[: s + 1], Z[: s + 1])
        np.testing.assert_allclose(fit.omega, omega, atol=1e-10)
        np.testing.assert_allclose(fit.theta_hat, np.linalg.solve(omega, b), atol=1e-10)


def test_batch_matches_individual_fits():
    rng = np.random.default_rng(5)
    Z = rng.standard_normal((20, 3))
    A = rng.integers(0, 2, (20, 6)).astype(float)
    Y = rng.standard_normal((20, 6))
    tau, sig = ridge_tau_batch(Z, A, Y, 1.5)
    for j in range(6):
        f = fit_ridge(Y[:, j], A[:, j], Z, 1.5)
        assert tau[j] == pytest.approx(f.tau_hat, abs=1e-10)
        assert sig[j] == pytest.approx(f.sigma_hat, abs=1e-10)


def test_input_validation():
    with pytest.raises(ValueError):
        fit_ridge(np.zeros(3), np.zeros(3), np.zeros((3, 1)), rho=0.0)
    with pytest.raises(ValueError):
        fit_ridge(np.zeros(3), np.zeros(2), np.zeros((3, 1)))


# --- beta schedule ---------------------------------------------------------

def test_beta_degenerate_is_zero():
    s = BetaSchedule(sigma=0.0, B=1.0, r=2, n=10, T=10, lambda_norm_plus_tau=0.0)
    assert all(beta_t(s, t) == 0.0 for t in (1, 2, 50))


def test_beta_hand_evaluation():
    # sigma=1, r=1, B=1, n=T (alpha = 20), |lambda*|+|tau*| = 2, t = 100
    s = BetaSchedule(sigma=1.0, B=1.0, r=1, n=50, T=50, lambda_norm_plus_tau=2.0)
    assert s.recovery_radius == pytest.approx(20.0)
    assert beta_t(s, 100) == pytest.approx(56.02984903882901, rel=1e-12)
    assert beta_t(s, 100) == pytest.approx(beta_closed_form(1, 1, 1, 50, 50, 2.0, 100), rel=1e-12)


@given(sigma=st.floats(0.1, 3), B=st.floats(0.1, 10), r=st.integers(1, 20), n=st.integers(1, 500),
       T=st.integers(1, 500), lt=st.floats(0, 10), t=st.integers(1, 10_000), c=st.floats(0.01, 2))
def test_beta_matches_closed_form(sigma, B, r, n, T, lt, t, c):
    s = BetaSchedule(sigma, B, r, n, T, lt, scale=c)
    assert beta_t(s, t) == pytest.approx(beta_closed_form(sigma, B, r, n, T, lt, t, c), rel=1e-10)
    assert beta_t(s, t) == pytest.approx(c * beta_t(BetaSchedule(sigma, B, r, n, T, lt), t), rel=1e-12)


def test_beta_first_epoch_uses_log_two_floor():
    s = BetaSchedule(1.0, 1.0, 2, 10, 10, 1.0)
    assert beta_t(s, 1) == pytest.approx(beta_closed_form(1, 1, 2, 10, 10, 1.0, 1), rel=1e-12)
    assert beta_t(s, 1) > 2 * 1.0 * math.sqrt(2 * 3 * math.log(3 + 22))   # strictly above the log t = 0 value
    with pytest.raises(ValueError):
        beta_t(s, 0)


def test_beta_monotone_and_shape():
    s = BetaSchedule(1.0, 3.0, 5, 200, 400, 4.0)
    ts = np.arange(2, 10_001)
    b = np.array([beta_t(s, int(t)) for t in ts])
    assert np.all(np.diff(b) >= 0)
    sel = ts >= 10
    ratio = b[sel] / np.sqrt(5 * np.log(5 * ts[sel]))
    assert ratio.min() > 0 and ratio.max() / ratio.min() < 3.0


def test_beta_mode_labels():
    assert BetaSchedule(1, 1, 1, 1, 1, 1).mode == "theoretical"
    assert BetaSchedule(1, 1, 1, 1, 1, 1, scale=0.1).mode == "scaled(0.1)"
    with pytest.raises(ValueError):
        BetaSchedule(1, 1, 1, 1, 1, 1, scale=0.0)


# --- elliptical potential --------------------------------------------------

def test_elliptical_bound_values():
    assert elliptical_potential_bound(1.0, 1.0, 2, 0) == 0.0
    v = elliptical_potential_bound(1.0, 1.0, 2, 100)
    assert v == pytest.approx(28.04220259795698, rel=1e-12)
    assert v == pytest.approx(28.03, abs=0.02)
    assert v != pytest.approx(math.sqrt(200 * math.log10(51)), rel=0.1)   # natural log


@given(seed=st.integers(0, 10_000), T0=st.integers(0, 20), T=st.integers(1, 60))
def test_elliptical_sum_below_bound(seed, T0, T):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((T0 + T, 3))
    a = np.concatenate([np.zeros(T0), rng.integers(0, 2, T)])
    total, B = elliptical_potential_sum(a, Z, 1.0, T0)
    assert total <= elliptical_potential_bound(max(B, 1.0), 1.0, 4, T) + 1e-9
