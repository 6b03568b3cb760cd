from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from supsplitlog.errors import ConfigurationError, UsageError
from supsplitlog.logistic import (
    FitOptions,
    Sample,
    dmu,
    fit_pilot,
    level_gradient,
    level_hessian,
    mu,
    one_step_correct,
    project_ball,
    regularized_loss,
    samples_to_arrays,
)


def bisect_1d(f, lo, hi, tol=1e-14):
    """Oracle root finder for a monotone scalar function with a sign change."""
    flo = f(lo)
    assert flo * f(hi) < 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) < 0) == (flo < 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def central_diff(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out.append((f(x + e) - f(x - e)) / (2 * h))
    return np.array(out)


def test_mu_closed_forms():
    assert mu(0.0) == 0.5
    assert mu(math.log(3)) == pytest.approx(0.75, abs=1e-15)
    assert mu(-math.log(3)) == pytest.approx(0.25, abs=1e-15)


def test_dmu_closed_forms():
    assert dmu(0.0) == 0.25
    assert dmu(1.7) == pytest.approx(dmu(-1.7), abs=1e-16)
    assert dmu(math.log(3)) == pytest.approx(0.1875, abs=1e-15)


def test_mu_array_and_extremes():
    z = np.array([-800.0, 0.0, 800.0])
    np.testing.assert_array_equal(mu(z), [0.0, 0.5, 1.0])
    assert np.all(np.isfinite(dmu(z)))


def test_sample_validation():
    with pytest.raises(UsageError):
        Sample(np.array([1.0]), 2)
    with pytest.raises(UsageError):
        Sample(np.array([1.0, 1.0]), 1)
    X, r = samples_to_arrays([Sample(np.array([0.6, 0.0]), 1), Sample(np.array([0.0, 0.6]), 0)], 2)
    assert X.shape == (2, 2)
    np.testing.assert_array_equal(r, [1.0, 0.0])
    X, r = samples_to_arrays([], 3)
    assert X.shape == (0, 3) and r.shape == (0,)


def test_fit_options_validation():
    with pytest.raises(ConfigurationError):
        FitOptions(radius=1, steps=0)
    with pytest.raises(ConfigurationError):
        FitOptions(radius=1, learning_rate=0)
    with pytest.raises(ConfigurationError):
        FitOptions(radius=0)


def test_fit_pilot_empty_is_origin():
    np.testing.assert_array_equal(fit_pilot(np.zeros((0, 3)), np.zeros(0), FitOptions(radius=1)), np.zeros(3))


def test_fit_pilot_symmetric_labels_stay_at_origin():
    x = np.array([0.3, -0.4])
    theta = fit_pilot(np.stack([x, x]), np.array([1.0, 0.0]), FitOptions(radius=1, steps=50))
    np.testing.assert_allclose(theta, 0.0, atol=1e-15)


def test_fit_pilot_matches_bisection_oracle_1d():
    # stationarity: mu(theta) - 1 + theta = 0
    root = bisect_1d(lambda th: mu(th) - 1 + th, 0.0, 1.0)
    assert root == pytest.approx(0.401, abs=1e-3)
    theta = fit_pilot(np.array([[1.0]]), np.array([1.0]), FitOptions(radius=1, reg=1.0, steps=500))
    assert theta[0] == pytest.approx(root, abs=1e-3)


def test_fit_pilot_decreases_loss_and_respects_radius():
    rng = np.random.default_rng(0)
    X = rng.uniform(-0.5, 0.5, size=(200, 4))
    r = (rng.random(200) < 0.8).astype(float)
    opts = FitOptions(radius=0.3, steps=200)
    theta = fit_pilot(X, r, opts)
    assert np.linalg.norm(theta) <= 0.3
    assert regularized_loss(theta, X, r, 1.0) < regularized_loss(np.zeros(4), X, r, 1.0)


@settings(max_examples=50, deadline=None)
@given(v=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=6), radius=st.floats(1e-3, 10))
def test_property_projection_inside_ball(v, radius):
    p = project_ball(np.array(v), radius)
    assert np.linalg.norm(p) <= radius
    if np.linalg.norm(v) <= radius:
        np.testing.assert_array_equal(p, v)


def test_gradient_small_cases():
    np.testing.assert_array_equal(level_gradient(np.zeros(2), np.zeros((0, 2)), [], 1.0), np.zeros(2))
    g = level_gradient(np.zeros(2), np.array([[1.0, 0.0]]), [1.0], 1.0)
    np.testing.assert_allclose(g, [0.5, 0.0], atol=1e-15)


def test_hessian_small_cases():
    np.testing.assert_array_equal(level_hessian(np.zeros(3), np.zeros((0, 3)), [], 2.0), 2 * np.eye(3))
    H = level_hessian(np.zeros(3), np.array([[1.0, 0.0, 0.0]]), [0.0], 1.0)
    np.testing.assert_allclose(H, np.diag([1.25, 1.0, 1.0]), atol=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_and_hessian_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    n = int(rng.integers(1, 30))
    X = rng.uniform(-1, 1, size=(n, d)) / math.sqrt(d)
    r = (rng.random(n) < 0.5).astype(float)
    theta = rng.uniform(-1, 1, size=d)
    reg = float(rng.uniform(0.1, 3))
    # the gradient is the negative loss gradient
    fd_grad = -central_diff(lambda th: regularized_loss(th, X, r, reg), theta)
    g = level_gradient(theta, X, r, reg)
    np.testing.assert_allclose(g, fd_grad, rtol=1e-5, atol=1e-7)
    fd_hess = -np.stack([central_diff(lambda th: level_gradient(th, X, r, reg)[i], theta) for i in range(d)])
    np.testing.assert_allclose(level_hessian(theta, X, r, reg), fd_hess, rtol=1e-5, atol=1e-7)


def test_one_step_empty_set_returns_zero():
    theta_bar = np.array([0.3, -0.2])
    np.testing.assert_allclose(one_step_correct(theta_bar, np.zeros((0, 2)), [], 1.0), 0.0, atol=1e-16)


def test_one_step_hand_computed_case():
    out = one_step_correct(np.zeros(3), np.array([[1.0, 0.0, 0.0]]), [1.0], 1.0)
    np.testing.assert_allclose(out, [0.4, 0.0, 0.0], rtol=0, atol=1e-12)


def _contraction_case(seed: int, n: int):
    rng = np.random.default_rng(seed)
    theta_star = rng.standard_normal(2)
    theta_star *= 0.8 / np.linalg.norm(theta_star)
    X = rng.standard_normal((n, 2))
    X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1.0)
    r = (rng.random(n) < mu(X @ theta_star)).astype(float)
    direction = rng.standard_normal(2)
    theta_bar = theta_star + 0.2 * direction / np.linalg.norm(direction)
    return theta_star, X, r, theta_bar


def test_one_step_contracts_toward_empirical_optimum():
    wins = 0
    for seed in range(10):
        theta_star, X, r, theta_bar = _contraction_case(seed, 500)
        # oracle: the regularized MLE by a general-purpose optimizer
        opt = minimize(regularized_loss, theta_star, args=(X, r, 1.0), method="BFGS", options={"gtol": 1e-10}).x
        theta_hat = one_step_correct(theta_bar, X, r, 1.0)
        wins += np.linalg.norm(theta_hat - opt) < np.linalg.norm(theta_bar - opt)
    assert wins >= 9


def test_one_step_contracts_toward_truth_with_ample_data():
    # at |E| = 500 the MLE itself is ~0.2 from theta*, so compare at a size where it is not
    wins = 0
    for seed in range(10):
        theta_star, X, r, theta_bar = _contraction_case(seed, 5000)
        theta_hat = one_step_correct(theta_bar, X, r, 1.0)
        wins += np.linalg.norm(theta_hat - theta_star) < np.linalg.norm(theta_bar - theta_star)
    assert wins >= 9


def test_shape_errors():
    with pytest.raises(UsageError):
        level_gradient(np.zeros(2), np.zeros((3, 3)), np.zeros(3), 1.0)
    with pytest.raises(UsageError):
        level_hessian(np.zeros(2), np.zeros((3, 2)), np.zeros(2), 1.0)
