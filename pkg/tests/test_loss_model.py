import numpy as np
import pytest

from core.exceptions import DimensionMismatchError, NumericInputError
from core.loss_model import (
    Observation,
    expected_gradient,
    expected_loss,
    hessian_weight,
    logistic_loss,
    loss_from_margin,
    loss_gradient,
    sandwich_from_margins,
    sandwich_terms,
    sigmoid,
)

STEP = 1e-6


def finite_difference(f, theta):
    grad = np.zeros_like(theta)
    for i in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[i] = STEP
        grad[i] = (f(theta + e) - f(theta - e)) / (2 * STEP)
    return grad


def test_loss_at_zero():
    obs = Observation(np.array([1.0, 2.0]), 1)
    assert logistic_loss(obs, np.zeros(2)) == pytest.approx(np.log(2.0))


def test_loss_is_stable_for_large_margins():
    assert loss_from_margin(1000.0) == pytest.approx(0.0, abs=1e-300)
    assert loss_from_margin(-1000.0) == pytest.approx(1000.0)
    assert np.isfinite(loss_from_margin(-1e6))


def test_gradient_matches_finite_differences(rng):
    for _ in range(50):
        x = rng.standard_normal(4)
        y = int(rng.choice([-1, 1]))
        theta = rng.standard_normal(4)
        obs = Observation(x, y)
        fd = finite_difference(lambda th: logistic_loss(obs, th), theta)
        assert np.allclose(loss_gradient(obs, theta), fd, atol=1e-6)


def test_expected_gradient_is_negated_expected_loss_gradient(rng):
    for _ in range(20):
        x = rng.standard_normal(3)
        theta = rng.standard_normal(3)
        theta_true = rng.standard_normal(3)
        fd = finite_difference(lambda th: expected_loss(x, th, theta_true), theta)
        assert np.allclose(expected_gradient(x, theta, theta_true), -fd, atol=1e-6)


def test_expected_gradient_vanishes_at_truth():
    x = np.array([0.3, -1.2])
    theta_true = np.array([1.0, 0.5])
    assert np.allclose(expected_gradient(x, theta_true, theta_true), 0.0)


def test_hessian_weight_range():
    assert hessian_weight(np.array([1.0]), np.array([0.0])) == pytest.approx(0.25)
    assert 0 < hessian_weight(np.array([1.0]), np.array([30.0])) < 1e-12


def test_sandwich_holds(rng):
    for _ in range(200):
        x = rng.standard_normal(3)
        theta = 2 * rng.standard_normal(3)
        theta_true = rng.standard_normal(3)
        terms = sandwich_terms(x, theta, theta_true)
        assert terms.lower <= terms.expected * (1 + 1e-12) + 1e-15
        assert terms.expected <= terms.upper * (1 + 1e-12) + 1e-15


def test_vectorized_sandwich_agrees(rng):
    x = rng.standard_normal((5, 2))
    theta = rng.standard_normal(2)
    theta_true = rng.standard_normal(2)
    expected, quadratic, _, _ = sandwich_from_margins(x @ theta, x @ theta_true)
    for i in range(5):
        terms = sandwich_terms(x[i], theta, theta_true)
        assert expected[i] == pytest.approx(terms.expected)
        assert quadratic[i] == pytest.approx(terms.quadratic)


def test_sigmoid_saturates():
    assert sigmoid(10.0) == pytest.approx(0.9999546, abs=1e-7)
    assert sigmoid(-800.0) == 0.0


def test_observation_validation():
    with pytest.raises(NumericInputError):
        Observation(np.array([1.0]), 0)
    with pytest.raises(NumericInputError):
        Observation(np.array([np.inf]), 1)
    with pytest.raises(DimensionMismatchError):
        logistic_loss(Observation(np.array([1.0, 2.0]), 1), np.zeros(3))


def test_sigmoid_is_symmetric():
    z = np.concatenate([np.linspace(-40.0, 40.0, 801), [-800.0, 800.0]])
    assert np.allclose(sigmoid(z) + sigmoid(-z), 1.0, rtol=0, atol=1e-15)


def test_scalar_oracles():
    assert hessian_weight(np.array([1.0]), np.array([2.0])) == pytest.approx(0.1049935854, abs=1e-10)
    assert logistic_loss(Observation(np.array([1.0]), -1), np.array([1.0])) == pytest.approx(1.3132616875, abs=1e-10)


def test_hessian_weight_matches_second_directional_difference(rng):
    h = 1e-4
    for _ in range(20):
        obs = Observation(rng.standard_normal(3), int(rng.choice([-1, 1])))
        theta = rng.standard_normal(3)
        u = rng.standard_normal(3)
        u /= np.linalg.norm(u)
        second = (logistic_loss(obs, theta + h * u) - 2 * logistic_loss(obs, theta)
                  + logistic_loss(obs, theta - h * u)) / h ** 2
        assert hessian_weight(obs.x, theta) * (obs.x @ u) ** 2 == pytest.approx(second, rel=1e-4, abs=1e-7)


def test_expected_gradient_against_sampled_labels(rng):
    x = np.array([0.8, -0.4])
    theta = np.array([0.3, 0.9])
    theta_true = np.array([1.0, 0.5])
    samples = 1_000_000
    labels = np.where(rng.random(samples) < sigmoid(theta_true @ x), 1.0, -1.0)
    terms = (labels * sigmoid(-labels * (theta @ x)))[:, None] * x
    mean = terms.mean(axis=0)
    stderr = terms.std(axis=0, ddof=1) / np.sqrt(samples)
    assert np.all(np.abs(expected_gradient(x, theta, theta_true) - mean) <= 3 * stderr)


def test_expected_loss_is_minimized_at_the_true_margin():
    x = np.array([0.6, 0.8])
    theta_true = np.array([1.5, -0.5])
    margins = np.linspace(-5.0, 5.0, 2001)
    values = [expected_loss(x, m * x / (x @ x), theta_true) for m in margins]
    resolution = margins[1] - margins[0]
    assert abs(margins[int(np.argmin(values))] - theta_true @ x) <= resolution
