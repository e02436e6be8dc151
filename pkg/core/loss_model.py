"""
Logistic Loss Model
Loss, derivatives and closed-form conditional expectations of the well-specified model
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from core.exceptions import DimensionMismatchError, NumericInputError
from core.linalg_core import Vector, as_vector


@dataclass(frozen=True)
class Observation:
    """One (X_t, y_t) pair"""
    x: Vector
    y: int

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64))
        if self.y not in (-1, 1):
            raise NumericInputError(f"label must be -1 or +1, got {self.y}")
        if not np.all(np.isfinite(self.x)):
            raise NumericInputError("feature vector contains non-finite entries")

    @property
    def dim(self) -> int:
        return int(self.x.shape[0])


class SandwichTerms(NamedTuple):
    """Expected linearized term and its exponential envelope around the local quadratic"""
    expected: float
    quadratic: float
    lower: float
    upper: float


def _margin(x: Vector, theta: Vector) -> float:
    if x.shape != theta.shape:
        raise DimensionMismatchError(f"feature length {x.shape[0]} != parameter length {theta.shape[0]}")
    return float(x @ theta)


def sigmoid(z):
    """1 / (1 + e^{-z}), saturating without overflow; accepts scalars or arrays"""
    return expit(z)


def loss_from_margin(signed_margin):
    """log(1 + e^{-m}) for m = y theta^T x, stable for both signs (log1p / logaddexp form)"""
    return np.logaddexp(0.0, -np.asarray(signed_margin, dtype=np.float64))


def weight_from_margin(margin):
    """sigma(m) (1 - sigma(m)) = 1 / ((1 + e^m)(1 + e^{-m}))"""
    return expit(margin) * expit(-np.asarray(margin, dtype=np.float64))


def logistic_loss(obs: Observation, theta: Vector) -> float:
    """log(1 + exp(-y theta^T X))"""
    theta = as_vector(theta, "theta")
    return float(loss_from_margin(obs.y * _margin(obs.x, theta)))


def loss_gradient(obs: Observation, theta: Vector) -> Vector:
    """-y X / (1 + e^{y theta^T X})"""
    theta = as_vector(theta, "theta")
    m = obs.y * _margin(obs.x, theta)
    return -obs.y * float(expit(-m)) * obs.x


def hessian_weight(x: Vector, theta: Vector) -> float:
    """Curvature weight of the loss along x, in (0, 1/4]"""
    theta = as_vector(theta, "theta")
    return float(weight_from_margin(_margin(np.asarray(x, dtype=np.float64), theta)))


def expected_loss(x: Vector, theta: Vector, theta_true: Vector) -> float:
    """Loss averaged over y ~ p(y | x, theta_true), exhaustive over the two labels"""
    x = as_vector(x)
    theta = as_vector(theta, "theta")
    theta_true = as_vector(theta_true, "theta_true")
    m = _margin(x, theta)
    a = _margin(x, theta_true)
    return float(expit(a) * loss_from_margin(m) + expit(-a) * loss_from_margin(-m))


def expected_gradient(x: Vector, theta: Vector, theta_true: Vector) -> Vector:
    """
    E[y X / (1 + e^{y theta^T X})] under the true model

    This is the negated expected loss gradient; the two-term sum
    sigma(a)/(1+e^m) - sigma(-a)/(1+e^{-m}) collapses to sigma(a) - sigma(m).
    """
    x = as_vector(x)
    theta = as_vector(theta, "theta")
    theta_true = as_vector(theta_true, "theta_true")
    m = _margin(x, theta)
    a = _margin(x, theta_true)
    return float(expit(a) - expit(m)) * x


def sandwich_terms(x: Vector, theta: Vector, theta_true: Vector) -> SandwichTerms:
    """
    Expected linearized regret of one step and its envelope

    E = expected_gradient . (theta_true - theta)
    Q = ((theta_true - theta)^T x)^2 * hessian_weight(x, theta)
    exp(-|delta|) Q <= E <= exp(|delta|) Q
    """
    x = as_vector(x)
    theta = as_vector(theta, "theta")
    theta_true = as_vector(theta_true, "theta_true")
    delta = _margin(x, theta_true - theta)
    expected = float(expected_gradient(x, theta, theta_true) @ (theta_true - theta))
    quadratic = delta * delta * hessian_weight(x, theta)
    return SandwichTerms(
        expected=expected,
        quadratic=quadratic,
        lower=float(np.exp(-abs(delta)) * quadratic),
        upper=float(np.exp(abs(delta)) * quadratic),
    )


def sandwich_from_margins(margin, true_margin):
    """Vectorized sandwich over arrays of theta^T X and theta_true^T X"""
    margin = np.asarray(margin, dtype=np.float64)
    true_margin = np.asarray(true_margin, dtype=np.float64)
    delta = true_margin - margin
    expected = (expit(true_margin) - expit(margin)) * delta
    quadratic = delta * delta * weight_from_margin(margin)
    return expected, quadratic, np.exp(-np.abs(delta)) * quadratic, np.exp(np.abs(delta)) * quadratic
