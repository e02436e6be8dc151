"""
Regularized Follow-The-Leader Oracle
Batch minimizer of the ridge-regularized cumulative logistic loss by damped Newton
"""
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.special import expit

from core.exceptions import ConvergenceError, DimensionMismatchError
from core.linalg_core import Vector, as_vector, solve_spd, spd_inverse
from core.loss_model import Observation, loss_from_margin, weight_from_margin
from learners.base import History, LearnerState, OnlineLearner, guard_state

GRADIENT_TOL = 1e-10
MAX_ITERATIONS = 100
MAX_HALVINGS = 60
# Objective increases below this relative size are round-off
OBJECTIVE_ROUNDOFF = 4 * np.finfo(np.float64).eps


def regularized_objective(features: np.ndarray, labels: np.ndarray, theta: Vector, p1: float) -> float:
    """sum_s log(1 + e^{-y_s theta^T X_s}) + ||theta||^2 / (2 p1)"""
    signed = labels * (features @ theta)
    return float(np.sum(loss_from_margin(signed)) + theta @ theta / (2.0 * p1))


def regularized_gradient(features: np.ndarray, labels: np.ndarray, theta: Vector, p1: float) -> Vector:
    signed = labels * (features @ theta)
    return -features.T @ (labels * expit(-signed)) + theta / p1


def regularized_hessian(features: np.ndarray, theta: Vector, p1: float) -> np.ndarray:
    """P_1^{-1} + sum_s w_s(theta) X_s X_s^T with every weight taken at the same theta"""
    d = theta.shape[0]
    weights = weight_from_margin(features @ theta)
    return np.eye(d) / p1 + (features * weights[:, None]).T @ features


def ftl_newton_path(history: History, p1: float, theta_init: Optional[Vector] = None) -> Tuple[Vector, List[float]]:
    """
    Damped Newton iteration on the regularized objective

    A full Newton step is halved until the objective does not increase.

    Args:
        history: Observations 1..t (may be empty)
        p1: Regularization scale, the ridge term is ||theta||^2 / (2 p1)
        theta_init: Starting point, zero when omitted

    Returns:
        The minimizer and the objective value after every accepted iterate (first entry at theta_init)
    """
    features = history.features
    labels = history.labels.astype(np.float64)
    theta = np.zeros(history.d) if theta_init is None else as_vector(theta_init, "theta_init").copy()
    if theta.shape[0] != history.d:
        raise DimensionMismatchError(f"theta_init has length {theta.shape[0]}, history holds dimension {history.d}")

    objective = regularized_objective(features, labels, theta, p1)
    path = [objective]
    grad = regularized_gradient(features, labels, theta, p1)

    for iteration in range(MAX_ITERATIONS):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= GRADIENT_TOL:
            return theta, path

        direction = solve_spd(regularized_hessian(features, theta, p1), grad)
        step_size = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = theta - step_size * direction
            candidate_objective = regularized_objective(features, labels, candidate, p1)
            if candidate_objective <= objective + OBJECTIVE_ROUNDOFF * abs(objective):
                break
            step_size *= 0.5
        else:
            raise ConvergenceError(f"no descent after {MAX_HALVINGS} halvings at iteration {iteration}", grad_norm)

        theta = candidate
        objective = min(candidate_objective, objective)
        path.append(candidate_objective)
        grad = regularized_gradient(features, labels, theta, p1)

    grad_norm = float(np.linalg.norm(grad))
    if grad_norm <= GRADIENT_TOL:
        return theta, path
    raise ConvergenceError(f"Newton did not converge in {MAX_ITERATIONS} iterations", grad_norm)


def ftl_fit(history: History, p1: float, theta_init: Optional[Vector] = None) -> Vector:
    """argmin_theta of the regularized cumulative loss over the history"""
    theta, _ = ftl_newton_path(history, p1, theta_init)
    return theta


def ftl_fit_arrays(features: np.ndarray, labels: np.ndarray, p1: float) -> Vector:
    """ftl_fit over raw arrays, used for comparators on whole streams"""
    history = History(features.shape[1], capacity=len(labels))
    for x, y in zip(features, labels):
        history.append(Observation(x, int(y)))
    return ftl_fit(history, p1)


class FtlLearner(OnlineLearner):
    """Plays theta_t = ftl_fit(history_{t-1}), warm-started from the previous leader"""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.history = History(self.d)

    def update(self, obs: Observation) -> LearnerState:
        self.history.append(obs)
        theta_next = ftl_fit(self.history, self.spec.p1, self.state.theta)
        p_next = spd_inverse(regularized_hessian(self.history.features, theta_next, self.spec.p1))
        self.state = guard_state(
            LearnerState(theta=theta_next, p_matrix=p_next, step=self.state.step + 1, p1=self.state.p1),
            self.state.step,
            self.verify,
        )
        logger.trace(f"{self.learner_name} step {self.state.step - 1}: leader norm {np.linalg.norm(theta_next):.4g}")
        return self.state

    def reset(self) -> None:
        super().reset()
        self.history = History(self.d)
