"""
Extended Kalman Filter Learner
Static-state Kalman recursion for logistic regression, O(d^2) per step
"""
from typing import Optional

import numpy as np

from config.settings import settings
from core.exceptions import NumericAbortError
from core.linalg_core import LOEWNER_TOL, loewner_gap, rank_one_downdate
from core.loss_model import Observation, weight_from_margin
from learners.base import LearnerState, OnlineLearner, guard_state, label_residual


def ekf_step(state: LearnerState, obs: Observation, verify: Optional[bool] = None) -> LearnerState:
    """
    One Kalman update with the curvature weight taken at the pre-update estimate

    P_{t+1} = (P_t^{-1} + w_t X_t X_t^T)^{-1},  w_t = sigma(m)(1 - sigma(m)),  m = theta_t^T X_t
    theta_{t+1} = theta_t + P_{t+1} X_t y_t / (1 + e^{y_t m})

    Args:
        state: (theta_t, P_t) before the observation
        obs: The t-th observation
        verify: Check SPD and Loewner monotonicity of the new matrix (defaults to settings)

    Returns:
        The state for step t + 1
    """
    verify = settings.verify_spd if verify is None else verify
    residual = label_residual(obs, state.theta)
    weight = float(weight_from_margin(float(state.theta @ obs.x)))
    p_next = rank_one_downdate(state.p_matrix, obs.x, weight)
    theta_next = state.theta + residual * (p_next @ obs.x)

    new_state = guard_state(
        LearnerState(theta=theta_next, p_matrix=p_next, step=state.step + 1, p1=state.p1),
        state.step,
        verify,
    )
    if verify and loewner_gap(state.p_matrix, p_next) < -LOEWNER_TOL:
        raise NumericAbortError("matrix increased in the Loewner order", state.step)
    return new_state


class EkfLearner(OnlineLearner):
    """Parameter-free second-order learner: only p1 is configurable"""

    def update(self, obs: Observation) -> LearnerState:
        self.state = ekf_step(self.state, obs, self.verify)
        return self.state


def ekf_precision_from_weights(features: np.ndarray, weights: np.ndarray, p1: float) -> np.ndarray:
    """P_1^{-1} + sum_s w_s X_s X_s^T, the accumulated precision the recursion tracks"""
    d = features.shape[1]
    return np.eye(d) / p1 + (features * weights[:, None]).T @ features
