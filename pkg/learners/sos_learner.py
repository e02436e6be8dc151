"""
Semi-Online Step Learner
Newton-like approximation of regularized FTL with every curvature weight re-evaluated at the current estimate
"""
from typing import Literal, Optional

import numpy as np

from config.settings import settings
from core.linalg_core import downdate_unchecked, spd_inverse
from core.loss_model import Observation, weight_from_margin
from learners.base import History, LearnerState, OnlineLearner, guard_state, label_residual
from learners.ftl_oracle import regularized_hessian

InnerMode = Literal["recursion", "batch"]


def sos_matrix(history: History, theta, p1: float, inner: InnerMode = "recursion"):
    """
    (p1^{-1} I + sum_{u<=t} w_u(theta) X_u X_u^T)^{-1}

    "recursion" rebuilds it from p1 I by t Sherman-Morrison downdates, O(t d^2);
    "batch" inverts the regularized Hessian directly, O(t d^2 + d^3).
    """
    if inner == "batch":
        return spd_inverse(regularized_hessian(history.features, theta, p1))

    features = history.features
    weights = weight_from_margin(features @ theta)
    p_matrix = p1 * np.eye(theta.shape[0])
    for x, w in zip(features, weights):
        p_matrix = downdate_unchecked(p_matrix, x, float(w))
    return p_matrix


def sos_step(
    state: LearnerState,
    history: History,
    obs: Observation,
    inner: InnerMode = "recursion",
    verify: Optional[bool] = None,
) -> LearnerState:
    """
    One semi-online step

    Args:
        state: (theta_t, P_t) before the observation
        history: Observations 1..t, with obs as the last entry
        obs: The t-th observation
        inner: How P_{t+1} is rebuilt, see sos_matrix
        verify: SPD check of the new matrix (defaults to settings)

    Returns:
        The state for step t + 1
    """
    if len(history) != state.step:
        raise ValueError(f"history holds {len(history)} observations but the learner is at step {state.step}")
    verify = settings.verify_spd if verify is None else verify

    residual = label_residual(obs, state.theta)
    p_next = sos_matrix(history, state.theta, state.p1, inner)
    theta_next = state.theta + residual * (p_next @ obs.x)
    return guard_state(
        LearnerState(theta=theta_next, p_matrix=p_next, step=state.step + 1, p1=state.p1),
        state.step,
        verify,
    )


class SosLearner(OnlineLearner):
    """Keeps the full history; the cost of step t grows as t d^2"""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.inner: InnerMode = self.spec.sos_inner
        self.history = History(self.d)

    def update(self, obs: Observation) -> LearnerState:
        self.history.append(obs)
        self.state = sos_step(self.state, self.history, obs, self.inner, self.verify)
        return self.state

    def reset(self) -> None:
        super().reset()
        self.history = History(self.d)
