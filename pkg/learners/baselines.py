"""
First-Order and Online Newton Step Baselines
Comparison learners needing tuning constants the second-order learners do without
"""
from typing import Callable, Optional

import numpy as np

from core.data_models import LearnerSpec
from core.linalg_core import rank_one_downdate
from core.loss_model import Observation, loss_gradient
from learners.base import LearnerState, OnlineLearner, guard_state

RateSchedule = Callable[[int], float]
MAX_SHRINKS = 60


def make_rate_schedule(rate: float, schedule: str = "inv_sqrt") -> RateSchedule:
    """eta_t = rate, rate / sqrt(t) or rate / t"""
    if schedule == "constant":
        return lambda t: rate
    if schedule == "inv_sqrt":
        return lambda t: rate / np.sqrt(t)
    if schedule == "inv":
        return lambda t: rate / t
    raise ValueError(f"unknown rate schedule: {schedule}")


def ogd_step(state: LearnerState, obs: Observation, rate_schedule: RateSchedule, verify: Optional[bool] = None) -> LearnerState:
    """
    theta_{t+1} = theta_t - eta_t grad

    The stored matrix is eta_t I, so the step has the same theta + P c y X form as the
    second-order learners.
    """
    eta = float(rate_schedule(state.step))
    grad = loss_gradient(obs, state.theta)
    return guard_state(
        LearnerState(
            theta=state.theta - eta * grad,
            p_matrix=eta * np.eye(state.dim),
            step=state.step + 1,
            p1=state.p1,
        ),
        state.step,
        verify,
    )


def project_to_ball(theta: np.ndarray, step: np.ndarray, radius: float) -> np.ndarray:
    """Halve the step until theta + step is inside the ball, falling back to a radial rescale"""
    for _ in range(MAX_SHRINKS):
        candidate = theta + step
        if np.linalg.norm(candidate) <= radius:
            return candidate
        step = 0.5 * step
    candidate = theta + step
    norm = float(np.linalg.norm(candidate))
    return candidate if norm <= radius else candidate * (radius / norm)


def ons_step(
    state: LearnerState,
    obs: Observation,
    gamma: float,
    diameter: float,
    verify: Optional[bool] = None,
) -> LearnerState:
    """
    Online Newton Step

    A_t = A_{t-1} + g_t g_t^T with A_0 = I / p1, kept as its inverse in p_matrix;
    theta_{t+1} = Proj(theta_t - A_t^{-1} g_t / gamma) on the ball of the given diameter.
    """
    grad = loss_gradient(obs, state.theta)
    a_inverse = rank_one_downdate(state.p_matrix, grad, 1.0)
    step = -(a_inverse @ grad) / gamma
    theta_next = project_to_ball(state.theta, step, diameter / 2.0)
    return guard_state(
        LearnerState(theta=theta_next, p_matrix=a_inverse, step=state.step + 1, p1=state.p1),
        state.step,
        verify,
    )


class OgdLearner(OnlineLearner):
    """Online gradient descent with a configurable rate schedule"""

    def __init__(self, spec: LearnerSpec, d: int, verify: Optional[bool] = None):
        super().__init__(spec, d, verify)
        self.rate_schedule = make_rate_schedule(spec.rate, spec.schedule)

    def update(self, obs: Observation) -> LearnerState:
        self.state = ogd_step(self.state, obs, self.rate_schedule, self.verify)
        return self.state


class OnsLearner(OnlineLearner):
    """Online Newton Step with exp-concavity constant gamma and a bounded domain"""

    def update(self, obs: Observation) -> LearnerState:
        self.state = ons_step(self.state, obs, self.spec.gamma, self.spec.diameter, self.verify)
        return self.state
