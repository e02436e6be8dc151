"""
Regret Functionals and Bound Right-Hand Sides
Closed-form regret quantities over traces and the analytic bounds they are compared with
"""
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from core.data_models import BoundConstants, EnvelopeStats
from core.exceptions import ConfigError, InfeasibleConstantError
from core.linalg_core import Vector, as_vector
from core.loss_model import loss_from_margin, sandwich_from_margins
from regret_lab.trace import LearnerTrace


def _exp(x: float) -> float:
    """e^x saturating to +inf"""
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _safe_exp_log(log_value: float) -> float:
    if log_value == -math.inf:
        return 0.0
    return _exp(log_value)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


# --- realized regret ---------------------------------------------------------

def comparator_losses(trace: LearnerTrace, theta: Vector) -> np.ndarray:
    theta = as_vector(theta, "theta")
    if theta.shape[0] != trace.d:
        raise ValueError(f"comparator has length {theta.shape[0]}, trace has dimension {trace.d}")
    return loss_from_margin(trace.labels * (trace.features @ theta))


def regret_vs_comparator(trace: LearnerTrace, theta: Vector) -> float:
    """sum_t l_t(theta_t) - l_t(theta)"""
    if trace.n == 0:
        return 0.0
    return float(np.sum(trace.losses) - np.sum(comparator_losses(trace, theta)))


def regret_curve(trace: LearnerTrace, theta: Vector) -> np.ndarray:
    """Cumulative realized regret after every step"""
    return np.cumsum(trace.losses - comparator_losses(trace, theta))


# --- expectations under the well-specified model ----------------------------

def true_margins(trace: LearnerTrace, theta_true: Vector) -> np.ndarray:
    return trace.features @ as_vector(theta_true, "theta_true")


def expected_excess_losses(trace: LearnerTrace, theta_true: Vector) -> np.ndarray:
    """E_t[l(theta_t)] - E_t[l(theta_true)] per step, exact over the two labels"""
    margin = trace.margins
    truth = true_margins(trace, theta_true)
    p_pos = expit(truth)
    p_neg = expit(-truth)
    played = p_pos * loss_from_margin(margin) + p_neg * loss_from_margin(-margin)
    best = p_pos * loss_from_margin(truth) + p_neg * loss_from_margin(-truth)
    return played - best


def expected_regret(trace: LearnerTrace, theta_true: Vector) -> float:
    return float(np.sum(expected_excess_losses(trace, theta_true)))


def linearized_terms(trace: LearnerTrace, theta_true: Vector) -> Tuple[np.ndarray, ...]:
    """Per-step (E_t, Q_t, lower_t, upper_t) of the expected linearized regret"""
    return sandwich_from_margins(trace.margins, true_margins(trace, theta_true))


def linearized_regret_expected(trace: LearnerTrace, theta_true: Vector) -> float:
    """sum_t E_t[y X^T / (1 + e^{y theta_t^T X})] (theta_true - theta_t)"""
    expected, _, _, _ = linearized_terms(trace, theta_true)
    return float(np.sum(expected))


def realized_linearized_terms(trace: LearnerTrace, theta_true: Vector) -> np.ndarray:
    """r_t = y_t X_t^T (theta_true - theta_t) / (1 + e^{y_t theta_t^T X_t}) for the observed labels"""
    delta = true_margins(trace, theta_true) - trace.margins
    return trace.labels * expit(-trace.labels * trace.margins) * delta


def localized_set(trace: LearnerTrace, theta_true: Vector, epsilon: float) -> Tuple[np.ndarray, int]:
    """1-based steps where |(theta_t - theta_true)^T X_t| <= epsilon, and their count"""
    mask = localized_mask(trace, theta_true, epsilon)
    indices = np.flatnonzero(mask) + 1
    return indices, int(indices.shape[0])


def localized_mask(trace: LearnerTrace, theta_true: Vector, epsilon: float) -> np.ndarray:
    return np.abs(trace.margins - true_margins(trace, theta_true)) <= epsilon


def localization_multiplier(epsilon: float, alpha: float) -> float:
    """e^eps / (e^{-eps} - (1/2 + alpha)); requires 1/2 + alpha < e^{-eps}"""
    gap = math.exp(-epsilon) - (0.5 + alpha)
    if gap <= 0:
        raise ConfigError(f"1/2 + alpha = {0.5 + alpha:.4g} must be below e^-epsilon = {math.exp(-epsilon):.4g}")
    return math.exp(epsilon) / gap


# --- adversarial bounds ------------------------------------------------------

def theorem1_rhs(n: int, d: int, p1: float, envelope: EnvelopeStats, theta: Vector, theta_1: Vector) -> float:
    """
    Adversarial regret bound of the semi-online step against a fixed comparator

    (sqrt(d) D_X (D_theta + |theta|)(1 + e^D)/4 + 1) ((1 + e^D)/2) d log(1 + (n-1) p1 D_X^2)
    + (|theta_1|^2 + |theta|^2) / (2 p1) + D_X (D_theta + |theta|)
    """
    d_x = envelope.d_x
    reach = envelope.d_theta + float(np.linalg.norm(theta))
    curvature = 1.0 + _exp(envelope.d_margin)
    log_term = math.log1p((n - 1) * p1 * d_x ** 2)
    leading = 0.0
    if log_term > 0:
        leading = (math.sqrt(d) * d_x * reach * curvature / 4.0 + 1.0) * (curvature / 2.0) * d * log_term
    ridge = (float(np.dot(theta_1, theta_1)) + float(np.dot(theta, theta))) / (2.0 * p1)
    return leading + ridge + d_x * reach


def prop2_rhs(n: int, d: int, p1: float, envelope: EnvelopeStats) -> float:
    """((1 + e^D)/2) d log(1 + (n-1) p1 D_X^2)"""
    log_term = math.log1p((n - 1) * p1 * envelope.d_x ** 2)
    if log_term == 0:
        return 0.0
    return (1.0 + _exp(envelope.d_margin)) / 2.0 * d * log_term


def lemma1_coefficient(d: int, envelope: EnvelopeStats) -> float:
    """sqrt(d) D_X (1 + e^D) / 4"""
    return math.sqrt(d) * envelope.d_x * (1.0 + _exp(envelope.d_margin)) / 4.0


def localized_log_term(n: int, d: int, p1: float, d_x: float, d_margin: float) -> float:
    """((1 + e^D)/4) d log(1 + n p1 D_X^2)"""
    log_term = math.log1p(n * p1 * d_x ** 2)
    if log_term == 0:
        return 0.0
    return (1.0 + _exp(d_margin)) / 4.0 * d * log_term


# --- expectation bounds ------------------------------------------------------

def select_k(a: float) -> Optional[int]:
    """Smallest integer k with k a > 1, or None when that k already has k a >= 2"""
    if not a > 0 or not math.isfinite(a):
        return None
    k = math.floor(1.0 / a) + 1
    return k if k * a < 2.0 else None


def theorem2_constants(d_x: float, d_theta: float, d_margin: float, p1: float, m1: float, M2: float,
                       k: Optional[int] = None) -> BoundConstants:
    """
    a = e^{-D} m1 / (1 + e^D), k with 1 < k a < 2 and
    b_k = (5 M2 / (p1^2 D_X^2)) (4 D_theta^2 + 2 p1 D_theta D_X + p1^2 D_X^2)^k

    The log of D_X^{2k} b_k is kept separately so that D_X = 0 does not produce 0 * inf.
    """
    a = _safe_exp_log(-d_margin + _log(m1)) / (1.0 + _exp(d_margin)) if m1 > 0 else 0.0
    if k is None:
        k = select_k(a)
    feasible = k is not None and 1.0 < k * a < 2.0

    per_step = 2 * d_x * d_theta + 30.0 * (2 * d_x * d_theta + 2 * d_x ** 2 * d_theta ** 2 + d_x ** 2 / 2.0)
    if not feasible:
        return BoundConstants(a=a, k=k, per_step_constant=per_step, feasible=False)

    base = 4 * d_theta ** 2 + 2 * p1 * d_theta * d_x + p1 ** 2 * d_x ** 2
    log_b_k = _log(5.0 * M2) - 2 * _log(p1) - 2 * _log(d_x) + k * _log(base)
    log_scaled = _log(5.0 * M2) - 2 * _log(p1) + (2 * k - 2) * _log(d_x) + k * _log(base)
    if d_x == 0 and k == 1:
        log_scaled = _log(5.0 * M2) - 2 * _log(p1) + _log(base)
    if math.isnan(log_b_k):
        log_b_k = math.inf
    return BoundConstants(
        a=a,
        k=k,
        log_b_k=log_b_k,
        b_k=_safe_exp_log(log_b_k),
        log_scaled_b_k=log_scaled if not math.isnan(log_scaled) else -math.inf,
        per_step_constant=per_step,
        feasible=True,
    )


def _log_growth_term(log_prefactor: float, k: int, a: float, n: int) -> float:
    """exp(log_prefactor) / (k a - 1) * log n, zero when either factor vanishes"""
    log_n = math.log(n) if n > 1 else 0.0
    if log_n == 0.0 or log_prefactor == -math.inf:
        return 0.0
    return _safe_exp_log(log_prefactor - math.log(k * a - 1.0) + math.log(log_n))


def theorem2_bound(n: int, d: int, p1: float, envelope: EnvelopeStats, theta_true: Vector,
                   m1: float, M2: float, k: Optional[int] = None) -> Tuple[float, BoundConstants]:
    """
    Expected-regret bound of the Kalman recursion under the curvature assumptions

    30 (20 (1 + e^D) + ((1 + e^D)/4) d log(1 + n p1 D_X^2) + |theta_true|^2 / (2 p1))
    + (62 D_X D_theta + 60 D_X^2 D_theta^2 + 15 D_X^2)(1 + 4^{k+1} D_X^{2k} b_k / (k a - 1) log n)

    Returns:
        The bound and the constants it was evaluated with

    Raises:
        InfeasibleConstantError: no integer k satisfies 1 < k a < 2
    """
    theta_true = as_vector(theta_true, "theta_true")
    env = envelope.with_comparator(theta_true)
    d_x, d_theta, d_margin = env.d_x, env.d_theta, env.d_margin
    constants = theorem2_constants(d_x, d_theta, d_margin, p1, m1, M2, k)
    if not constants.feasible:
        raise InfeasibleConstantError(constants.a)

    curvature = 1.0 + _exp(d_margin)
    first = 30.0 * (
        20.0 * curvature
        + localized_log_term(n, d, p1, d_x, d_margin)
        + float(theta_true @ theta_true) / (2.0 * p1)
    )
    factor = 62 * d_x * d_theta + 60 * d_x ** 2 * d_theta ** 2 + 15 * d_x ** 2
    if factor == 0:
        return first, constants
    growth = _log_growth_term((constants.k + 1) * math.log(4.0) + constants.log_scaled_b_k, constants.k, constants.a, n)
    return first + factor * (1.0 + growth), constants


def theorem4_bound(epsilon: float, k: int, a: float, b_k: float, d_x: float, n: int) -> float:
    """E[n - |T_eps|] <= 1 + 4 D_X^{2k} b_k / (eps^{2k} (k a - 1)) log n"""
    if not 1.0 < k * a < 2.0:
        raise InfeasibleConstantError(a)
    log_scaled = 2 * k * _log(d_x) + _log(b_k)
    if math.isnan(log_scaled):
        log_scaled = -math.inf
    return theorem4_from_log(epsilon, k, a, log_scaled, n)


def theorem4_from_log(epsilon: float, k: int, a: float, log_scaled_b_k: float, n: int) -> float:
    """theorem4_bound with D_X^{2k} b_k given through its logarithm"""
    log_prefactor = math.log(4.0) + log_scaled_b_k - 2 * k * math.log(epsilon)
    return 1.0 + _log_growth_term(log_prefactor, k, a, n)


def theorem4_from_constants(epsilon: float, constants: BoundConstants, n: int) -> float:
    if not constants.feasible:
        raise InfeasibleConstantError(constants.a)
    return theorem4_from_log(epsilon, constants.k, constants.a, constants.log_scaled_b_k, n)


def prop4_curves(t: Sequence[int], lambda_min: float, d_x: float, d_margin: float, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Analytic iid envelopes on the t-scaled curvature constants

    lower: lambda_min / (1 + D_X^2)^2, a floor for t lambda_min(E[P_{t+1} X_t X_t^T])
    upper: D_X^2 16 (1 + e^D)^2 / lambda_min^2 (1 + 2 d e^{-3} (3 D_X^4 + D_X^2 lambda_min / 2)^3 / ((lambda_min^2 / 8)^2 t)),
           a ceiling for t^2 E[X_t^T P_{t+1}^2 X_t]
    """
    t = np.asarray(t, dtype=np.float64)
    if lambda_min <= 0:
        return np.zeros_like(t), np.full_like(t, np.inf)
    lower = np.full_like(t, lambda_min / (1.0 + d_x ** 2) ** 2)
    with np.errstate(over="ignore"):
        transient = 2 * d * math.exp(-3) * (3 * d_x ** 4 + d_x ** 2 * lambda_min / 2) ** 3 / (lambda_min ** 2 / 8) ** 2
        upper = d_x ** 2 * 16 * (1.0 + _exp(d_margin)) ** 2 / lambda_min ** 2 * (1.0 + transient / t)
    return lower, upper
