"""
Checks on Well-Specified Streams
Per-step sandwich, martingale and localized-regret inequalities for runs with a known theta_true
"""
import math
from typing import Optional

import numpy as np
from scipy.special import expit

from core.data_models import BoundReport, LocalizationParams
from core.linalg_core import Vector, as_vector
from regret_lab.adversarial_checks import stepwise_report
from regret_lab.regret import (
    linearized_terms,
    localization_multiplier,
    localized_log_term,
    localized_mask,
    realized_linearized_terms,
    true_margins,
)
from regret_lab.trace import LearnerTrace

PRECISION_BLOCK = 256


def precision_quadratics(trace: LearnerTrace, theta_true: Vector) -> np.ndarray:
    """
    q_t = (theta_t - theta_true)^T P_t^{-1} (theta_t - theta_true) for t = 1..n+1

    P_t^{-1} = P_1^{-1} + sum_{s<t} w_s X_s X_s^T is rebuilt by accumulation, block by block.
    """
    theta_true = as_vector(theta_true, "theta_true")
    n, d = trace.n, trace.d
    deltas_all = trace.thetas - theta_true
    weighted = trace.features * np.sqrt(trace.weights)[:, None]
    precision = np.eye(d) / trace.p1
    q = np.empty(n + 1)

    for start in range(0, n + 1, PRECISION_BLOCK):
        stop = min(start + PRECISION_BLOCK, n + 1)
        rows = weighted[start:min(stop, n)]
        outer = np.einsum("si,sj->sij", rows, rows)
        inclusive = np.cumsum(outer, axis=0) if rows.shape[0] else np.zeros((0, d, d))
        exclusive = np.concatenate([np.zeros((1, d, d)), inclusive])[: stop - start]
        deltas = deltas_all[start:stop]
        q[start:stop] = np.einsum("bi,bij,bj->b", deltas, precision + exclusive, deltas)
        if rows.shape[0]:
            precision = precision + inclusive[-1]
    return q


def _telescoped_outside(q: np.ndarray, localized: np.ndarray) -> float:
    """sum over t outside T_eps of q_t - q_{t+1}"""
    differences = q[:-1] - q[1:]
    return float(np.sum(differences[~localized]))


def prop3_check(trace: LearnerTrace, theta_true: Vector, replicate: Optional[int] = None) -> BoundReport:
    """e^{-|delta|} Q_t <= E_t <= e^{|delta|} Q_t at every step"""
    expected, _, lower, upper = linearized_terms(trace, theta_true)
    excess = np.maximum(
        (lower - expected) / (1.0 + np.abs(expected)),
        (expected - upper) / (1.0 + np.abs(upper)),
    )
    return stepwise_report("prop3", excess, np.zeros_like(excess), trace, replicate,
                           note="normalized distance outside the sandwich")


def quadratic_variation_check(trace: LearnerTrace, theta_true: Vector,
                              replicate: Optional[int] = None) -> BoundReport:
    """
    (Delta M_t)^2 + E_t[(Delta M_t)^2] <= 2 (1 + e^D) Q_t

    Delta M_t is the realized minus the expected linearized term; its conditional variance
    over the two labels is p(1 - p) delta^2 with p = sigma(theta_true^T X_t).
    """
    expected, quadratic, _, _ = linearized_terms(trace, theta_true)
    delta = true_margins(trace, theta_true) - trace.margins
    p_pos = expit(true_margins(trace, theta_true))
    increment = realized_linearized_terms(trace, theta_true) - expected
    variance = p_pos * (1.0 - p_pos) * delta ** 2
    lhs = increment ** 2 + variance
    rhs = 2.0 * (1.0 + math.exp(min(trace.envelope.d_margin, 700.0))) * quadratic
    return stepwise_report("quadratic_variation", lhs, rhs, trace, replicate)


def corollary1_check(trace: LearnerTrace, theta_true: Vector, localization: LocalizationParams,
                     replicate: Optional[int] = None) -> BoundReport:
    """On localized steps: E_t <= M (E_t - (1/2 + alpha) Q_t) with M = e^eps / (e^-eps - 1/2 - alpha)"""
    multiplier = localization_multiplier(localization.epsilon, localization.alpha)
    expected, quadratic, _, _ = linearized_terms(trace, theta_true)
    mask = localized_mask(trace, theta_true, localization.epsilon)
    c = 0.5 + localization.alpha
    lhs = expected[mask]
    rhs = multiplier * (expected[mask] - c * quadratic[mask])
    report = stepwise_report("corollary1", lhs, rhs, trace, replicate, note=f"{int(mask.sum())} localized steps")
    if report.step_details:
        steps = np.flatnonzero(mask) + 1
        for row, step in zip(report.step_details, steps):
            row["step"] = float(step)
    return report


def lemma2_check(trace: LearnerTrace, theta_true: Vector, epsilon: float,
                 replicate: Optional[int] = None) -> BoundReport:
    """
    Deterministic localized bound of the Kalman recursion, for any label sequence

    sum_{T_eps} (r_t - Q_t / 2) <= ((1 + e^D)/4) d log(1 + n p1 D_X^2) + |theta_true|^2 / (2 p1)
                                   - 1/2 sum_{not T_eps} (q_t - q_{t+1})
    """
    theta_true = as_vector(theta_true, "theta_true")
    _, quadratic, _, _ = linearized_terms(trace, theta_true)
    mask = localized_mask(trace, theta_true, epsilon)
    realized = realized_linearized_terms(trace, theta_true)
    q = precision_quadratics(trace, theta_true)
    telescoped = _telescoped_outside(q, mask)

    lhs = float(np.sum(realized[mask] - 0.5 * quadratic[mask]))
    rhs = (
        localized_log_term(trace.n, trace.d, trace.p1, trace.envelope.d_x, trace.envelope.d_margin)
        + float(theta_true @ theta_true) / (2.0 * trace.p1)
        - 0.5 * telescoped
    )
    return BoundReport.evaluate(
        "lemma2", lhs, rhs, learner=trace.learner, replicate=replicate,
        note=f"|T_eps|={int(mask.sum())}, telescoped outside term {telescoped:.6g}",
    )


def theorem3_check(trace: LearnerTrace, theta_true: Vector, localization: LocalizationParams,
                   replicate: Optional[int] = None) -> BoundReport:
    """
    High-probability localized bound for one replicate

    sum_{T_eps} (E_t - (1/2 + alpha) Q_t) <= (1 + e^D)/alpha log(1/delta) + ((1 + e^D)/4) d log(1 + n p1 D_X^2)
                                             + |theta_true|^2 / (2 p1) - 1/2 sum_{not T_eps} (q_t - q_{t+1})

    A single replicate may violate it; the rate over replicates is judged by theorem3_rate_check.
    """
    theta_true = as_vector(theta_true, "theta_true")
    expected, quadratic, _, _ = linearized_terms(trace, theta_true)
    mask = localized_mask(trace, theta_true, localization.epsilon)
    q = precision_quadratics(trace, theta_true)
    telescoped = _telescoped_outside(q, mask)
    curvature = 1.0 + math.exp(min(trace.envelope.d_margin, 700.0))

    lhs = float(np.sum(expected[mask] - (0.5 + localization.alpha) * quadratic[mask]))
    rhs = (
        curvature / localization.alpha * math.log(1.0 / localization.delta)
        + localized_log_term(trace.n, trace.d, trace.p1, trace.envelope.d_x, trace.envelope.d_margin)
        + float(theta_true @ theta_true) / (2.0 * trace.p1)
        - 0.5 * telescoped
    )
    return BoundReport.evaluate(
        "theorem3", lhs, rhs, kind="diagnostic", learner=trace.learner, replicate=replicate,
        note=f"|T_eps|={int(mask.sum())}",
    )


def boundcardinal_check(trace: LearnerTrace, theta_true: Vector, localization: LocalizationParams,
                        replicate: Optional[int] = None) -> BoundReport:
    """
    sum_{not T_eps} |E_t - M (q_t - q_{t+1}) / 2|
        <= (2 D_X D_theta + M (2 D_X D_theta + 2 D_X^2 D_theta^2 + D_X^2 / 2)) (n - |T_eps|)
    """
    theta_true = as_vector(theta_true, "theta_true")
    multiplier = localization_multiplier(localization.epsilon, localization.alpha)
    expected, _, _, _ = linearized_terms(trace, theta_true)
    mask = localized_mask(trace, theta_true, localization.epsilon)
    q = precision_quadratics(trace, theta_true)
    differences = q[:-1] - q[1:]

    envelope = trace.envelope.with_comparator(theta_true)
    d_x, d_theta = envelope.d_x, envelope.d_theta
    per_step = 2 * d_x * d_theta + multiplier * (2 * d_x * d_theta + 2 * d_x ** 2 * d_theta ** 2 + d_x ** 2 / 2)
    outside = ~mask
    lhs = float(np.sum(np.abs(expected[outside] - multiplier * 0.5 * differences[outside])))
    rhs = per_step * int(outside.sum())
    return BoundReport.evaluate(
        "boundcardinal", lhs, rhs, learner=trace.learner, replicate=replicate,
        note=f"n - |T_eps| = {int(outside.sum())}, multiplier {multiplier:.4g}",
    )
