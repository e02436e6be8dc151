"""
Deterministic Checks on Arbitrary Streams
Adversarial regret bound of the semi-online step and the per-step identities behind it
"""
from typing import Dict, List, Optional

import numpy as np
from loguru import logger
from scipy.special import expit

from core.data_models import BOUND_REL_TOL, BoundReport, LearnerKind
from core.linalg_core import spd_inverse
from regret_lab.regret import lemma1_coefficient, prop2_rhs, regret_vs_comparator, theorem1_rhs
from regret_lab.trace import LearnerTrace

# Learners whose update has the form theta_{t+1} = theta_t + P_{t+1} X_t y_t / (1 + e^{y_t theta_t^T X_t})
NATURAL_GRADIENT_KINDS = {LearnerKind.EKF, LearnerKind.SOS, LearnerKind.OGD}
# Round-off floor of theta_t^T g - theta_{t+1}^T g relative to |g| |theta|
CANCELLATION_FLOOR = 1e-12
CONSISTENCY_TOL = 1e-8


def stepwise_report(name: str, lhs: np.ndarray, rhs: np.ndarray, trace: LearnerTrace,
                    replicate: Optional[int] = None, note: Optional[str] = None,
                    first_step: int = 1) -> BoundReport:
    """
    Fold a per-step inequality lhs_t <= rhs_t into one report

    The aggregate lhs is the worst normalized excess (lhs_t - rhs_t) / (1 + |rhs_t|) against rhs 0,
    so the report is satisfied exactly when every step is.
    """
    lhs = np.asarray(lhs, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    excess = (lhs - rhs) / (1.0 + np.abs(rhs))
    per_step_ok = excess <= BOUND_REL_TOL
    details = [
        {"step": float(first_step + i), "lhs": float(l), "rhs": float(r), "satisfied": float(ok)}
        for i, (l, r, ok) in enumerate(zip(lhs, rhs, per_step_ok))
    ]
    worst = float(np.max(excess)) if excess.size else 0.0
    failing = int(np.sum(~per_step_ok))
    summary = f"{failing} of {excess.size} steps violated" if failing else f"all {excess.size} steps hold"
    return BoundReport.evaluate(
        name, worst, 0.0,
        learner=trace.learner, replicate=replicate,
        note=f"{summary}; {note}" if note else summary,
        step_details=details,
    )


def theorem1_check(trace: LearnerTrace, comparators: Dict[str, np.ndarray],
                   replicate: Optional[int] = None) -> List[BoundReport]:
    """Realized regret against each comparator versus the adversarial bound"""
    reports = []
    theta_1 = trace.thetas[0]
    for label, theta in comparators.items():
        lhs = regret_vs_comparator(trace, theta)
        rhs = theorem1_rhs(trace.n, trace.d, trace.p1, trace.envelope, theta, theta_1)
        reports.append(BoundReport.evaluate(
            "theorem1", lhs, rhs, learner=trace.learner, replicate=replicate, note=f"comparator={label}",
        ))
    return reports


def prop2_check(trace: LearnerTrace, replicate: Optional[int] = None) -> BoundReport:
    """sum_{t <= n-1} X_t^T P_{t+1} X_t / (1 + e^{y_t theta_t^T X_t})^2 against its log bound"""
    terms = trace.quad * trace.residual_sq
    lhs = float(np.sum(terms[: max(trace.n - 1, 0)]))
    rhs = prop2_rhs(trace.n, trace.d, trace.p1, trace.envelope)
    return BoundReport.evaluate("prop2", lhs, rhs, learner=trace.learner, replicate=replicate)


def score_at(trace: LearnerTrace, t: int, theta: np.ndarray) -> np.ndarray:
    """S_t(theta) = sum_{s<t} grad l_s(theta) + P_1^{-1} theta"""
    past_x = trace.features[: t - 1]
    past_y = trace.labels[: t - 1]
    coefficients = past_y * expit(-past_y * (past_x @ theta))
    return -past_x.T @ coefficients + theta / trace.p1


def lemma1_check(trace: LearnerTrace, replicate: Optional[int] = None) -> BoundReport:
    """
    |S_{t+1}(theta_{t+1}) - S_t(theta_t)| <= (sqrt(d) D_X (1 + e^D) / 4) X_t^T P_{t+1} X_t / (1 + e^{y theta_t^T X_t})^2

    Each score is summed explicitly, O(n^2 d) overall.
    """
    scores = np.stack([score_at(trace, t, trace.thetas[t - 1]) for t in range(1, trace.n + 2)])
    lhs = np.linalg.norm(np.diff(scores, axis=0), axis=1)
    rhs = lemma1_coefficient(trace.d, trace.envelope) * trace.quad * trace.residual_sq
    return stepwise_report("lemma1", lhs, rhs, trace, replicate)


def update_identity_check(trace: LearnerTrace, replicate: Optional[int] = None) -> Optional[BoundReport]:
    """
    grad l_t(theta_t)^T (theta_t - theta_{t+1}) = X_t^T P_{t+1} X_t / (1 + e^{y_t theta_t^T X_t})^2

    Returns None for learners whose step does not have the natural-gradient form.
    """
    if trace.kind not in NATURAL_GRADIENT_KINDS:
        return None
    steps = trace.thetas[:-1] - trace.thetas[1:]
    lhs = np.einsum("ij,ij->i", trace.gradients, steps)
    rhs = trace.quad * trace.residual_sq
    floor = CANCELLATION_FLOOR * np.linalg.norm(trace.gradients, axis=1) * (
        np.linalg.norm(trace.thetas[:-1], axis=1) + np.linalg.norm(trace.thetas[1:], axis=1)
    )
    residual = np.maximum(np.abs(lhs - rhs) - floor, 0.0)
    relative = np.divide(residual, np.abs(rhs), out=np.where(residual > 0, np.inf, 0.0), where=np.abs(rhs) > 0)
    worst_index = int(np.argmax(relative)) if relative.size else 0
    worst = float(relative[worst_index]) if relative.size else 0.0
    details = [
        {"step": float(i + 1), "lhs": float(l), "rhs": float(r), "satisfied": float(rel <= BOUND_REL_TOL)}
        for i, (l, r, rel) in enumerate(zip(lhs, rhs, relative))
    ]
    report = BoundReport.evaluate(
        "update_identity", worst, 0.0,
        learner=trace.learner, replicate=replicate,
        note=f"max relative residual at step {worst_index + 1}",
        step_details=details,
    )
    if not report.satisfied:
        logger.warning(f"update_identity broken for {trace.learner} at step {worst_index + 1} (residual {worst:.3e})")
    return report


def ekf_consistency_check(trace: LearnerTrace, replicate: Optional[int] = None) -> BoundReport:
    """P_{n+1}^{-1} - P_1^{-1} against sum_s w_s X_s X_s^T, relative Frobenius error"""
    features = trace.features
    accumulated = (features * trace.weights[:, None]).T @ features
    recovered = spd_inverse(trace.final_state.p_matrix) - np.eye(trace.d) / trace.p1
    scale = max(float(np.linalg.norm(spd_inverse(trace.final_state.p_matrix))), 1e-300)
    error = float(np.linalg.norm(recovered - accumulated)) / scale
    return BoundReport.evaluate(
        "ekf_consistency", error, CONSISTENCY_TOL, learner=trace.learner, replicate=replicate,
        note="relative Frobenius error of the accumulated precision",
    )
