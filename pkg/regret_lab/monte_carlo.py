"""
Monte Carlo Aggregates
Replicate-level evidence for the expectation and high-probability statements on the Kalman recursion
"""
import math
from typing import Iterable, List, Optional

import numpy as np
from loguru import logger

from core.data_models import AssumptionEstimates, BoundReport, EnvelopeStats
from core.exceptions import InfeasibleConstantError, InsufficientDataError
from core.linalg_core import Vector, as_vector
from regret_lab.regret import (
    expected_excess_losses,
    localized_set,
    prop4_curves,
    theorem2_bound,
    theorem2_constants,
    theorem4_from_constants,
)
from regret_lab.trace import LearnerTrace

GROWTH_RATIO_LIMIT = 2.5
DECAY_FACTOR_LIMIT = 2.0
RATE_SLACK = 0.03
MIN_REPLICATES = 2
MIN_DECAY_REPLICATES = 50


def sample_steps(n: int) -> List[int]:
    """Powers of two up to n, then n itself"""
    steps = []
    t = 1
    while t <= n:
        steps.append(t)
        t *= 2
    if not steps or steps[-1] != n:
        steps.append(n)
    return steps


class MonteCarloAccumulator:
    """
    Running sums over replicates of one learner on a common well-specified spec

    Traces are folded in one at a time and can be discarded afterwards; sums are taken in
    the order traces are added, so callers add them in replicate order.
    """

    def __init__(self, n: int, d: int, theta_true: Vector, epsilon: float, p1: float):
        self.n = n
        self.d = d
        self.theta_true = as_vector(theta_true, "theta_true")
        self.epsilon = epsilon
        self.p1 = p1
        self.count = 0
        self.precision_products = np.zeros((n, d, d))   # sum of P_{t+1} X_t X_t^T
        self.squared_steps = np.zeros(n)                # sum of X_t^T P_{t+1}^2 X_t
        self.squared_errors = np.zeros(n)               # sum of |theta_t - theta_true|^2
        self.cumulative_regret = np.zeros(n)            # sum of cumulative expected regret
        self.feature_moment = np.zeros((d, d))
        self.non_localized: List[int] = []
        self.envelopes: List[EnvelopeStats] = []

    def add(self, trace: LearnerTrace) -> None:
        if trace.n != self.n or trace.d != self.d:
            raise ValueError(f"trace shape ({trace.n}, {trace.d}) differs from accumulator ({self.n}, {self.d})")
        features = trace.features
        self.precision_products += np.einsum("ti,tj->tij", trace.px, features)
        self.squared_steps += np.einsum("ti,ti->t", trace.px, trace.px)
        errors = trace.iterates - self.theta_true
        self.squared_errors += np.einsum("ti,ti->t", errors, errors)
        self.cumulative_regret += np.cumsum(expected_excess_losses(trace, self.theta_true))
        self.feature_moment += features.T @ features
        _, localized = localized_set(trace, self.theta_true, self.epsilon)
        self.non_localized.append(self.n - localized)
        self.envelopes.append(trace.envelope)
        self.count += 1

    def require(self, minimum: int, what: str) -> None:
        if self.count < minimum:
            raise InsufficientDataError(f"{what} needs at least {minimum} replicates, got {self.count}")

    @property
    def envelope(self) -> EnvelopeStats:
        """Component-wise maximum over replicates, comparator included"""
        self.require(1, "envelope")
        return EnvelopeStats.merge(self.envelopes).with_comparator(self.theta_true)

    def mean_regret_curve(self) -> np.ndarray:
        self.require(1, "regret curve")
        return self.cumulative_regret / self.count

    def mean_error_curve(self) -> np.ndarray:
        self.require(1, "error curve")
        return self.squared_errors / self.count


def accumulate(traces: Iterable[LearnerTrace], theta_true: Vector, epsilon: float = 0.5) -> MonteCarloAccumulator:
    traces = list(traces)
    if not traces:
        raise InsufficientDataError("no replicates to aggregate")
    first = traces[0]
    acc = MonteCarloAccumulator(first.n, first.d, theta_true, epsilon, first.p1)
    for trace in traces:
        acc.add(trace)
    return acc


def estimates_from_accumulator(acc: MonteCarloAccumulator) -> AssumptionEstimates:
    """Empirical m1 and M2 with the analytic iid envelopes alongside"""
    acc.require(MIN_REPLICATES, "assumption_estimates")
    t = np.arange(1, acc.n + 1, dtype=np.float64)

    mean_products = acc.precision_products / acc.count
    transposed = np.swapaxes(mean_products, 1, 2)
    symmetric = 0.5 * (mean_products + transposed)
    lambda_curve = np.linalg.eigvalsh(symmetric)[:, 0]
    m1_curve = t * lambda_curve
    M2_curve = t ** 2 * (acc.squared_steps / acc.count)

    norms = np.linalg.norm(mean_products, axis=(1, 2))
    asymmetry = np.linalg.norm(mean_products - transposed, axis=(1, 2))
    asymmetry_ratio = float(np.max(np.divide(asymmetry, norms, out=np.zeros_like(norms), where=norms > 0)))

    lambda_features = float(np.linalg.eigvalsh(acc.feature_moment / (acc.count * acc.n))[0])
    envelope = acc.envelope
    grid = sample_steps(acc.n)
    lower, upper = prop4_curves(grid, lambda_features, envelope.d_x, envelope.d_margin, acc.d)

    estimates = AssumptionEstimates(
        m1_hat=float(np.min(m1_curve)),
        M2_hat=float(np.max(M2_curve)),
        lambda_min_features=lambda_features,
        prop4_lower=float(lower[-1]),
        prop4_upper=float(upper[-1]),
        asymmetry_ratio=asymmetry_ratio,
        t_grid=grid,
        m1_curve=[float(m1_curve[s - 1]) for s in grid],
        M2_curve=[float(M2_curve[s - 1]) for s in grid],
        prop4_upper_curve=[float(u) for u in upper],
    )
    logger.info(
        f"Curvature estimates over {acc.count} replicates: m1_hat={estimates.m1_hat:.4g}, "
        f"M2_hat={estimates.M2_hat:.4g}, lambda_min(E[XX^T])={lambda_features:.4g}"
    )
    return estimates


def assumption_estimates(traces: List[LearnerTrace], theta_true: Vector) -> AssumptionEstimates:
    """m1_hat = min_t t lambda_min(sym mean P_{t+1} X_t X_t^T), M2_hat = max_t t^2 mean X_t^T P_{t+1}^2 X_t"""
    if len(traces) < MIN_REPLICATES:
        raise InsufficientDataError(f"assumption_estimates needs at least {MIN_REPLICATES} replicates, got {len(traces)}")
    return estimates_from_accumulator(accumulate(traces, theta_true))


def assumptions_check(estimates: AssumptionEstimates, learner: Optional[str] = None) -> BoundReport:
    """Both curvature constants must be positive and finite"""
    rhs = estimates.m1_hat if math.isfinite(estimates.M2_hat) else -math.inf
    return BoundReport.evaluate(
        "assumptions", 0.0, rhs, kind="statistical", learner=learner,
        note=(
            f"m1_hat={estimates.m1_hat:.4g} (iid floor {estimates.prop4_lower:.4g}), "
            f"M2_hat={estimates.M2_hat:.4g} (iid ceiling {estimates.prop4_upper:.4g})"
        ),
    )


def decay_from_accumulator(acc: MonteCarloAccumulator, learner: Optional[str] = None) -> BoundReport:
    acc.require(MIN_DECAY_REPLICATES, "error_decay_check")
    curve = acc.mean_error_curve()
    early = max(1, int(round(acc.n / 10)))
    lhs = acc.n * float(curve[-1])
    rhs = DECAY_FACTOR_LIMIT * early * float(curve[early - 1])
    details = [
        {"step": float(t), "scaled_error": float(t * curve[t - 1])}
        for t in sample_steps(acc.n)
    ]
    return BoundReport.evaluate(
        "decay", lhs, rhs, kind="statistical", learner=learner,
        note=f"t * mean |theta_t - theta_true|^2 at t={acc.n} versus {DECAY_FACTOR_LIMIT:g}x its value at t={early}",
        step_details=details,
    )


def error_decay_check(traces: List[LearnerTrace], theta_true: Vector) -> BoundReport:
    """Mean squared error decays at least like 1/t, up to a factor 2, between t = n/10 and t = n"""
    if len(traces) < MIN_DECAY_REPLICATES:
        raise InsufficientDataError(f"error_decay_check needs at least {MIN_DECAY_REPLICATES} replicates, got {len(traces)}")
    return decay_from_accumulator(accumulate(traces, theta_true), traces[0].learner)


def growth_from_accumulator(acc: MonteCarloAccumulator, learner: Optional[str] = None) -> BoundReport:
    acc.require(MIN_REPLICATES, "expected_regret_growth")
    curve = acc.mean_regret_curve()
    early = max(1, int(round(math.sqrt(acc.n))))
    late_value, early_value = float(curve[-1]), float(curve[early - 1])
    if early_value > 0:
        ratio = late_value / early_value
    else:
        ratio = 0.0 if late_value <= 0 else math.inf
    return BoundReport.evaluate(
        "expected_regret", ratio, GROWTH_RATIO_LIMIT, kind="statistical", learner=learner,
        note=f"R({acc.n})={late_value:.6g}, R({early})={early_value:.6g}, logarithmic target 2",
    )


def expected_regret_growth(traces: List[LearnerTrace], theta_true: Vector) -> BoundReport:
    """R(n) / R(round(sqrt n)) <= 2.5 for the replicate-mean cumulative expected regret"""
    if len(traces) < MIN_REPLICATES:
        raise InsufficientDataError(f"expected_regret_growth needs at least {MIN_REPLICATES} replicates, got {len(traces)}")
    return growth_from_accumulator(accumulate(traces, theta_true), traces[0].learner)


def increment_steps(n: int) -> List[int]:
    """round(n^(1/2)), round(n^(3/4)) and n: two segments of equal length in log t"""
    return [max(1, int(round(n ** 0.5))), max(1, int(round(n ** 0.75))), n]


def increments_from_accumulator(acc: MonteCarloAccumulator, learner: Optional[str] = None) -> BoundReport:
    acc.require(MIN_REPLICATES, "regret_increments")
    curve = acc.mean_regret_curve()
    early, middle, late = increment_steps(acc.n)
    r_early, r_middle, r_late = (float(curve[t - 1]) for t in (early, middle, late))
    first, second = r_middle - r_early, r_late - r_middle
    if first > 0:
        ratio = second / first
    else:
        ratio = 0.0 if second <= 0 else math.inf
    literal = r_late / r_early if r_early > 0 else math.inf
    return BoundReport.evaluate(
        "regret_increments", ratio, GROWTH_RATIO_LIMIT, kind="statistical", learner=learner,
        note=(
            f"R({early})={r_early:.6g}, R({middle})={r_middle:.6g}, R({late})={r_late:.6g}; "
            f"logarithmic target 1, R({late})/R({early})={literal:.4g}"
        ),
    )


def expected_regret_increments(traces: List[LearnerTrace], theta_true: Vector) -> BoundReport:
    """
    Ratio of the mean expected-regret increments over [n^(3/4), n] and [n^(1/2), n^(3/4)]

    Logarithmic growth gives 1 and sqrt(t) growth gives n^(1/8); the limit is the growth limit 2.5.
    Unlike R(n)/R(sqrt n) it does not depend on how far the curve is from its asymptote at sqrt(n).
    """
    if len(traces) < MIN_REPLICATES:
        raise InsufficientDataError(f"regret_increments needs at least {MIN_REPLICATES} replicates, got {len(traces)}")
    return increments_from_accumulator(accumulate(traces, theta_true), traces[0].learner)


def theorem3_rate_check(reports: List[BoundReport], delta: float, learner: Optional[str] = None) -> BoundReport:
    """Fraction of replicates violating the high-probability bound, against delta + 0.03"""
    if not reports:
        raise InsufficientDataError("theorem3_rate_check needs at least one replicate report")
    violations = sum(1 for report in reports if not report.satisfied)
    fraction = violations / len(reports)
    return BoundReport.evaluate(
        "theorem3", fraction, delta + RATE_SLACK, kind="statistical", learner=learner,
        note=f"{violations} of {len(reports)} replicates violated at delta={delta:g}",
    )


def theorem2_from_accumulator(acc: MonteCarloAccumulator, estimates: AssumptionEstimates,
                              learner: Optional[str] = None) -> BoundReport:
    acc.require(MIN_REPLICATES, "theorem2_check")
    lhs = float(acc.mean_regret_curve()[-1])
    try:
        rhs, constants = theorem2_bound(acc.n, acc.d, acc.p1, acc.envelope, acc.theta_true,
                                        estimates.m1_hat, estimates.M2_hat)
        note = f"a={constants.a:.4g}, k={constants.k}, b_k={constants.b_k:.4g}"
    except InfeasibleConstantError as e:
        rhs, note = math.inf, f"bound uninformative: {e}"
    return BoundReport.evaluate("theorem2", lhs, rhs, kind="statistical", learner=learner, note=note)


def theorem2_check(traces: List[LearnerTrace], theta_true: Vector, estimates: AssumptionEstimates) -> BoundReport:
    """Mean cumulative expected regret against the bound evaluated at the estimated constants"""
    return theorem2_from_accumulator(accumulate(traces, theta_true), estimates, traces[0].learner)


def theorem4_from_accumulator(acc: MonteCarloAccumulator, estimates: AssumptionEstimates,
                              learner: Optional[str] = None) -> BoundReport:
    acc.require(MIN_REPLICATES, "theorem4_check")
    lhs = float(np.mean(acc.non_localized))
    env = acc.envelope
    constants = theorem2_constants(env.d_x, env.d_theta, env.d_margin, acc.p1, estimates.m1_hat, estimates.M2_hat)
    try:
        rhs = theorem4_from_constants(acc.epsilon, constants, acc.n)
        note = f"a={constants.a:.4g}, k={constants.k}"
    except InfeasibleConstantError as e:
        rhs, note = math.inf, f"bound uninformative: {e}"
    return BoundReport.evaluate("theorem4", lhs, rhs, kind="statistical", learner=learner, note=note)


def theorem4_check(traces: List[LearnerTrace], theta_true: Vector, epsilon: float,
                   estimates: AssumptionEstimates) -> BoundReport:
    """Mean number of non-localized steps against its logarithmic bound"""
    return theorem4_from_accumulator(accumulate(traces, theta_true, epsilon), estimates, traces[0].learner)
