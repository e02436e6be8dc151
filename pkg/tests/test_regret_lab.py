import math

import numpy as np
import pytest

from conftest import make_trace
from core.data_gen import generate_stream
from core.data_models import BoundReport, EnvelopeStats, LearnerKind, StreamScheme, StreamSpec
from core.exceptions import ConfigError, InfeasibleConstantError
from learners.ftl_oracle import ftl_fit_arrays
from regret_lab.adversarial_checks import (
    ekf_consistency_check,
    lemma1_check,
    prop2_check,
    stepwise_report,
    theorem1_check,
    update_identity_check,
)
from regret_lab.regret import (
    expected_regret,
    linearized_regret_expected,
    lemma1_coefficient,
    localization_multiplier,
    localized_set,
    prop2_rhs,
    prop4_curves,
    regret_curve,
    regret_vs_comparator,
    select_k,
    theorem1_rhs,
    theorem2_bound,
    theorem2_constants,
    theorem4_bound,
)
from regret_lab.trace import compute_envelope, cross_margin, sabotage_step_for


def test_trace_shapes(sos_trace):
    assert sos_trace.thetas.shape == (301, 3)
    assert sos_trace.margins.shape == (300,)
    assert np.array_equal(sos_trace.thetas[0], np.zeros(3))
    assert sos_trace.envelope.d_margin_cross is not None


def test_cross_margin_dominates_diagonal(sos_trace):
    assert cross_margin(sos_trace) >= sos_trace.envelope.d_margin
    assert cross_margin(sos_trace) <= sos_trace.envelope.d_x * sos_trace.envelope.d_theta * (1 + 1e-12)


def test_envelope_rejects_cauchy_schwarz_violation():
    with pytest.raises(ValueError):
        EnvelopeStats(d_x=1.0, d_theta=1.0, d_margin=2.0)


def test_regret_against_itself_on_constant_play(alternating_stream):
    trace = make_trace(LearnerKind.EKF, alternating_stream)
    curve = regret_curve(trace, np.zeros(2))
    assert curve[-1] == pytest.approx(regret_vs_comparator(trace, np.zeros(2)))
    assert curve.shape == (trace.n,)


def test_theorem1_rhs_single_step():
    envelope = EnvelopeStats(d_x=2.0, d_theta=3.0, d_margin=1.0)
    assert theorem1_rhs(1, 2, 1.0, envelope, np.zeros(2), np.zeros(2)) == pytest.approx(6.0)


@pytest.mark.parametrize("scheme", [StreamScheme.WELLSPECIFIED, StreamScheme.ALTERNATING])
@pytest.mark.parametrize("d", [1, 3])
def test_theorem1_holds_for_sos(scheme, d):
    theta_true = [0.5] * d if scheme == StreamScheme.WELLSPECIFIED else None
    stream = generate_stream(StreamSpec(n=200, d=d, scheme=scheme, theta_true=theta_true, seed=d))
    trace = make_trace(LearnerKind.SOS, stream)
    comparators = {"zero": np.zeros(d), "ftl": ftl_fit_arrays(stream.features, stream.labels, 1.0)}
    if theta_true is not None:
        comparators["theta_true"] = np.array(theta_true)
    reports = theorem1_check(trace, comparators, replicate=0)
    assert len(reports) == len(comparators)
    assert all(report.satisfied for report in reports)


def test_prop2_and_lemma1_hold_for_sos(sos_trace, alternating_stream):
    assert prop2_check(sos_trace).satisfied
    report = lemma1_check(sos_trace)
    assert report.satisfied
    assert len(report.step_details) == sos_trace.n
    alternating = make_trace(LearnerKind.SOS, alternating_stream)
    assert prop2_check(alternating).satisfied
    assert lemma1_check(alternating).satisfied


def test_lemma1_flags_a_perturbed_recursion(wellspecified_stream):
    trace = make_trace(LearnerKind.SOS, wellspecified_stream, sabotage=True)
    report = lemma1_check(trace)
    assert not report.satisfied
    assert any(row["step"] == sabotage_step_for(trace.n) for row in report.failing_steps())


@pytest.mark.parametrize("kind", [LearnerKind.EKF, LearnerKind.SOS, LearnerKind.OGD])
def test_update_identity_holds(kind, wellspecified_stream):
    report = update_identity_check(make_trace(kind, wellspecified_stream))
    assert report is not None and report.satisfied


@pytest.mark.parametrize("kind", [LearnerKind.ONS, LearnerKind.FTL])
def test_update_identity_not_applicable(kind, alternating_stream):
    assert update_identity_check(make_trace(kind, alternating_stream)) is None


@pytest.mark.parametrize("kind", [LearnerKind.EKF, LearnerKind.SOS, LearnerKind.OGD])
def test_sabotage_breaks_update_identity(kind, wellspecified_stream):
    trace = make_trace(kind, wellspecified_stream, sabotage=True)
    report = update_identity_check(trace)
    assert not report.satisfied
    failing = [row["step"] for row in report.failing_steps()]
    assert failing == [float(sabotage_step_for(trace.n))]


def test_ekf_consistency(ekf_trace):
    report = ekf_consistency_check(ekf_trace)
    assert report.satisfied
    assert report.lhs < 1e-8


def test_stepwise_report_folds_steps(ekf_trace):
    report = stepwise_report("demo", np.array([1.0, 2.0, 5.0]), np.array([1.0, 3.0, 4.0]), ekf_trace)
    assert not report.satisfied
    assert [row["step"] for row in report.failing_steps()] == [3.0]
    assert report.lhs == pytest.approx(1.0 / 5.0)


def test_bound_report_tolerance():
    assert BoundReport.evaluate("x", 1.0 + 1e-10, 1.0).satisfied
    assert not BoundReport.evaluate("x", 1.0 + 1e-6, 1.0).satisfied
    assert BoundReport.evaluate("x", 5.0, math.inf).satisfied


def test_localized_set(ekf_trace, theta_true):
    indices, count = localized_set(ekf_trace, theta_true, 0.5)
    assert count == indices.shape[0]
    assert indices.min() >= 1 and indices.max() <= ekf_trace.n
    _, everything = localized_set(ekf_trace, theta_true, 1e9)
    assert everything == ekf_trace.n


def test_expected_and_linearized_regret(ekf_trace, theta_true):
    # the expected excess loss is bounded by its linearization (convexity)
    assert expected_regret(ekf_trace, theta_true) <= linearized_regret_expected(ekf_trace, theta_true) + 1e-12
    assert expected_regret(ekf_trace, theta_true) >= 0


def test_localization_multiplier():
    assert localization_multiplier(0.5, 0.05) == pytest.approx(29.17, abs=0.01)
    with pytest.raises(ConfigError):
        localization_multiplier(0.5, 0.2)


@pytest.mark.parametrize("a, k", [(0.75, 2), (0.3, 4), (1.5, 1), (1.0, None), (2.5, None), (0.0, None)])
def test_select_k(a, k):
    assert select_k(a) == k


def test_theorem2_with_zero_envelopes():
    envelope = EnvelopeStats(d_x=0.0, d_theta=0.0, d_margin=0.0)
    value, constants = theorem2_bound(100, 2, 1.0, envelope, np.zeros(2), m1=1.5, M2=1.0)
    assert constants.a == pytest.approx(0.75)
    assert constants.k == 2
    assert value == pytest.approx(1200.0)


def test_theorem2_infeasible():
    envelope = EnvelopeStats(d_x=1.0, d_theta=1.0, d_margin=0.0)
    with pytest.raises(InfeasibleConstantError):
        theorem2_bound(100, 2, 1.0, envelope, np.zeros(2), m1=5.0, M2=1.0)
    assert not theorem2_constants(1.0, 1.0, 0.0, 1.0, 5.0, 1.0).feasible


def test_theorem2_overflow_stays_finite_or_inf():
    envelope = EnvelopeStats(d_x=10.0, d_theta=50.0, d_margin=0.0)
    value, constants = theorem2_bound(1000, 3, 1.0, envelope, np.zeros(3), m1=0.001, M2=1.0)
    assert constants.feasible
    assert value > 0 and not math.isnan(value)


def test_theorem4_bound():
    assert theorem4_bound(0.5, 2, 0.75, 1.0, 1.0, 1) == pytest.approx(1.0)
    expected = 1.0 + 4.0 * 1.0 / (0.5 ** 4 * 0.5) * math.log(100)
    assert theorem4_bound(0.5, 2, 0.75, 1.0, 1.0, 100) == pytest.approx(expected)
    with pytest.raises(InfeasibleConstantError):
        theorem4_bound(0.5, 1, 0.75, 1.0, 1.0, 100)


def test_compute_envelope_without_cross(ekf_trace):
    envelope = compute_envelope(ekf_trace)
    assert envelope.d_margin_cross is None


def test_sos_bounds_ignore_cross_margin(sos_trace):
    envelope = sos_trace.envelope
    diagonal = envelope.model_copy(update={"d_margin_cross": None})
    widened = envelope.model_copy(update={"d_margin_cross": envelope.d_margin + 3.0})
    n, d, p1 = sos_trace.n, sos_trace.d, sos_trace.p1
    for env in (envelope, widened):
        assert theorem1_rhs(n, d, p1, env, np.zeros(d), np.zeros(d)) == theorem1_rhs(n, d, p1, diagonal, np.zeros(d), np.zeros(d))
        assert prop2_rhs(n, d, p1, env) == prop2_rhs(n, d, p1, diagonal)
        assert lemma1_coefficient(d, env) == lemma1_coefficient(d, diagonal)
    assert prop2_rhs(n, d, p1, diagonal) == pytest.approx((1 + math.exp(envelope.d_margin)) / 2 * d * math.log1p((n - 1) * p1 * envelope.d_x ** 2))


def test_prop4_curves():
    t = [1, 10, 100, 1000]
    lower, upper = prop4_curves(t, 0.3, 1.5, 1.0, 2)
    assert np.allclose(lower, 0.3 / (1 + 1.5 ** 2) ** 2)
    assert np.all(np.diff(upper) < 0)
    assert np.all(upper > lower)
    lower, upper = prop4_curves(t, 0.0, 1.5, 1.0, 2)
    assert np.all(lower == 0) and np.all(np.isinf(upper))


def test_regret_matches_naive_summation(ekf_trace, theta_true):
    total = 0.0
    for t in range(ekf_trace.n):
        x, y = ekf_trace.features[t], ekf_trace.labels[t]
        total += math.log1p(math.exp(-y * float(ekf_trace.thetas[t] @ x)))
        total -= math.log1p(math.exp(-y * float(theta_true @ x)))
    assert regret_vs_comparator(ekf_trace, theta_true) == pytest.approx(total, rel=1e-10, abs=1e-10)


def test_theorem1_rhs_is_monotone_in_n():
    envelope = EnvelopeStats(d_x=1.5, d_theta=2.0, d_margin=1.0)
    theta = np.array([0.5, -0.5])
    values = [theorem1_rhs(n, 2, 0.8, envelope, theta, np.zeros(2)) for n in (1, 2, 5, 10, 100, 1000, 10_000)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_theorem1_rhs_closed_form():
    envelope = EnvelopeStats(d_x=1.0, d_theta=2.0, d_margin=2.0)
    curvature = 1 + math.e ** 2
    expected = (math.sqrt(2) * 1.0 * 2.0 * curvature / 4 + 1) * (curvature / 2) * 2 * math.log(1 + 99) + 2.0
    assert theorem1_rhs(100, 2, 1.0, envelope, np.zeros(2), np.zeros(2)) == pytest.approx(expected, rel=1e-9)


def test_theorem2_bound_closed_form():
    d_x, d_theta, d_margin, p1, m1, M2, n, d = 1.0, 1.5, 1.0, 1.0, 7.0, 2.0, 500, 2
    envelope = EnvelopeStats(d_x=d_x, d_theta=d_theta, d_margin=d_margin)
    theta_true = np.array([1.0, 0.0])
    value, constants = theorem2_bound(n, d, p1, envelope, theta_true, m1=m1, M2=M2)

    curvature = 1 + math.exp(d_margin)
    a = math.exp(-d_margin) * m1 / curvature
    k = 2
    b_k = 5 * M2 / (p1 ** 2 * d_x ** 2) * (4 * d_theta ** 2 + 2 * p1 * d_theta * d_x + p1 ** 2 * d_x ** 2) ** k
    first = 30 * (20 * curvature + curvature / 4 * d * math.log(1 + n * p1 * d_x ** 2) + 1.0 / (2 * p1))
    factor = 62 * d_x * d_theta + 60 * d_x ** 2 * d_theta ** 2 + 15 * d_x ** 2
    expected = first + factor * (1 + 4 ** (k + 1) * d_x ** (2 * k) * b_k / (k * a - 1) * math.log(n))

    assert constants.k == k
    assert constants.a == pytest.approx(a, rel=1e-12)
    assert constants.b_k == pytest.approx(b_k, rel=1e-12)
    assert value == pytest.approx(expected, rel=1e-9)


@pytest.mark.slow
@pytest.mark.parametrize("scheme", [StreamScheme.WELLSPECIFIED, StreamScheme.ALTERNATING])
@pytest.mark.parametrize("d", [1, 3, 5])
def test_sos_adversarial_bounds_over_seeds(scheme, d):
    wellspecified = scheme == StreamScheme.WELLSPECIFIED
    theta_true = [1.0 / math.sqrt(d)] * d if wellspecified else None
    for seed in range(20 if wellspecified else 1):
        stream = generate_stream(StreamSpec(n=1000, d=d, scheme=scheme, theta_true=theta_true, seed=seed))
        trace = make_trace(LearnerKind.SOS, stream, sos_inner="batch")
        comparators = {"zero": np.zeros(d), "ftl": ftl_fit_arrays(stream.features, stream.labels, 1.0)}
        if wellspecified:
            comparators["theta_true"] = np.array(theta_true)
        for report in theorem1_check(trace, comparators, replicate=seed):
            assert report.satisfied, report.note
        assert prop2_check(trace).satisfied
        assert lemma1_check(trace).satisfied
