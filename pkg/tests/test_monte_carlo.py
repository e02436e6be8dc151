import math

import numpy as np
import pytest

from conftest import make_trace
from core.data_gen import replicate_stream
from core.data_models import AssumptionEstimates, BoundReport, LearnerKind, LocalizationParams, StreamScheme, StreamSpec
from core.exceptions import InsufficientDataError
from regret_lab.monte_carlo import (
    MonteCarloAccumulator,
    accumulate,
    assumption_estimates,
    assumptions_check,
    decay_from_accumulator,
    error_decay_check,
    estimates_from_accumulator,
    expected_regret_growth,
    expected_regret_increments,
    growth_from_accumulator,
    increment_steps,
    increments_from_accumulator,
    sample_steps,
    theorem2_check,
    theorem2_from_accumulator,
    theorem3_rate_check,
    theorem4_check,
    theorem4_from_accumulator,
)
from regret_lab.regret import expected_excess_losses
from regret_lab.stochastic_checks import theorem3_check


def ekf_replicates(spec, replicates, base_seed=0):
    return [make_trace(LearnerKind.EKF, replicate_stream(spec, base_seed, r)) for r in range(replicates)]


def fake_estimates(m1_hat, M2_hat=1.0):
    return AssumptionEstimates(
        m1_hat=m1_hat, M2_hat=M2_hat, lambda_min_features=0.3, prop4_lower=0.1, prop4_upper=50.0,
        asymmetry_ratio=0.0, t_grid=[1], m1_curve=[m1_hat], M2_curve=[M2_hat], prop4_upper_curve=[50.0],
    )


@pytest.fixture
def small_spec(theta_true):
    return StreamSpec(n=150, d=3, scheme=StreamScheme.WELLSPECIFIED, theta_true=list(theta_true))


@pytest.fixture
def small_traces(small_spec):
    return ekf_replicates(small_spec, 4)


@pytest.mark.parametrize("n, steps", [(10, [1, 2, 4, 8, 10]), (8, [1, 2, 4, 8]), (1, [1])])
def test_sample_steps(n, steps):
    assert sample_steps(n) == steps


def test_accumulator_means_match_direct_averages(small_traces, theta_true):
    acc = accumulate(small_traces, theta_true)
    assert acc.count == 4
    errors = np.mean([np.sum((t.iterates - theta_true) ** 2, axis=1) for t in small_traces], axis=0)
    regret = np.mean([np.cumsum(expected_excess_losses(t, theta_true)) for t in small_traces], axis=0)
    assert np.allclose(acc.mean_error_curve(), errors)
    assert np.allclose(acc.mean_regret_curve(), regret)
    assert acc.envelope.d_theta >= np.linalg.norm(theta_true)


def test_accumulator_rejects_other_shapes(small_traces, theta_true, ekf_trace):
    acc = accumulate(small_traces, theta_true)
    with pytest.raises(ValueError):
        acc.add(ekf_trace)


def test_empty_accumulator_raises(theta_true):
    acc = MonteCarloAccumulator(10, 3, theta_true, 0.5, 1.0)
    with pytest.raises(InsufficientDataError):
        acc.mean_regret_curve()
    with pytest.raises(InsufficientDataError):
        accumulate([], theta_true)


def test_assumption_estimates(small_traces, theta_true):
    estimates = assumption_estimates(small_traces, theta_true)
    assert estimates.t_grid == sample_steps(150)
    assert len(estimates.m1_curve) == len(estimates.t_grid)
    assert estimates.lambda_min_features > 0
    assert math.isfinite(estimates.M2_hat) and estimates.M2_hat > 0
    assert 0 <= estimates.asymmetry_ratio
    with pytest.raises(InsufficientDataError):
        assumption_estimates(small_traces[:1], theta_true)


def test_assumptions_check_sign():
    assert assumptions_check(fake_estimates(0.2)).satisfied
    assert not assumptions_check(fake_estimates(-0.2)).satisfied
    assert not assumptions_check(fake_estimates(0.2, M2_hat=math.inf)).satisfied


def test_decay_needs_fifty_replicates(small_traces, theta_true):
    with pytest.raises(InsufficientDataError):
        error_decay_check(small_traces, theta_true)
    with pytest.raises(InsufficientDataError):
        decay_from_accumulator(accumulate(small_traces, theta_true))


def test_growth_report_structure(small_traces, theta_true):
    report = expected_regret_growth(small_traces, theta_true)
    assert report.name == "expected_regret"
    assert report.kind == "statistical"
    assert report.rhs == 2.5
    with pytest.raises(InsufficientDataError):
        expected_regret_growth(small_traces[:1], theta_true)


def test_increment_steps():
    assert increment_steps(10_000) == [100, 1000, 10_000]
    assert increment_steps(1) == [1, 1, 1]


def curve_accumulator(curve):
    acc = MonteCarloAccumulator(len(curve), 1, [0.0], 0.5, 1.0)
    acc.count = 2
    acc.cumulative_regret = 2.0 * np.asarray(curve, dtype=np.float64)
    return acc


def test_increments_separate_log_from_sqrt_growth():
    t = np.arange(1, 10_001, dtype=np.float64)
    log_report = increments_from_accumulator(curve_accumulator(2.5 * np.log(t) - 9.0))
    assert log_report.satisfied
    assert log_report.lhs == pytest.approx(1.0)
    sqrt_report = increments_from_accumulator(curve_accumulator(np.sqrt(t)))
    assert not sqrt_report.satisfied
    assert sqrt_report.lhs == pytest.approx(10 ** 0.5)
    # the same offset log curve fails the literal ratio
    assert not growth_from_accumulator(curve_accumulator(2.5 * np.log(t) - 9.0)).satisfied


def test_increments_report_structure(small_traces, theta_true):
    report = expected_regret_increments(small_traces, theta_true)
    assert report.name == "regret_increments"
    assert report.kind == "statistical"
    assert report.rhs == 2.5
    assert "R(150)" in report.note
    with pytest.raises(InsufficientDataError):
        expected_regret_increments(small_traces[:1], theta_true)


def make_reports(violations, total):
    return [BoundReport.evaluate("theorem3", 1.0 if i < violations else 0.0, 0.5, kind="diagnostic")
            for i in range(total)]


def test_theorem3_rate_check():
    assert theorem3_rate_check(make_reports(5, 100), 0.05).satisfied
    failed = theorem3_rate_check(make_reports(10, 100), 0.05)
    assert not failed.satisfied
    assert failed.lhs == pytest.approx(0.1)
    assert failed.rhs == pytest.approx(0.08)
    with pytest.raises(InsufficientDataError):
        theorem3_rate_check([], 0.05)


def test_infeasible_constants_give_uninformative_reports(small_traces, theta_true):
    acc = accumulate(small_traces, theta_true)
    for report in (theorem2_from_accumulator(acc, fake_estimates(-1.0)),
                   theorem4_from_accumulator(acc, fake_estimates(-1.0))):
        assert report.rhs == math.inf
        assert report.satisfied
        assert report.note.startswith("bound uninformative")


def test_theorem4_report_counts_non_localized_steps(small_traces, theta_true):
    acc = accumulate(small_traces, theta_true, epsilon=1e9)
    report = theorem4_from_accumulator(acc, fake_estimates(0.5))
    assert report.lhs == 0.0


def test_trace_list_checks_match_accumulator(small_traces, theta_true):
    estimates = fake_estimates(0.5)
    acc = accumulate(small_traces, theta_true)
    assert theorem2_check(small_traces, theta_true, estimates) == theorem2_from_accumulator(acc, estimates, "ekf")
    acc = accumulate(small_traces, theta_true, 0.5)
    assert theorem4_check(small_traces, theta_true, 0.5, estimates) == theorem4_from_accumulator(acc, estimates, "ekf")


# --- acceptance runs ---------------------------------------------------------

def unit_norm_spec(n, d):
    """Uniform sphere features and a unit-norm theta_true along the diagonal"""
    return StreamSpec(n=n, d=d, scheme=StreamScheme.WELLSPECIFIED, theta_true=[1.0 / math.sqrt(d)] * d)


def fold_replicates(spec, replicates, kind=LearnerKind.EKF, base_seed=0, **extra):
    acc = MonteCarloAccumulator(spec.n, spec.d, spec.theta_true, 0.5, 1.0)
    for r in range(replicates):
        acc.add(make_trace(kind, replicate_stream(spec, base_seed, r), **extra))
    return acc


@pytest.fixture(scope="module")
def growth_runs():
    spec = unit_norm_spec(10_000, 5)
    return fold_replicates(spec, 50), fold_replicates(spec, 50, LearnerKind.OGD, schedule="inv_sqrt")


@pytest.fixture(scope="module")
def long_runs():
    return fold_replicates(unit_norm_spec(10_000, 3), 100)


@pytest.mark.slow
def test_expected_regret_increments_are_logarithmic(growth_runs):
    ekf, _ = growth_runs
    report = increments_from_accumulator(ekf, "ekf")
    assert report.satisfied, report.note


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="R(100) is still far below the (d/2) log t asymptote at d=5; see DESIGN.md")
def test_expected_regret_ratio_in_five_dimensions(growth_runs):
    ekf, _ = growth_runs
    assert growth_from_accumulator(ekf, "ekf").satisfied


@pytest.mark.slow
def test_ogd_has_larger_expected_regret_than_ekf(growth_runs):
    ekf, ogd = growth_runs
    assert ogd.mean_regret_curve()[-1] > ekf.mean_regret_curve()[-1]


@pytest.mark.slow
def test_theorem3_violation_rate():
    spec = unit_norm_spec(2000, 3)
    localization = LocalizationParams()
    reports = [
        theorem3_check(trace, np.array(spec.theta_true), localization, replicate=r)
        for r, trace in enumerate(ekf_replicates(spec, 200))
    ]
    assert theorem3_rate_check(reports, localization.delta).satisfied


@pytest.mark.slow
def test_error_decay(long_runs):
    assert decay_from_accumulator(long_runs, "ekf").satisfied


@pytest.mark.slow
def test_non_localized_steps_below_theorem4_bound(long_runs):
    estimates = estimates_from_accumulator(long_runs)
    assert estimates.m1_hat > 0 and math.isfinite(estimates.M2_hat)
    report = theorem4_from_accumulator(long_runs, estimates, "ekf")
    assert report.satisfied, report.note
