import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import expit

from conftest import make_trace
from core.data_gen import generate_stream
from core.data_models import LearnerKind, LearnerSpec, StreamScheme, StreamSpec
from core.exceptions import DimensionMismatchError
from core.loss_model import Observation, weight_from_margin
from learners import History, LearnerState, learner_predict, make_learner
from learners.baselines import make_rate_schedule, ogd_step, ons_step, project_to_ball
from learners.ekf_learner import ekf_precision_from_weights, ekf_step
from learners.ftl_oracle import ftl_fit, ftl_newton_path, regularized_gradient, regularized_hessian
from learners.sos_learner import sos_matrix, sos_step


def three_step_stream(rng, d=3):
    return [Observation(rng.standard_normal(d), int(rng.choice([-1, 1]))) for _ in range(3)]


def test_ekf_first_step_example():
    state = LearnerState.initial(1, p1=1.0)
    nxt = ekf_step(state, Observation(np.array([1.0]), 1))
    assert nxt.p_matrix[0, 0] == pytest.approx(0.8)
    assert nxt.theta[0] == pytest.approx(0.4)
    assert nxt.step == 2


def test_ekf_matches_direct_inversion(rng):
    for _ in range(20):
        p1 = float(rng.uniform(0.5, 2.0))
        state = LearnerState.initial(3, p1)
        thetas, xs = [], []
        for obs in three_step_stream(rng):
            thetas.append(state.theta.copy())
            xs.append(obs.x)
            previous = state
            state = ekf_step(state, obs, verify=True)
            features = np.array(xs)
            weights = weight_from_margin(np.einsum("ij,ij->i", features, np.array(thetas)))
            direct = np.linalg.inv(ekf_precision_from_weights(features, weights, p1))
            assert np.allclose(state.p_matrix, direct, rtol=1e-10, atol=1e-12)
            residual = obs.y * expit(-obs.y * previous.theta @ obs.x)
            assert np.allclose(state.theta, previous.theta + residual * direct @ obs.x, rtol=1e-10, atol=1e-12)


def test_sos_matches_direct_inversion(rng):
    for _ in range(20):
        state = LearnerState.initial(3, 1.0)
        history = History(3)
        for obs in three_step_stream(rng):
            history.append(obs)
            previous = state
            state = sos_step(state, history, obs, verify=True)
            direct = np.linalg.inv(regularized_hessian(history.features, previous.theta, 1.0))
            assert np.allclose(state.p_matrix, direct, rtol=1e-10, atol=1e-12)


def test_sos_recursion_and_batch_agree(rng):
    history = History(4)
    for _ in range(30):
        history.append(Observation(rng.standard_normal(4), int(rng.choice([-1, 1]))))
    theta = rng.standard_normal(4)
    recursion = sos_matrix(history, theta, 0.7, "recursion")
    batch = sos_matrix(history, theta, 0.7, "batch")
    assert np.allclose(recursion, batch, rtol=1e-10, atol=1e-12)


def test_sos_requires_aligned_history():
    state = LearnerState.initial(2)
    with pytest.raises(ValueError):
        sos_step(state, History(2), Observation(np.ones(2), 1))


def test_sos_first_step_equals_ekf_first_step():
    obs = Observation(np.array([0.5, -1.0]), -1)
    history = History(2)
    history.append(obs)
    sos = sos_step(LearnerState.initial(2), history, obs)
    ekf = ekf_step(LearnerState.initial(2), obs)
    assert np.allclose(sos.theta, ekf.theta)
    assert np.allclose(sos.p_matrix, ekf.p_matrix)


def test_sos_matrix_differs_from_ekf_once_theta_moves(rng):
    history = History(2)
    sos, ekf = LearnerState.initial(2), LearnerState.initial(2)
    iterates = []
    for obs in three_step_stream(rng, d=2):
        history.append(obs)
        iterates.append(sos.theta.copy())
        sos = sos_step(sos, history, obs)
        ekf = ekf_step(ekf, obs)
    assert not np.allclose(iterates[1], iterates[2])
    direct = np.linalg.inv(regularized_hessian(history.features, iterates[2], 1.0))
    assert np.allclose(sos.p_matrix, direct, rtol=1e-10, atol=1e-12)
    assert not np.allclose(sos.p_matrix, ekf.p_matrix, rtol=1e-8, atol=1e-12)


def test_sos_approaches_the_leader():
    stream = generate_stream(StreamSpec(n=200, d=2, scheme=StreamScheme.WELLSPECIFIED, theta_true=[1.0, -0.5], seed=1))
    sos = make_trace(LearnerKind.SOS, stream)
    leader = make_trace(LearnerKind.FTL, stream)
    gaps = np.linalg.norm(sos.thetas[:-1] - leader.thetas[:-1], axis=1)
    assert gaps[-50:].mean() <= gaps[:50].mean()


def test_ftl_scalar_root_against_bisection():
    history = History(1)
    history.append(Observation(np.array([1.0]), 1))
    theta = ftl_fit(history, p1=1.0)
    root = brentq(lambda t: t - expit(-t), -5.0, 5.0, xtol=1e-14)
    assert theta[0] == pytest.approx(root, abs=1e-9)
    assert abs(theta[0] - 0.4012) < 1e-3


def test_ftl_path_is_monotone_and_stationary(rng):
    history = History(3)
    for _ in range(40):
        history.append(Observation(rng.standard_normal(3), int(rng.choice([-1, 1]))))
    theta, path = ftl_newton_path(history, 2.0)
    assert all(b <= a * (1 + 1e-15) + 1e-15 for a, b in zip(path, path[1:]))
    grad = regularized_gradient(history.features, history.labels.astype(float), theta, 2.0)
    assert np.linalg.norm(grad) <= 1e-10


def test_ftl_empty_history_is_zero():
    assert np.array_equal(ftl_fit(History(2), 1.0), np.zeros(2))


def test_ogd_first_step_example():
    state = LearnerState.initial(2)
    nxt = ogd_step(state, Observation(np.array([1.0, 0.0]), 1), make_rate_schedule(1.0, "inv_sqrt"))
    assert np.allclose(nxt.theta, [0.5, 0.0])
    assert np.allclose(nxt.p_matrix, np.eye(2))


def test_rate_schedules():
    assert make_rate_schedule(2.0, "constant")(9) == 2.0
    assert make_rate_schedule(2.0, "inv_sqrt")(4) == pytest.approx(1.0)
    assert make_rate_schedule(2.0, "inv")(4) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        make_rate_schedule(1.0, "cosine")


def test_ons_first_step_example():
    nxt = ons_step(LearnerState.initial(1), Observation(np.array([1.0]), 1), gamma=0.5, diameter=10.0)
    assert nxt.theta[0] == pytest.approx(0.8)
    assert nxt.p_matrix[0, 0] == pytest.approx(0.8)


def test_ons_stays_in_ball(rng):
    learner = make_learner(LearnerSpec(kind=LearnerKind.ONS, gamma=0.01, diameter=1.0), 2)
    for _ in range(50):
        learner.update(Observation(5 * rng.standard_normal(2), int(rng.choice([-1, 1]))))
        assert np.linalg.norm(learner.theta) <= 0.5 + 1e-12


def test_project_to_ball_radial_fallback():
    result = project_to_ball(np.array([2.0, 0.0]), np.array([1.0, 0.0]), 1.0)
    assert np.linalg.norm(result) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", list(LearnerKind))
def test_make_learner_and_reset(kind, rng):
    learner = make_learner(LearnerSpec(kind=kind, p1=0.5), 3)
    assert learner.name == kind.value
    for _ in range(5):
        learner.update(Observation(rng.standard_normal(3), int(rng.choice([-1, 1]))))
    assert learner.state.step == 6
    learner.reset()
    assert learner.state.step == 1
    assert np.array_equal(learner.theta, np.zeros(3))


def test_predict_example():
    state = LearnerState(theta=np.array([10.0]), p_matrix=np.eye(1))
    assert learner_predict(state, np.array([1.0])) == pytest.approx(0.9999546, abs=1e-7)
    with pytest.raises(DimensionMismatchError):
        learner_predict(state, np.array([1.0, 2.0]))


def test_ekf_matrix_decreases(rng):
    learner = make_learner(LearnerSpec(kind=LearnerKind.EKF), 3, verify=True)
    previous = learner.state.p_matrix
    for _ in range(20):
        state = learner.update(Observation(rng.standard_normal(3), int(rng.choice([-1, 1]))))
        assert np.min(np.linalg.eigvalsh(previous - state.p_matrix)) >= -1e-10
        previous = state.p_matrix


def test_history_views_are_read_only():
    history = History(2, capacity=1)
    for t in range(5):
        history.append(Observation(np.array([t, 1.0]), 1))
    assert len(history) == 5
    assert history.observation(5).x[0] == 4.0
    with pytest.raises(ValueError):
        history.features[0, 0] = 9.0
