import numpy as np
import pytest

from core.data_gen import generate_stream
from core.data_models import LearnerKind, LearnerSpec, StreamScheme, StreamSpec
from learners import make_learner
from regret_lab.trace import run_learner

THETA_TRUE_3 = [0.6, -0.5, 0.3]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def wellspecified_spec():
    return StreamSpec(n=300, d=3, scheme=StreamScheme.WELLSPECIFIED, theta_true=THETA_TRUE_3, seed=3)


@pytest.fixture
def wellspecified_stream(wellspecified_spec):
    return generate_stream(wellspecified_spec)


@pytest.fixture
def alternating_stream():
    return generate_stream(StreamSpec(n=120, d=2, scheme=StreamScheme.ALTERNATING))


@pytest.fixture
def theta_true():
    return np.array(THETA_TRUE_3)


def make_trace(kind, stream, p1=1.0, sabotage=False, **extra):
    learner = make_learner(LearnerSpec(kind=kind, p1=p1, **extra), stream.d)
    return run_learner(learner, stream, sabotage=sabotage)


@pytest.fixture
def ekf_trace(wellspecified_stream):
    return make_trace(LearnerKind.EKF, wellspecified_stream)


@pytest.fixture
def sos_trace(wellspecified_stream):
    return make_trace(LearnerKind.SOS, wellspecified_stream)
