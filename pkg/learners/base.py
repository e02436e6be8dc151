"""
Learner State and Shared Interface
State containers, observation history and the common online-learner contract
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger

from config.settings import settings
from core.data_models import LearnerSpec
from core.exceptions import DimensionMismatchError, NonSpdError, NumericAbortError
from core.linalg_core import SpdMatrix, Vector, as_vector, is_spd
from core.loss_model import Observation, sigmoid


@dataclass
class LearnerState:
    """Current estimate and its (inverse-precision) matrix before step `step`"""
    theta: Vector
    p_matrix: SpdMatrix
    step: int = 1
    p1: float = 1.0

    @classmethod
    def initial(cls, d: int, p1: float = 1.0, theta: Optional[Vector] = None) -> "LearnerState":
        """theta_1 (zero by default) and P_1 = p1 I"""
        theta = np.zeros(d) if theta is None else as_vector(theta, "theta").copy()
        if theta.shape[0] != d:
            raise DimensionMismatchError(f"initial theta has length {theta.shape[0]}, expected {d}")
        return cls(theta=theta, p_matrix=p1 * np.eye(d), step=1, p1=float(p1))

    @property
    def dim(self) -> int:
        return int(self.theta.shape[0])


class History:
    """Append-only record of observations 1..t"""

    def __init__(self, d: int, capacity: int = 64):
        self._features = np.empty((max(capacity, 1), d))
        self._labels = np.empty(max(capacity, 1), dtype=np.int64)
        self._size = 0

    def append(self, obs: Observation) -> None:
        if obs.dim != self._features.shape[1]:
            raise DimensionMismatchError(f"observation has dimension {obs.dim}, history holds {self._features.shape[1]}")
        if self._size == self._labels.shape[0]:
            self._features = np.concatenate([self._features, np.empty_like(self._features)])
            self._labels = np.concatenate([self._labels, np.empty_like(self._labels)])
        self._features[self._size] = obs.x
        self._labels[self._size] = obs.y
        self._size += 1

    def __len__(self) -> int:
        return self._size

    @property
    def d(self) -> int:
        return int(self._features.shape[1])

    @property
    def features(self) -> np.ndarray:
        """(t, d) read-only view"""
        view = self._features[: self._size]
        view.flags.writeable = False
        return view

    @property
    def labels(self) -> np.ndarray:
        view = self._labels[: self._size]
        view.flags.writeable = False
        return view

    def observation(self, t: int) -> Observation:
        """The t-th observation, 1-indexed"""
        if not 1 <= t <= self._size:
            raise IndexError(f"history has {self._size} observations, asked for {t}")
        return Observation(self._features[t - 1].copy(), int(self._labels[t - 1]))


def learner_predict(state: LearnerState, x: Vector) -> float:
    """Forecast P(y = +1 | x) = sigmoid(theta^T x)"""
    x = as_vector(x)
    if x.shape != state.theta.shape:
        raise DimensionMismatchError(f"feature length {x.shape[0]} != parameter length {state.dim}")
    return float(sigmoid(state.theta @ x))


def label_residual(obs: Observation, theta: Vector) -> float:
    """y / (1 + e^{y theta^T x}), the scalar multiplying x in the natural-gradient step"""
    if obs.dim != theta.shape[0]:
        raise DimensionMismatchError(f"feature length {obs.dim} != parameter length {theta.shape[0]}")
    return obs.y * float(sigmoid(-obs.y * float(theta @ obs.x)))


def guard_state(state: LearnerState, step: int, verify: Optional[bool] = None) -> LearnerState:
    """Abort on non-finite values; in verify mode also require an SPD matrix"""
    if not np.all(np.isfinite(state.theta)):
        raise NumericAbortError("non-finite parameter after update", step)
    if not np.all(np.isfinite(state.p_matrix)):
        raise NumericAbortError("non-finite matrix after update", step)
    verify = settings.verify_spd if verify is None else verify
    if verify and not is_spd(state.p_matrix):
        raise NonSpdError(f"matrix lost positive definiteness at step {step}")
    return state


class OnlineLearner(ABC):
    """predict / update contract shared by every learner"""

    def __init__(self, spec: LearnerSpec, d: int, verify: Optional[bool] = None):
        self.spec = spec
        self.d = d
        self.verify = settings.verify_spd if verify is None else verify
        self.learner_name = f"{type(self).__name__}[{spec.name}]"
        self.state = LearnerState.initial(d, spec.p1)
        logger.debug(f"{self.learner_name} initialized (d={d}, p1={spec.p1})")

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def theta(self) -> Vector:
        return self.state.theta

    def predict(self, x: Vector) -> float:
        return learner_predict(self.state, x)

    @abstractmethod
    def update(self, obs: Observation) -> LearnerState:
        """Consume (X_t, y_t) and move to theta_{t+1}"""

    def reset(self) -> None:
        self.state = LearnerState.initial(self.d, self.spec.p1)
