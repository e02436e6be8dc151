"""
Learner Traces
Runs a learner over a stream and records every per-step quantity the bound checks consume
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger
from scipy.special import expit

from core.data_gen import Stream
from core.data_models import EnvelopeStats, LearnerKind
from core.loss_model import loss_from_margin, weight_from_margin
from learners.base import LearnerState, OnlineLearner

# Size of the iterate blocks scanned by cross_margin
CROSS_BLOCK = 512
SABOTAGE_SHIFT = 0.1


@dataclass
class LearnerTrace:
    """Per-step record of one learner on one stream; arrays are indexed from step 1 at row 0"""
    learner: str
    kind: LearnerKind
    p1: float
    stream: Stream
    thetas: np.ndarray       # (n + 1, d): theta_1 .. theta_{n+1}
    margins: np.ndarray      # theta_t^T X_t
    losses: np.ndarray       # l_t(theta_t)
    gradients: np.ndarray    # (n, d) grad l_t(theta_t)
    quad: np.ndarray         # X_t^T P_{t+1} X_t
    px: np.ndarray           # (n, d) P_{t+1} X_t
    weights: np.ndarray      # sigma(m)(1 - sigma(m)) at theta_t
    final_state: LearnerState
    envelope: EnvelopeStats
    sabotage_step: Optional[int] = None

    @property
    def n(self) -> int:
        return int(self.margins.shape[0])

    @property
    def d(self) -> int:
        return int(self.thetas.shape[1])

    @property
    def features(self) -> np.ndarray:
        return self.stream.features[: self.n]

    @property
    def labels(self) -> np.ndarray:
        return self.stream.labels[: self.n]

    @property
    def iterates(self) -> np.ndarray:
        """theta_1 .. theta_n, the parameters that were played"""
        return self.thetas[:-1]

    @property
    def residual_sq(self) -> np.ndarray:
        """1 / (1 + e^{y_t theta_t^T X_t})^2"""
        return expit(-self.labels * self.margins) ** 2

    @property
    def cumulative_loss(self) -> float:
        return float(np.sum(self.losses))


def cross_margin(trace: LearnerTrace) -> float:
    """
    max |theta_j^T X_s| over s <= min(j, n), j = 1..n+1

    Covers every pair an adversarial proof touches when it re-weights past features at a later iterate.
    """
    features = trace.features
    n = trace.n
    if n == 0:
        return 0.0
    best = 0.0
    for start in range(0, n + 1, CROSS_BLOCK):
        block = trace.thetas[start:start + CROSS_BLOCK]          # iterates j = start+1 .. start+len
        margins = np.abs(features @ block.T)                      # (n, block)
        s_index = np.arange(n)[:, None]
        j_index = np.arange(start, start + block.shape[0])[None, :]
        margins[s_index > j_index] = 0.0
        best = max(best, float(margins.max()))
    return best


def compute_envelope(trace: LearnerTrace, with_cross_margin: bool = False) -> EnvelopeStats:
    """Realized D_X, D_theta and D from the recorded arrays"""
    d_x = float(np.max(np.linalg.norm(trace.features, axis=1))) if trace.n else 0.0
    d_theta = float(np.max(np.linalg.norm(trace.thetas, axis=1)))
    d_margin = float(np.max(np.abs(trace.margins))) if trace.n else 0.0
    return EnvelopeStats(
        d_x=d_x,
        d_theta=d_theta,
        d_margin=d_margin,
        d_margin_cross=cross_margin(trace) if with_cross_margin else None,
    )


def sabotage_step_for(n: int) -> int:
    return max(1, n // 2)


def run_learner(
    learner: OnlineLearner,
    stream: Stream,
    sabotage: bool = False,
    with_cross_margin: Optional[bool] = None,
) -> LearnerTrace:
    """
    Play the learner over every observation of the stream

    Args:
        learner: A freshly initialized learner
        stream: Observations 1..n
        sabotage: Shift theta_{t*+1} by 0.1 along X_{t*} at t* = n // 2 (negative control)
        with_cross_margin: Measure the cross-pair margin D_cross (defaults to True for SOS)

    Returns:
        The complete trace with its envelope
    """
    n, d = stream.n, stream.d
    if with_cross_margin is None:
        with_cross_margin = learner.spec.kind == LearnerKind.SOS
    target = sabotage_step_for(n) if sabotage else None

    thetas = np.empty((n + 1, d))
    margins = np.empty(n)
    quad = np.empty(n)
    px = np.empty((n, d))
    thetas[0] = learner.theta

    for t, obs in enumerate(stream.observations, start=1):
        margins[t - 1] = float(learner.theta @ obs.x)
        state = learner.update(obs)
        p_x = state.p_matrix @ obs.x
        px[t - 1] = p_x
        quad[t - 1] = float(obs.x @ p_x)

        if t == target:
            norm = float(np.linalg.norm(obs.x))
            direction = obs.x / norm if norm > 0 else np.eye(d)[0]
            state.theta = state.theta + SABOTAGE_SHIFT * direction
            logger.warning(f"{learner.learner_name}: sabotaged update at step {t}")
        thetas[t] = state.theta

    features = stream.features
    labels = stream.labels
    signed = labels * margins
    gradients = -(labels * expit(-signed))[:, None] * features

    trace = LearnerTrace(
        learner=learner.name,
        kind=learner.spec.kind,
        p1=learner.spec.p1,
        stream=stream,
        thetas=thetas,
        margins=margins,
        losses=loss_from_margin(signed),
        gradients=gradients,
        quad=quad,
        px=px,
        weights=weight_from_margin(margins),
        final_state=learner.state,
        envelope=EnvelopeStats(d_x=0.0, d_theta=0.0, d_margin=0.0),
        sabotage_step=target,
    )
    trace.envelope = compute_envelope(trace, with_cross_margin)
    logger.debug(
        f"{learner.learner_name}: n={n} cumulative loss {trace.cumulative_loss:.6g}, "
        f"D_X={trace.envelope.d_x:.4g} D_theta={trace.envelope.d_theta:.4g} D={trace.envelope.d_margin:.4g}"
    )
    return trace
