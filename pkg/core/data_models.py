"""
Data Models for Streams, Learners, Experiments and Bound Verdicts
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from config.settings import settings

# Deterministic inequalities are accepted up to this relative slack
BOUND_REL_TOL = 1e-9

class StreamScheme(str, Enum):
    """How the observation sequence is produced"""
    WELLSPECIFIED = "wellspecified"
    ALTERNATING = "alternating"
    FIXED_REPLAY = "fixed_replay"
    CSV = "csv"

class FeatureLaw(str, Enum):
    """Law of the feature vectors X_t"""
    UNIFORM_SPHERE = "uniform_sphere"  # radius
    UNIFORM_CUBE = "uniform_cube"      # half-width
    FIXED_LIST = "fixed_list"          # cycles through fixed_features

class LearnerKind(str, Enum):
    """Online learners available to experiments"""
    EKF = "ekf"
    SOS = "sos"
    FTL = "ftl"
    OGD = "ogd"
    ONS = "ons"

class CheckName(str, Enum):
    """Identifiers of the statements the lab can verify"""
    THEOREM1 = "theorem1"
    PROP2 = "prop2"
    LEMMA1 = "lemma1"
    UPDATE_IDENTITY = "update_identity"
    PROP3 = "prop3"
    QUADRATIC_VARIATION = "quadratic_variation"
    COROLLARY1 = "corollary1"
    LEMMA2 = "lemma2"
    BOUNDCARDINAL = "boundcardinal"
    EKF_CONSISTENCY = "ekf_consistency"
    THEOREM3 = "theorem3"
    THEOREM2 = "theorem2"
    THEOREM4 = "theorem4"
    ASSUMPTIONS = "assumptions"
    DECAY = "decay"
    EXPECTED_REGRET = "expected_regret"
    REGRET_INCREMENTS = "regret_increments"

# Checks that need a known theta_true
WELLSPECIFIED_CHECKS = {
    CheckName.PROP3, CheckName.QUADRATIC_VARIATION, CheckName.COROLLARY1, CheckName.LEMMA2,
    CheckName.BOUNDCARDINAL, CheckName.THEOREM3, CheckName.THEOREM2, CheckName.THEOREM4,
    CheckName.ASSUMPTIONS, CheckName.DECAY, CheckName.EXPECTED_REGRET, CheckName.REGRET_INCREMENTS,
}
# Checks stated for the semi-online step only
SOS_CHECKS = {CheckName.THEOREM1, CheckName.PROP2, CheckName.LEMMA1}
# Checks stated for the Kalman recursion only
EKF_CHECKS = {
    CheckName.LEMMA2, CheckName.BOUNDCARDINAL, CheckName.EKF_CONSISTENCY, CheckName.THEOREM3,
    CheckName.THEOREM2, CheckName.THEOREM4, CheckName.ASSUMPTIONS, CheckName.DECAY,
    CheckName.EXPECTED_REGRET, CheckName.REGRET_INCREMENTS,
}
# Checks aggregating over replicates rather than judging one trace
MONTE_CARLO_CHECKS = {
    CheckName.THEOREM3, CheckName.THEOREM2, CheckName.THEOREM4, CheckName.ASSUMPTIONS,
    CheckName.DECAY, CheckName.EXPECTED_REGRET, CheckName.REGRET_INCREMENTS,
}

class StreamSpec(BaseModel):
    """Recipe for a reproducible observation stream"""
    n: int = Field(ge=1)
    d: int = Field(ge=1)
    scheme: StreamScheme = StreamScheme.WELLSPECIFIED
    theta_true: Optional[List[float]] = None
    feature_law: FeatureLaw = FeatureLaw.UNIFORM_SPHERE
    radius: float = Field(default=1.0, gt=0)
    fixed_features: Optional[List[List[float]]] = None
    fixed_labels: Optional[List[int]] = None
    csv_path: Optional[str] = None
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_consistency(self) -> "StreamSpec":
        wellspecified = self.scheme == StreamScheme.WELLSPECIFIED
        if wellspecified and self.theta_true is None:
            raise ValueError("theta_true is required for the wellspecified scheme")
        if not wellspecified and self.theta_true is not None:
            raise ValueError(f"theta_true is only meaningful for the wellspecified scheme, not {self.scheme.value}")
        if self.theta_true is not None and len(self.theta_true) != self.d:
            raise ValueError(f"theta_true has length {len(self.theta_true)}, expected d={self.d}")

        needs_features = (
            self.scheme == StreamScheme.FIXED_REPLAY
            or (wellspecified and self.feature_law == FeatureLaw.FIXED_LIST)
        )
        if needs_features:
            if not self.fixed_features:
                raise ValueError("fixed_features must be a non-empty list for this scheme")
            if any(len(row) != self.d for row in self.fixed_features):
                raise ValueError(f"every fixed feature must have length d={self.d}")
        if self.scheme == StreamScheme.FIXED_REPLAY:
            if not self.fixed_labels or len(self.fixed_labels) != len(self.fixed_features):
                raise ValueError("fixed_labels must match fixed_features one-to-one")
            if any(label not in (-1, 1) for label in self.fixed_labels):
                raise ValueError("fixed_labels must be -1 or +1")
        if self.scheme == StreamScheme.CSV and not self.csv_path:
            raise ValueError("csv_path is required for the csv scheme")
        return self

    def theta_true_array(self) -> Optional[np.ndarray]:
        if self.theta_true is None:
            return None
        return np.asarray(self.theta_true, dtype=np.float64)

    @property
    def radius_bound(self) -> float:
        """Almost-sure bound on ||X_t|| implied by the feature law"""
        if self.scheme == StreamScheme.FIXED_REPLAY or self.feature_law == FeatureLaw.FIXED_LIST:
            if self.fixed_features:
                return float(max(np.linalg.norm(row) for row in self.fixed_features))
        if self.feature_law == FeatureLaw.UNIFORM_CUBE and self.scheme == StreamScheme.WELLSPECIFIED:
            return float(self.radius * np.sqrt(self.d))
        return float(self.radius)

class LearnerSpec(BaseModel):
    """One learner entry of an experiment"""
    kind: LearnerKind
    p1: float = Field(default=1.0, gt=0)
    label: Optional[str] = None
    # first-order baseline
    rate: float = Field(default=1.0, gt=0)
    schedule: Literal["constant", "inv_sqrt", "inv"] = "inv_sqrt"
    # online Newton step baseline
    gamma: float = Field(default=0.5, gt=0)
    diameter: float = Field(default=10.0, gt=0)
    # semi-online step
    sos_inner: Literal["recursion", "batch"] = "recursion"

    @property
    def name(self) -> str:
        return self.label or self.kind.value

class LocalizationParams(BaseModel):
    """Thresholds of the localized analysis"""
    epsilon: float = Field(default=0.5, gt=0)
    alpha: float = Field(default=0.05, gt=0)
    delta: float = Field(default=0.05, gt=0, lt=1)

class OutputSpec(BaseModel):
    """Where and how results are written"""
    dir: Optional[Path] = None
    formats: List[Literal["csv", "json"]] = ["csv", "json"]
    full_trace: bool = False

    def resolved_dir(self) -> Path:
        return Path(self.dir) if self.dir is not None else settings.output_dir

class ExperimentConfig(BaseModel):
    """Complete, serializable description of one experiment"""
    stream: StreamSpec
    learners: List[LearnerSpec] = Field(min_length=1)
    replicates: int = Field(default=1, ge=1)
    checks: List[CheckName] = []
    localization: LocalizationParams = LocalizationParams()
    output: OutputSpec = OutputSpec()
    base_seed: int = Field(default=0, ge=0, lt=2**64)
    jobs: Optional[int] = Field(default=None, ge=1)
    allow_slow: bool = False
    sabotage: bool = False

    @model_validator(mode="after")
    def _check_experiment(self) -> "ExperimentConfig":
        names = [spec.name for spec in self.learners]
        if len(set(names)) != len(names):
            raise ValueError(f"learner names must be unique, got {names}")

        kinds = {spec.kind for spec in self.learners}
        checks = set(self.checks)
        needs_truth = checks & WELLSPECIFIED_CHECKS
        if needs_truth and self.stream.scheme != StreamScheme.WELLSPECIFIED:
            listed = ", ".join(sorted(c.value for c in needs_truth))
            raise ValueError(f"checks [{listed}] require a wellspecified stream with theta_true")
        if checks & SOS_CHECKS and LearnerKind.SOS not in kinds:
            raise ValueError("theorem1/prop2/lemma1 checks require an sos learner")
        if checks & EKF_CHECKS and LearnerKind.EKF not in kinds:
            raise ValueError("localized and Monte Carlo checks require an ekf learner")

        if not self.allow_slow:
            quadratic_kinds = {LearnerKind.SOS, LearnerKind.FTL}
            if kinds & quadratic_kinds and self.stream.n > settings.sos_max_steps:
                raise ValueError(
                    f"sos/ftl learners are capped at n <= {settings.sos_max_steps}; pass --allow-slow to override"
                )
            if CheckName.LEMMA1 in checks and self.stream.n > settings.lemma1_max_steps:
                raise ValueError(
                    f"lemma1 is capped at n <= {settings.lemma1_max_steps}; pass --allow-slow to override"
                )
        return self

class EnvelopeStats(BaseModel):
    """Realized envelope constants of a run"""
    d_x: float = Field(ge=0)
    d_theta: float = Field(ge=0)
    d_margin: float = Field(ge=0)
    # reported only; every bound evaluates D as d_margin
    d_margin_cross: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_cauchy_schwarz(self) -> "EnvelopeStats":
        bound = self.d_x * self.d_theta
        if self.d_margin > bound + 1e-12 * (1.0 + bound):
            raise ValueError(f"d_margin {self.d_margin} exceeds d_x * d_theta = {bound}")
        return self

    def with_comparator(self, theta: Optional[np.ndarray]) -> "EnvelopeStats":
        """Enlarge D_theta so that it also covers a comparator"""
        if theta is None:
            return self
        return self.model_copy(update={"d_theta": max(self.d_theta, float(np.linalg.norm(theta)))})

    @classmethod
    def merge(cls, envelopes: List["EnvelopeStats"]) -> "EnvelopeStats":
        """Component-wise maximum over replicates"""
        crosses = [e.d_margin_cross for e in envelopes if e.d_margin_cross is not None]
        return cls(
            d_x=max(e.d_x for e in envelopes),
            d_theta=max(e.d_theta for e in envelopes),
            d_margin=max(e.d_margin for e in envelopes),
            d_margin_cross=max(crosses) if crosses else None,
        )

class BoundReport(BaseModel):
    """Uniform verdict record for one checked statement"""
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    slack: float
    # diagnostic reports are informational and never decide the verdict of a verify run
    kind: Literal["deterministic", "statistical", "diagnostic"] = "deterministic"
    learner: Optional[str] = None
    replicate: Optional[int] = None
    note: Optional[str] = None
    step_details: Optional[List[Dict[str, float]]] = None

    @classmethod
    def evaluate(cls, name: str, lhs: float, rhs: float, **kwargs: Any) -> "BoundReport":
        """Build a report, judging lhs <= rhs up to the shared relative tolerance"""
        lhs = float(lhs)
        rhs = float(rhs)
        satisfied = bool(lhs <= rhs + BOUND_REL_TOL * (1.0 + abs(rhs)))
        return cls(name=name, lhs=lhs, rhs=rhs, satisfied=satisfied, slack=rhs - lhs, **kwargs)

    def failing_steps(self) -> List[Dict[str, float]]:
        return [row for row in (self.step_details or []) if not row.get("satisfied", 1.0)]

class BoundConstants(BaseModel):
    """Constants shared by the expectation bounds on the Kalman recursion"""
    a: float
    k: Optional[int] = None
    log_b_k: Optional[float] = None
    b_k: Optional[float] = None
    log_scaled_b_k: Optional[float] = None  # log(D_X^{2k} b_k)
    per_step_constant: float
    feasible: bool

class AssumptionEstimates(BaseModel):
    """Empirical curvature constants and their analytic iid envelopes"""
    m1_hat: float
    M2_hat: float
    lambda_min_features: float
    prop4_lower: float
    prop4_upper: float
    asymmetry_ratio: float
    t_grid: List[int]
    m1_curve: List[float]
    M2_curve: List[float]
    prop4_upper_curve: List[float]
