"""
Online Learners
"""
from typing import Dict, Optional, Type

from core.data_models import LearnerKind, LearnerSpec
from learners.base import History, LearnerState, OnlineLearner, learner_predict
from learners.baselines import OgdLearner, OnsLearner, ogd_step, ons_step
from learners.ekf_learner import EkfLearner, ekf_step
from learners.ftl_oracle import FtlLearner, ftl_fit, ftl_newton_path
from learners.sos_learner import SosLearner, sos_step

LEARNER_REGISTRY: Dict[LearnerKind, Type[OnlineLearner]] = {
    LearnerKind.EKF: EkfLearner,
    LearnerKind.SOS: SosLearner,
    LearnerKind.FTL: FtlLearner,
    LearnerKind.OGD: OgdLearner,
    LearnerKind.ONS: OnsLearner,
}


def make_learner(spec: LearnerSpec, d: int, verify: Optional[bool] = None) -> OnlineLearner:
    """Instantiate the learner a spec describes"""
    return LEARNER_REGISTRY[spec.kind](spec, d, verify)


__all__ = [
    "History", "LearnerState", "OnlineLearner", "learner_predict", "make_learner",
    "EkfLearner", "SosLearner", "FtlLearner", "OgdLearner", "OnsLearner",
    "ekf_step", "sos_step", "ftl_fit", "ftl_newton_path", "ogd_step", "ons_step",
]
