from .belief import (
    DegenerateModelError,
    FactoredBelief,
    ImpossibleObservationError,
    JointBelief,
    ParticleSet,
    StepStats,
)
from .exact import exact_step
from .factored import bk_step, factor_observe, factor_transition, psbf_step
from .metrics import relative_entropy
from .particle import pf_step, systematic_resample

__all__ = [
    "DegenerateModelError", "FactoredBelief", "ImpossibleObservationError", "JointBelief",
    "ParticleSet", "StepStats", "bk_step", "exact_step", "factor_observe", "factor_transition",
    "pf_step", "psbf_step", "relative_entropy", "systematic_resample",
]
