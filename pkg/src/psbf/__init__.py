"""Belief filtering for dynamic Bayesian networks that skips factors of passive clusters."""

from .clustering import Clustering, auto_cluster, check_a1, check_a2, marginalize
from .dbn import (
    CPT,
    ActionDBN,
    Node,
    Process,
    VariableSpec,
    observation_prob,
    sample_observation,
    sample_transition,
    transition_prob,
    validate_dbn,
)
from .filtering import (
    FactoredBelief,
    JointBelief,
    ParticleSet,
    StepStats,
    bk_step,
    exact_step,
    pf_step,
    psbf_step,
    relative_entropy,
)
from .passivity import PassivityReport, PassivityVerdict, cluster_skippable, detect_all, detect_passive

__version__ = "0.1.0"
