"""Bootstrap particle filter with systematic resampling."""

from __future__ import annotations

import logging

import numpy as np

from ..dbn import ActionDBN, observation_prob_batch, sample_transition_batch
from .belief import ImpossibleObservationError, ParticleSet

log = logging.getLogger(__name__)


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn by systematic resampling from normalised ``weights``."""
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="right").clip(max=n - 1)


def pf_step(particles: ParticleSet, dbn: ActionDBN, o, rng: np.random.Generator,
            on_zero_likelihood: str = "error") -> ParticleSet:
    if particles.N < 1:
        raise ValueError("need at least one particle")
    moved = sample_transition_batch(dbn, particles.states, rng)
    w = particles.weights * observation_prob_batch(dbn, moved, o)
    total = w.sum()
    if not total > 0:
        if on_zero_likelihood == "uniform-reset":
            log.warning("all particle weights vanished; keeping unweighted particles")
            w = np.ones(particles.N)
            total = float(particles.N)
        else:
            raise ImpossibleObservationError("all particle weights are zero")
    idx = systematic_resample(w / total, rng)
    n = particles.N
    return ParticleSet(moved[idx], np.full(n, 1.0 / n), particles.domain_sizes, particles.resampling)
