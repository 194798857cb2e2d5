"""Filters with a scikit-learn style interface.

Each filter is configured through constructor parameters (so ``get_params``
and ``set_params`` work), bound to a process by :meth:`fit`, and then driven
either step by step with :meth:`step` or over a whole action/observation
sequence with :meth:`transform`, which returns the per-step marginals as a
feature matrix.

    >>> f = PSBFFilter(threads=2).fit(process)
    >>> stats = f.step("a0", obs)
    >>> X = f.transform([("a0", o1), ("a1", o2)])
"""

from __future__ import annotations

from time import perf_counter

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .filtering import (
    FactoredBelief,
    JointBelief,
    ParticleSet,
    StepStats,
    bk_step,
    exact_step,
    pf_step,
    psbf_step,
)
from .filtering.exact import DEFAULT_CAP
from .filtering.factored import ZERO_POLICIES
from .passivity import analysis_for
from .validation import check_action, check_clustering, check_process, check_vector


class _Filter(BaseEstimator):
    def fit(self, process, y=None, *, clustering=None, init=None):
        """Bind to ``process`` and reset the belief.

        ``init`` is ``None`` (uniform), a state vector (point mass) or a belief.
        """
        self.process_ = check_process(process, validate=getattr(self, "validate", True))
        self.domain_sizes_ = tuple(v.domain_size for v in self.process_.state_vars)
        self._bind(clustering)
        self.reset(init)
        return self

    def _bind(self, clustering):
        pass

    def reset(self, init=None):
        check_is_fitted(self, "process_")
        self.belief_ = self._initial(init)
        self.n_steps_ = 0
        return self

    def step(self, action, o) -> StepStats:
        """Advance the belief by one action and observation."""
        check_is_fitted(self, "belief_")
        dbn = check_action(self.process_, action)
        o = check_vector(o, self.process_.obs_vars, "observation")
        self.belief_, stats = self._step(dbn, o)
        self.n_steps_ += 1
        return stats

    def marginals(self) -> list[np.ndarray]:
        check_is_fitted(self, "belief_")
        return self.belief_.marginals()

    def transform(self, X) -> np.ndarray:
        """Filter a sequence of ``(action, observation)`` pairs.

        Returns an array with one row per step holding the concatenated
        marginals of all state variables after that step.
        """
        rows = []
        for action, o in X:
            self.step(action, o)
            rows.append(np.concatenate(self.marginals()))
        return np.array(rows).reshape(len(rows), sum(self.domain_sizes_))


class _FactoredFilter(_Filter):
    def _bind(self, clustering):
        if self.on_zero_likelihood not in ZERO_POLICIES:
            raise ValueError(f"on_zero_likelihood must be one of {ZERO_POLICIES}")
        if self.marginalize not in ("lookahead", "uniform"):
            raise ValueError("marginalize must be 'lookahead' or 'uniform'")
        self.clustering_ = check_clustering(clustering, self.process_)

    def _initial(self, init):
        if init is None:
            return FactoredBelief.uniform(self.clustering_, self.domain_sizes_)
        if isinstance(init, FactoredBelief):
            if init.clustering.key() != self.clustering_.key():
                raise ValueError("initial belief uses a different clustering")
            return init.copy()
        if isinstance(init, JointBelief):
            return FactoredBelief.from_joint(self.clustering_, init.probs)
        state = check_vector(init, self.process_.state_vars, "initial state")
        return FactoredBelief.point(self.clustering_, self.domain_sizes_, state)


class PSBFFilter(_FactoredFilter):
    """Factored filter that skips the transition update of passive clusters."""

    def __init__(self, threads=1, on_zero_likelihood="error", marginalize="lookahead",
                 validate=True):
        self.threads = threads
        self.on_zero_likelihood = on_zero_likelihood
        self.marginalize = marginalize
        self.validate = validate

    def _step(self, dbn, o):
        return psbf_step(self.belief_, dbn, o, analysis_for(dbn), threads=self.threads,
                         on_zero_likelihood=self.on_zero_likelihood, weights=self.marginalize)


class BKFilter(_FactoredFilter):
    """Factored filter that updates every factor at every step."""

    def __init__(self, threads=1, on_zero_likelihood="error", marginalize="lookahead",
                 validate=True):
        self.threads = threads
        self.on_zero_likelihood = on_zero_likelihood
        self.marginalize = marginalize
        self.validate = validate

    def _step(self, dbn, o):
        return bk_step(self.belief_, dbn, o, threads=self.threads,
                       on_zero_likelihood=self.on_zero_likelihood, weights=self.marginalize)


class ExactFilter(_Filter):
    """Dense joint filter; only for state spaces up to ``cap`` states."""

    def __init__(self, cap=DEFAULT_CAP, validate=True):
        self.cap = cap
        self.validate = validate

    def _bind(self, clustering):
        size = int(np.prod(self.domain_sizes_, dtype=np.int64))
        if size > self.cap:
            raise ValueError(f"state space of {size} exceeds cap {self.cap}")

    def _initial(self, init):
        if init is None:
            return JointBelief.uniform(self.domain_sizes_)
        if isinstance(init, JointBelief):
            return JointBelief(init.probs.copy())
        if isinstance(init, FactoredBelief):
            return JointBelief.from_factored(init)
        state = check_vector(init, self.process_.state_vars, "initial state")
        return JointBelief.point(self.domain_sizes_, state)

    def _step(self, dbn, o):
        t0 = perf_counter()
        belief = exact_step(self.belief_, dbn, o, cap=self.cap)
        return belief, StepStats(transition_time=perf_counter() - t0)


class ParticleFilter(_Filter):
    """Bootstrap particle filter with systematic resampling."""

    def __init__(self, n_particles=1000, random_state=None, on_zero_likelihood="error",
                 validate=True):
        self.n_particles = n_particles
        self.random_state = random_state
        self.on_zero_likelihood = on_zero_likelihood
        self.validate = validate

    def _bind(self, clustering):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        self.rng_ = np.random.default_rng(self.random_state)

    def _initial(self, init):
        n = self.n_particles
        if init is None:
            states = np.stack([self.rng_.integers(0, d, size=n) for d in self.domain_sizes_], axis=1)
            return ParticleSet(states, np.full(n, 1.0 / n), self.domain_sizes_)
        if isinstance(init, (JointBelief, FactoredBelief)):
            return ParticleSet.from_belief(init, n, self.rng_)
        state = check_vector(init, self.process_.state_vars, "initial state")
        return ParticleSet(np.tile(state, (n, 1)), np.full(n, 1.0 / n), self.domain_sizes_)

    def _step(self, dbn, o):
        t0 = perf_counter()
        ps = pf_step(self.belief_, dbn, o, self.rng_, self.on_zero_likelihood)
        return ps, StepStats(transition_time=perf_counter() - t0)


FILTERS = {"psbf": PSBFFilter, "bk": BKFilter, "exact": ExactFilter, "pf": ParticleFilter}


def make_filter(kind: str, **params) -> _Filter:
    try:
        cls = FILTERS[kind]
    except KeyError:
        raise ValueError(f"unknown filter {kind!r}; choose from {sorted(FILTERS)}") from None
    accepted = cls().get_params()
    return cls(**{k: v for k, v in params.items() if k in accepted})
