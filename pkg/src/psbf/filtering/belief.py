"""Belief representations: factored, dense joint and particle sets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..clustering import Clustering

log = logging.getLogger(__name__)

NORM_TOL = 1e-9


class DegenerateModelError(RuntimeError):
    """A normalisation constant vanished."""


class ImpossibleObservationError(DegenerateModelError):
    """The received observation has zero likelihood under the belief."""


@dataclass(eq=False)
class FactoredBelief:
    """Product of per-cluster distributions.

    ``factors[k]`` is a tensor over the variables of cluster ``k`` in cluster
    order; its C-order ravel is the mixed-radix indexed probability vector.
    """

    clustering: Clustering
    factors: list
    domain_sizes: tuple

    def __post_init__(self):
        self.domain_sizes = tuple(int(d) for d in self.domain_sizes)
        self.factors = [np.asarray(f, dtype=float).reshape(self.cluster_shape(k))
                        for k, f in enumerate(self.factors)]

    def cluster_shape(self, k: int) -> tuple[int, ...]:
        return tuple(self.domain_sizes[i] for i in self.clustering.clusters[k])

    @classmethod
    def uniform(cls, clustering: Clustering, domain_sizes) -> "FactoredBelief":
        factors = []
        for c in clustering.clusters:
            shape = tuple(domain_sizes[i] for i in c)
            factors.append(np.full(shape, 1.0 / np.prod(shape)))
        return cls(clustering, factors, domain_sizes)

    @classmethod
    def point(cls, clustering: Clustering, domain_sizes, state) -> "FactoredBelief":
        factors = []
        for c in clustering.clusters:
            f = np.zeros(tuple(domain_sizes[i] for i in c))
            f[tuple(int(state[i]) for i in c)] = 1.0
            factors.append(f)
        return cls(clustering, factors, domain_sizes)

    @classmethod
    def from_joint(cls, clustering: Clustering, joint: np.ndarray) -> "FactoredBelief":
        """Project a joint tensor onto the clusters (its cluster marginals)."""
        n = joint.ndim
        factors = []
        for c in clustering.clusters:
            other = tuple(a for a in range(n) if a not in c)
            m = joint.sum(axis=other)
            # remaining axes are in increasing variable order; permute to cluster order
            order = sorted(c)
            factors.append(np.transpose(m, [order.index(i) for i in c]))
        return cls(clustering, factors, joint.shape)

    @property
    def K(self) -> int:
        return len(self.factors)

    def copy(self) -> "FactoredBelief":
        return FactoredBelief(self.clustering, [f.copy() for f in self.factors], self.domain_sizes)

    def reduced(self, k: int, keep) -> np.ndarray:
        """Marginal of factor ``k`` over ``keep`` (in the given order)."""
        cluster = self.clustering.clusters[k]
        keep = list(keep)
        if keep == list(cluster):
            return self.factors[k]
        drop = tuple(a for a, v in enumerate(cluster) if v not in keep)
        m = self.factors[k].sum(axis=drop) if drop else self.factors[k]
        remaining = [v for v in cluster if v in keep]
        if remaining != keep:
            m = np.transpose(m, [remaining.index(v) for v in keep])
        return m

    def marginal(self, i: int) -> np.ndarray:
        """Marginal of variable ``i``; averaged over clusters that share it."""
        ks = self.clustering.members[i]
        if len(ks) == 1:
            return self.reduced(ks[0], [i])
        log.debug("variable %d is in %d overlapping clusters; averaging", i, len(ks))
        return np.mean([self.reduced(k, [i]) for k in ks], axis=0)

    def marginals(self) -> list[np.ndarray]:
        return [self.marginal(i) for i in range(len(self.domain_sizes))]

    def joint(self) -> np.ndarray:
        """Dense product distribution (only sensible for small state spaces)."""
        from .._einsum import contract

        n = len(self.domain_sizes)
        owner = self.clustering.owner
        ops = []
        for k, c in enumerate(self.clustering.clusters):
            keep = [v for v in c if owner[v] == k]
            if keep:
                ops.append((self.reduced(k, keep), keep))
        return contract(ops, list(range(n)))

    def check(self, tol: float = NORM_TOL) -> None:
        for k, f in enumerate(self.factors):
            s = f.sum()
            if abs(s - 1.0) > tol or np.any(f < -tol):
                raise ValueError(f"factor {k} is not a distribution (sum {s!r})")


@dataclass(eq=False)
class JointBelief:
    """Dense distribution over the full state space, as a tensor."""

    probs: np.ndarray

    @classmethod
    def uniform(cls, domain_sizes) -> "JointBelief":
        shape = tuple(int(d) for d in domain_sizes)
        return cls(np.full(shape, 1.0 / np.prod(shape)))

    @classmethod
    def point(cls, domain_sizes, state) -> "JointBelief":
        p = np.zeros(tuple(int(d) for d in domain_sizes))
        p[tuple(int(v) for v in state)] = 1.0
        return cls(p)

    @classmethod
    def from_factored(cls, belief: FactoredBelief) -> "JointBelief":
        return cls(belief.joint())

    @property
    def domain_sizes(self) -> tuple[int, ...]:
        return self.probs.shape

    @property
    def vector(self) -> np.ndarray:
        return self.probs.ravel()

    def marginal(self, i: int) -> np.ndarray:
        return self.probs.sum(axis=tuple(a for a in range(self.probs.ndim) if a != i))

    def marginals(self) -> list[np.ndarray]:
        return [self.marginal(i) for i in range(self.probs.ndim)]


@dataclass(eq=False)
class ParticleSet:
    states: np.ndarray
    weights: np.ndarray
    domain_sizes: tuple
    resampling: str = "systematic"

    @classmethod
    def from_belief(cls, belief, n_particles: int, rng: np.random.Generator) -> "ParticleSet":
        """Draw particles from a factored or joint belief."""
        if isinstance(belief, JointBelief):
            flat = rng.choice(belief.vector.size, size=n_particles, p=belief.vector)
            states = np.stack(np.unravel_index(flat, belief.domain_sizes), axis=1)
            sizes = belief.domain_sizes
        else:
            sizes = belief.domain_sizes
            states = np.zeros((n_particles, len(sizes)), dtype=np.int64)
            owner = belief.clustering.owner
            for k, c in enumerate(belief.clustering.clusters):
                keep = [v for v in c if owner[v] == k]
                if not keep:
                    continue
                f = belief.reduced(k, keep)
                flat = rng.choice(f.size, size=n_particles, p=f.ravel() / f.sum())
                cols = np.unravel_index(flat, f.shape)
                for v, col in zip(keep, cols):
                    states[:, v] = col
        w = np.full(n_particles, 1.0 / n_particles)
        return cls(states.astype(np.int64), w, tuple(int(d) for d in sizes))

    @property
    def N(self) -> int:
        return self.states.shape[0]

    def marginal(self, i: int) -> np.ndarray:
        w = self.weights / self.weights.sum()
        return np.bincount(self.states[:, i], weights=w, minlength=self.domain_sizes[i])

    def marginals(self) -> list[np.ndarray]:
        return [self.marginal(i) for i in range(len(self.domain_sizes))]

    def histogram(self) -> np.ndarray:
        flat = np.ravel_multi_index(self.states.T, self.domain_sizes)
        w = self.weights / self.weights.sum()
        size = int(np.prod(self.domain_sizes))
        return np.bincount(flat, weights=w, minlength=size).reshape(self.domain_sizes)


@dataclass
class StepStats:
    factors_total: int = 0
    factors_skipped: int = 0
    transition_time: float = 0.0
    observation_time: float = 0.0
    overhead_time: float = 0.0
    skipped: tuple = field(default_factory=tuple)

    @property
    def total_time(self) -> float:
        return self.transition_time + self.observation_time + self.overhead_time

    @property
    def skipped_fraction(self) -> float:
        return self.factors_skipped / self.factors_total if self.factors_total else 0.0
