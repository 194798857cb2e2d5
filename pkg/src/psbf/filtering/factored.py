"""Factored transition/observation updates and the selective and full filters.

``psbf_step`` and ``bk_step`` share all machinery.  The only difference is
that ``psbf_step`` keeps the prior factor for every cluster that the
passivity analysis proves cannot change, instead of recomputing it.
"""

from __future__ import annotations

import logging
import threading
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from time import perf_counter

import numpy as np

from .._einsum import contract
from ..clustering import Clustering, MarginalizedAction, foreign_parents, marginalize, prior_operands
from ..dbn import X, XT, Y, ActionDBN, x1, y
from ..passivity import PassivityReport, analysis_for, cluster_skippable
from .belief import DegenerateModelError, FactoredBelief, ImpossibleObservationError, StepStats

log = logging.getLogger(__name__)

ZERO_POLICIES = ("error", "uniform-reset")


@dataclass(frozen=True)
class _ClusterInfo:
    obs: tuple  # observation variables with a state parent in the cluster
    foreign: frozenset  # cluster members with out-of-cluster intra-slice parents


_structure: "weakref.WeakKeyDictionary[ActionDBN, dict]" = weakref.WeakKeyDictionary()
_structure_lock = threading.Lock()


def _info(dbn: ActionDBN, clustering: Clustering) -> tuple[_ClusterInfo, ...]:
    per_dbn = _structure.get(dbn)
    if per_dbn is None:
        with _structure_lock:
            per_dbn = _structure.setdefault(dbn, {})
    key = clustering.key()
    info = per_dbn.get(key)
    if info is None:
        obs_parents = [{p.index for p in dbn.parents(y(j)) if p.kind == X} for j in range(dbn.m)]
        info = []
        for c in clustering.clusters:
            members = set(c)
            obs = tuple(j for j in range(dbn.m) if obs_parents[j] & members)
            foreign = frozenset(i for i in c if foreign_parents(dbn, clustering, i))
            info.append(_ClusterInfo(obs, foreign))
        info = per_dbn[key] = tuple(info)
    return info


def _normalise(f: np.ndarray, what: str) -> np.ndarray:
    z = f.sum()
    if not z > 0:
        raise DegenerateModelError(f"{what}: normalisation constant is zero")
    return f / z


def factor_transition(prior: FactoredBelief, act, k: int) -> np.ndarray:
    """Predicted factor ``k`` after the transition step.

    ``act`` is an :class:`ActionDBN` or a :class:`MarginalizedAction`; its
    effective CPTs for cluster ``k`` must have no intra-slice parents outside
    the cluster.
    """
    dbn = act.dbn if isinstance(act, MarginalizedAction) else act
    cluster = prior.clustering.clusters[k]
    members = set(cluster)
    ops = []
    tpar: list[int] = []
    for i in cluster:
        cpt = dbn.cpt(x1(i))
        for p in cpt.parents:
            if p.kind == XT:
                if p.index not in tpar:
                    tpar.append(p.index)
            elif p.index not in members:
                raise ValueError(f"x{i} has intra-slice parent x{p.index} outside cluster {k}; "
                                 "marginalise first")
        ops.append((dbn.tensor(x1(i)), list(cpt.parents) + [x1(i)]))
    ops += prior_operands(prior, tpar, XT)
    out = contract(ops, [x1(i) for i in cluster])
    return _normalise(out, f"transition of cluster {k}")


def _obs_slice(dbn: ActionDBN, j: int, o) -> tuple[np.ndarray, list]:
    cpt = dbn.cpt(y(j))
    tensor = dbn.tensor(y(j))
    index = tuple(slice(None) if p.kind == X else int(o[p.index]) for p in cpt.parents)
    return tensor[index + (int(o[j]),)], [p for p in cpt.parents if p.kind == X]


def factor_observe(predicted: FactoredBelief, dbn: ActionDBN, k: int, o,
                   on_zero_likelihood: str = "error", obs_vars=None) -> np.ndarray:
    """Factor ``k`` conditioned on observation ``o``.

    Each relevant observation variable contributes a likelihood over the
    cluster; its out-of-cluster state parents are summed out under the
    predicted factors.
    """
    cluster = predicted.clustering.clusters[k]
    members = set(cluster)
    if obs_vars is None:
        obs_vars = [j for j in range(dbn.m)
                    if any(p.kind == X and p.index in members for p in dbn.parents(y(j)))]
    labels = [x1(i) for i in cluster]
    ops = [(predicted.factors[k], labels)]
    for j in obs_vars:
        table, state_parents = _obs_slice(dbn, j, o)
        inside = [p for p in state_parents if p.index in members]
        outside = [p.index for p in state_parents if p.index not in members]
        if outside:
            lik = contract([(table, state_parents)] + prior_operands(predicted, outside, X), inside)
        else:
            lik = table
        ops.append((lik, inside))
    out = contract(ops, labels)
    z = out.sum()
    if z > 0:
        return out / z
    if on_zero_likelihood == "uniform-reset":
        log.warning("impossible observation for cluster %d; resetting factor to uniform", k)
        return np.full(out.shape, 1.0 / out.size)
    raise ImpossibleObservationError(f"observation has zero likelihood for cluster {k}")


_pools: dict[int, ThreadPoolExecutor] = {}


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    pool = _pools.get(threads)
    if pool is None:
        pool = _pools.setdefault(threads, ThreadPoolExecutor(max_workers=threads))
    return list(pool.map(fn, items))


def _selective_step(belief: FactoredBelief, dbn: ActionDBN, o, analysis: PassivityReport | None,
                    skip: bool, threads: int, on_zero_likelihood: str, weights: str):
    if on_zero_likelihood not in ZERO_POLICIES:
        raise ValueError(f"on_zero_likelihood must be one of {ZERO_POLICIES}")
    t0 = perf_counter()
    clustering = belief.clustering
    info = _info(dbn, clustering)
    K = clustering.K
    skipped = [False] * K
    if skip:
        if analysis is None:
            analysis = analysis_for(dbn)
        for k, c in enumerate(clustering.clusters):
            skipped[k] = cluster_skippable(analysis, c, info[k].foreign)
    update = [k for k in range(K) if not skipped[k]]
    rewrite = set().union(*(info[k].foreign for k in update)) if update else set()
    act = marginalize(dbn, clustering, belief, weights, variables=rewrite) if rewrite else dbn
    t1 = perf_counter()

    new = _map(lambda k: factor_transition(belief, act, k), update, threads)
    factors = list(belief.factors)
    for k, f in zip(update, new):
        factors[k] = f
    predicted = FactoredBelief(clustering, factors, belief.domain_sizes)
    t2 = perf_counter()

    observed = [k for k in range(K) if info[k].obs]
    post = _map(lambda k: factor_observe(predicted, dbn, k, o, on_zero_likelihood, info[k].obs),
                observed, threads)
    for k, f in zip(observed, post):
        factors[k] = f
    t3 = perf_counter()
    stats = StepStats(
        factors_total=K,
        factors_skipped=sum(skipped),
        transition_time=t2 - t1,
        observation_time=t3 - t2,
        overhead_time=t1 - t0,
        skipped=tuple(k for k in range(K) if skipped[k]),
    )
    return FactoredBelief(clustering, factors, belief.domain_sizes), stats


def psbf_step(belief: FactoredBelief, dbn: ActionDBN, o, analysis: PassivityReport | None = None,
              clustering: Clustering | None = None, *, threads: int = 1,
              on_zero_likelihood: str = "error", weights: str = "lookahead"):
    """One filtering step that skips provably unchanged factors.

    Returns the posterior belief and a :class:`StepStats`.
    """
    if clustering is not None and clustering.key() != belief.clustering.key():
        raise ValueError("belief was built for a different clustering")
    return _selective_step(belief, dbn, o, analysis, True, threads, on_zero_likelihood, weights)


def bk_step(belief: FactoredBelief, dbn: ActionDBN, o, clustering: Clustering | None = None, *,
            threads: int = 1, on_zero_likelihood: str = "error", weights: str = "lookahead"):
    """One filtering step updating every factor."""
    if clustering is not None and clustering.key() != belief.clustering.key():
        raise ValueError("belief was built for a different clustering")
    return _selective_step(belief, dbn, o, None, False, threads, on_zero_likelihood, weights)
