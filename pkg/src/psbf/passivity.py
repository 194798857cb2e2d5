"""Passivity detection, causal-path reachability and the factor skip rule.

A t+1 state variable is passive when it keeps its previous value whenever a
designated set of its t-parents (each also an intra-slice parent) kept theirs.
Detection only checks the largest admissible designated set: the condition
gets weaker as the set grows, so if any admissible set works the largest one
does too.  Every CPT row is checked, including rows for parent assignments
the process may never reach, which can only err towards "active".
"""

from __future__ import annotations

import enum
import weakref
from dataclasses import dataclass

import numpy as np

from .dbn import X, XT, ActionDBN, x1, xt

DETERMINISTIC_TOL = 1e-9


class Status(enum.Enum):
    ACTIVE = "active"
    PASSIVE = "passive"


@dataclass(frozen=True)
class PassivityVerdict:
    var_index: int
    status: Status
    phi: frozenset = frozenset()

    @property
    def passive(self) -> bool:
        return self.status is Status.PASSIVE


@dataclass(frozen=True)
class PassivityReport:
    action_name: str
    verdicts: tuple[PassivityVerdict, ...]
    reachable: frozenset

    @property
    def active(self) -> frozenset:
        return frozenset(v.var_index for v in self.verdicts if not v.passive)

    @property
    def passive(self) -> frozenset:
        return frozenset(v.var_index for v in self.verdicts if v.passive)


def max_phi(dbn: ActionDBN, i: int) -> frozenset:
    """Largest set of t-parents of ``x_i`` whose t+1 copies are also parents."""
    parents = set(dbn.parents(x1(i)))
    return frozenset(p.index for p in parents
                     if p.kind == XT and p.index != i and x1(p.index) in parents)


_verdicts: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def detect_passive(dbn: ActionDBN, i: int) -> PassivityVerdict:
    if dbn.state_vars[i].domain_size == 1:
        return PassivityVerdict(i, Status.PASSIVE, frozenset())
    cpt = dbn.cpt(x1(i))
    # the verdict only depends on the CPT and the parent domains, and CPT
    # objects are often shared between networks
    key = (i, dbn.domains(cpt.parents))
    per_cpt = _verdicts.get(cpt)
    if per_cpt is not None and key in per_cpt:
        return per_cpt[key]
    verdict = _check_cpt(dbn, i)
    _verdicts.setdefault(cpt, {})[key] = verdict
    return verdict


def _check_cpt(dbn: ActionDBN, i: int) -> PassivityVerdict:
    cpt = dbn.cpt(x1(i))
    parents = cpt.parents
    if xt(i) not in parents:
        return PassivityVerdict(i, Status.ACTIVE)
    phi = max_phi(dbn, i)
    tensor = dbn.tensor(x1(i))
    shape = tensor.shape[:-1]
    grids = np.indices(shape, sparse=True) if shape else []
    axis = {p: k for k, p in enumerate(parents)}

    unchanged = np.ones(shape, dtype=bool)
    for j in phi:
        unchanged = unchanged & (grids[axis[xt(j)]] == grids[axis[x1(j)]])
    own_prev = np.broadcast_to(grids[axis[xt(i)]], shape)
    stay = np.take_along_axis(tensor, own_prev[..., None], axis=-1)[..., 0]
    ok = np.all(stay[unchanged] >= 1.0 - DETERMINISTIC_TOL)
    if ok:
        return PassivityVerdict(i, Status.PASSIVE, phi)
    return PassivityVerdict(i, Status.ACTIVE)


def causal_closure(dbn: ActionDBN, verdicts) -> frozenset:
    """Variables reachable by a causal path from any active variable."""
    successors: dict[int, list[int]] = {}
    for v in verdicts:
        if v.passive:
            for j in v.phi:
                successors.setdefault(j, []).append(v.var_index)
    frontier = [v.var_index for v in verdicts if not v.passive]
    seen = set(frontier)
    while frontier:
        q = frontier.pop()
        for nxt in successors.get(q, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return frozenset(seen)


def detect_all(dbn: ActionDBN) -> PassivityReport:
    verdicts = tuple(detect_passive(dbn, i) for i in range(dbn.n))
    return PassivityReport(dbn.action_name, verdicts, causal_closure(dbn, verdicts))


_cache: "weakref.WeakKeyDictionary[ActionDBN, PassivityReport]" = weakref.WeakKeyDictionary()


def analysis_for(dbn: ActionDBN) -> PassivityReport:
    """Memoised :func:`detect_all`; networks are immutable."""
    report = _cache.get(dbn)
    if report is None:
        report = _cache[dbn] = detect_all(dbn)
    return report


def cluster_skippable(report: PassivityReport, cluster, modified=()) -> bool:
    """Whether the transition update of ``cluster`` may be skipped.

    Variables in ``modified`` had their CPTs rewritten to drop out-of-cluster
    intra-slice parents, so their own verdict no longer counts; they are still
    covered by the reachability test.
    """
    cluster = set(cluster)
    modified = set(modified)
    verdicts = report.verdicts
    if any(not verdicts[i].passive for i in cluster - modified):
        return False
    return not (cluster & report.reachable)
