"""Clusterings of the state variables, assumption checks and CPT marginalisation.

Two assumptions make the per-factor transition update exact:

* A1: every intra-slice parent of a variable lies in the variable's cluster;
* A2: clusters are pairwise disjoint.

``marginalize`` enforces A1 for a given clustering by integrating the
offending intra-slice parents out of each CPT, weighting them by their
one-step predicted marginals under the current belief (or uniformly).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from ._einsum import contract
from .dbn import CPT, X, XT, ActionDBN, Node, x1

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Clustering:
    clusters: tuple[tuple[int, ...], ...]
    n_vars: int
    a1_satisfied: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(tuple(int(i) for i in c) for c in self.clusters))
        if any(len(c) == 0 for c in self.clusters):
            raise ValueError("clusters must be nonempty")

    @property
    def K(self) -> int:
        return len(self.clusters)

    @property
    def covers(self) -> bool:
        return set().union(*map(set, self.clusters)) == set(range(self.n_vars))

    @cached_property
    def a2_satisfied(self) -> bool:
        return check_a2(self)

    @cached_property
    def owner(self) -> tuple[int, ...]:
        """Index of the first cluster containing each variable."""
        own = [-1] * self.n_vars
        for k, c in enumerate(self.clusters):
            for i in c:
                if own[i] < 0:
                    own[i] = k
        return tuple(own)

    @cached_property
    def members(self) -> tuple[tuple[int, ...], ...]:
        """Per variable, every cluster that contains it."""
        mem = [[] for _ in range(self.n_vars)]
        for k, c in enumerate(self.clusters):
            for i in c:
                mem[i].append(k)
        return tuple(tuple(m) for m in mem)

    def key(self) -> tuple:
        return (self.n_vars, self.clusters)

    def with_status(self, dbns) -> "Clustering":
        return Clustering(self.clusters, self.n_vars, not check_a1(self, dbns))


class A1Violation(NamedTuple):
    action: str
    var: int
    parent: int


def check_a1(clustering: Clustering, dbns: Sequence[ActionDBN]) -> list[A1Violation]:
    """Intra-slice edges that leave the child's cluster, per action."""
    out = []
    for dbn in dbns:
        for k, c in enumerate(clustering.clusters):
            members = set(c)
            for i in c:
                for p in dbn.parents(x1(i)):
                    if p.kind == X and p.index not in members:
                        out.append(A1Violation(dbn.action_name, i, p.index))
    # a variable in several clusters is reported once per offending cluster
    return sorted(set(out))


def check_a2(clustering: Clustering) -> bool:
    seen: set[int] = set()
    for c in clustering.clusters:
        if seen & set(c):
            return False
        seen |= set(c)
    return True


def _intra_edges(dbns) -> dict:
    weight: dict[tuple[int, int], int] = {}
    for dbn in dbns:
        for i in range(dbn.n):
            for p in dbn.parents(x1(i)):
                if p.kind == X and p.index != i:
                    e = (min(p.index, i), max(p.index, i))
                    weight[e] = weight.get(e, 0) + 1
    return weight


def _components(nodes, weight) -> list[list[int]]:
    nodes = sorted(nodes)
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in weight:
        if a in parent and b in parent:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for v in nodes:
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values(), key=lambda g: g[0])


def _split(component: list[int], weight: dict, limit: int) -> list[list[int]]:
    # greedy: grow a part from the lowest index by strongest attachment
    if len(component) <= limit:
        return [component]
    remaining = set(component)
    parts = []
    while remaining:
        if len(remaining) <= limit:
            parts.append(sorted(remaining))
            break
        start = min(remaining)
        part = {start}
        while len(part) < limit:
            best, best_w = None, -1
            for v in sorted(remaining - part):
                w = sum(weight.get((min(u, v), max(u, v)), 0) for u in part)
                if w > best_w:
                    best, best_w = v, w
            part.add(best)
        parts.append(sorted(part))
        remaining -= part
        sub_weight = {e: w for e, w in weight.items() if e[0] in remaining and e[1] in remaining}
        pieces = _components(remaining, sub_weight)
        if len(pieces) > 1:
            for piece in pieces:
                parts.extend(_split(piece, sub_weight, limit))
            break
    return parts


def auto_cluster(dbns: Sequence[ActionDBN], strategy: str = "components",
                 max_size: int | None = None) -> Clustering:
    """Cluster the state variables of ``dbns``.

    ``strategy`` is ``"singleton"``, ``"components"`` or ``"max_size"``; the
    last one also accepts the inline form ``"max_size(L)"``.
    """
    if not dbns:
        raise ValueError("need at least one action network")
    m = re.fullmatch(r"max_size\((\d+)\)", strategy)
    if m:
        strategy, max_size = "max_size", int(m.group(1))
    n = dbns[0].n
    weight = _intra_edges(dbns)
    if strategy == "singleton":
        clusters = [[i] for i in range(n)]
    elif strategy == "components":
        clusters = _components(range(n), weight)
    elif strategy == "max_size":
        if max_size is None or max_size < 1:
            raise ValueError("max_size strategy needs a limit >= 1")
        clusters = []
        for comp in _components(range(n), weight):
            comp_weight = {e: w for e, w in weight.items() if e[0] in comp}
            clusters.extend(_split(comp, comp_weight, max_size))
        clusters.sort(key=lambda c: c[0])
    else:
        raise ValueError(f"unknown clustering strategy {strategy!r}")
    return Clustering(tuple(tuple(c) for c in clusters), n).with_status(dbns)


# ---------------------------------------------------------------------------
# A1 enforcement
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MarginalizedAction:
    base: ActionDBN
    modified_vars: frozenset = frozenset()
    modified_cpts: dict = field(default_factory=dict)

    @cached_property
    def dbn(self) -> ActionDBN:
        if not self.modified_cpts:
            return self.base
        return self.base.with_cpts(self.modified_cpts)

    def cpt(self, node: Node) -> CPT:
        return self.modified_cpts.get(node) or self.base.cpt(node)


def foreign_parents(dbn: ActionDBN, clustering: Clustering, i: int) -> tuple[int, ...]:
    """Intra-slice parents of ``x_i`` outside its (owning) cluster."""
    home = set(clustering.clusters[clustering.owner[i]])
    return tuple(p.index for p in dbn.parents(x1(i)) if p.kind == X and p.index not in home)


def prior_operands(belief, variables, kind: str) -> list:
    """Einsum operands giving the product-form joint of ``variables``.

    Each variable is read from its owning factor; factors are summed down to
    the requested variables before contraction.
    """
    by_owner: dict[int, list[int]] = {}
    owner = belief.clustering.owner
    for v in variables:
        by_owner.setdefault(owner[v], []).append(v)
    ops = []
    for k in sorted(by_owner):
        cluster = belief.clustering.clusters[k]
        wanted = set(by_owner[k])
        keep = [v for v in cluster if v in wanted and owner[v] == k]
        ops.append((belief.reduced(k, keep), [Node(kind, v) for v in keep]))
    return ops


def lookahead_marginals(dbn: ActionDBN, prior, needed) -> dict[int, np.ndarray]:
    """Predicted one-step marginal of each variable in ``needed``.

    Intra-slice parents are integrated out recursively through their own
    predicted marginals (a product-form approximation).
    """
    q: dict[int, np.ndarray] = {}

    def get(j):
        if j in q:
            return q[j]
        cpt = dbn.cpt(x1(j))
        ops = [(dbn.tensor(x1(j)), list(cpt.parents) + [x1(j)])]
        tpar = [p.index for p in cpt.parents if p.kind == XT]
        ops += prior_operands(prior, tpar, XT)
        for p in cpt.parents:
            if p.kind == X:
                ops.append((get(p.index), [p]))
        vec = contract(ops, [x1(j)])
        q[j] = vec / vec.sum()
        return q[j]

    for j in needed:
        get(j)
    return q


def marginalize(dbn: ActionDBN, clustering: Clustering, prior=None, weights: str = "lookahead",
                variables=None) -> MarginalizedAction:
    """Drop out-of-cluster intra-slice parents from CPTs to enforce A1.

    ``weights="lookahead"`` integrates each dropped parent against its
    predicted marginal under ``prior``; ``weights="uniform"`` uses uniform
    weights and ignores ``prior``.  ``variables`` restricts the rewrite to a
    subset of state variables.
    """
    if not clustering.a2_satisfied:
        log.debug("marginalising under an overlapping clustering; using owning clusters")
    targets = range(dbn.n) if variables is None else sorted(variables)
    todo = {i: foreign_parents(dbn, clustering, i) for i in targets}
    todo = {i: d for i, d in todo.items() if d}
    if not todo:
        return MarginalizedAction(dbn)
    needed = sorted({j for d in todo.values() for j in d})
    if weights == "lookahead":
        if prior is None:
            raise ValueError("lookahead weights need a prior belief")
        q = lookahead_marginals(dbn, prior, needed)
    elif weights == "uniform":
        q = {j: np.full(dbn.state_vars[j].domain_size, 1.0 / dbn.state_vars[j].domain_size)
             for j in needed}
    else:
        raise ValueError(f"unknown marginalisation weights {weights!r}")

    cpts = {}
    for i, dropped in todo.items():
        cpt = dbn.cpt(x1(i))
        keep = [p for p in cpt.parents if not (p.kind == X and p.index in dropped)]
        ops = [(dbn.tensor(x1(i)), list(cpt.parents) + [x1(i)])]
        ops += [(q[j], [x1(j)]) for j in dropped]
        table = contract(ops, keep + [x1(i)]).reshape(-1, dbn.state_vars[i].domain_size)
        cpts[x1(i)] = CPT(x1(i), tuple(keep), table)
    return MarginalizedAction(dbn, frozenset(cpts_key.index for cpts_key in cpts), cpts)
