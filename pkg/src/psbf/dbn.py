"""Two-slice dynamic Bayesian networks with factored states and observations.

A network describes one action.  Nodes come in three kinds:

* ``Node("xt", i)``  state variable ``i`` at time t
* ``Node("x", i)``   state variable ``i`` at time t+1
* ``Node("y", j)``   observation variable ``j`` at time t+1

Every t+1 node owns one :class:`CPT`.  CPT rows are indexed by the mixed-radix
encoding of the parent values in the declared parent order, most significant
digit first, which is exactly C-order when the table is viewed as a tensor of
shape ``(*parent_domains, child_domain)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

PROB_TOL = 1e-9

XT = "xt"
X = "x"
Y = "y"


class Node(NamedTuple):
    kind: str
    index: int

    def __repr__(self) -> str:
        return {XT: "x{}@t", X: "x{}@t1", Y: "y{}"}[self.kind].format(self.index)


def xt(i: int) -> Node:
    return Node(XT, i)


def x1(i: int) -> Node:
    return Node(X, i)


def y(j: int) -> Node:
    return Node(Y, j)


@dataclass(frozen=True)
class VariableSpec:
    name: str
    domain_size: int

    def __post_init__(self):
        if int(self.domain_size) < 1:
            raise ValueError(f"domain_size of {self.name!r} must be >= 1")


@dataclass(frozen=True, eq=False)
class CPT:
    """Conditional distribution of ``child`` given ``parents``.

    ``table`` has one row per parent assignment and one column per child value.
    """

    child: Node
    parents: tuple[Node, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim == 1:
            table = table[None, :]
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "parents", tuple(Node(*p) for p in self.parents))
        object.__setattr__(self, "child", Node(*self.child))

    def tensor(self, domains: Sequence[int]) -> np.ndarray:
        """View the table as ``(*parent_domains, child_domain)``.

        ``domains`` gives the parents' domain sizes in declared order.
        """
        return self.table.reshape(tuple(domains) + (self.table.shape[1],))

    def row_index(self, parent_values: Sequence[int], domains: Sequence[int]) -> int:
        idx = 0
        for v, d in zip(parent_values, domains):
            idx = idx * d + int(v)
        return idx


@dataclass(frozen=True, eq=False)
class ActionDBN:
    """Transition and observation model of a single action.

    Instances are immutable and hash by identity so per-network caches can
    key on them.
    """

    action_name: str
    state_vars: tuple[VariableSpec, ...]
    obs_vars: tuple[VariableSpec, ...]
    edges: frozenset
    cpts: dict = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "state_vars", tuple(self.state_vars))
        object.__setattr__(self, "obs_vars", tuple(self.obs_vars))
        object.__setattr__(self, "edges", frozenset((Node(*a), Node(*b)) for a, b in self.edges))
        object.__setattr__(self, "cpts", {Node(*k): v for k, v in self.cpts.items()})

    @classmethod
    def from_cpts(cls, action_name, state_vars, obs_vars, cpts: Iterable[CPT]) -> "ActionDBN":
        """Build a network whose edge set is read off the CPT parent lists."""
        cpts = list(cpts)
        edges = {(p, c.child) for c in cpts for p in c.parents}
        return cls(action_name, tuple(state_vars), tuple(obs_vars), frozenset(edges),
                   {c.child: c for c in cpts})

    @property
    def n(self) -> int:
        return len(self.state_vars)

    @property
    def m(self) -> int:
        return len(self.obs_vars)

    def domain(self, node: Node) -> int:
        if node.kind == Y:
            return self.obs_vars[node.index].domain_size
        return self.state_vars[node.index].domain_size

    def domains(self, nodes: Iterable[Node]) -> tuple[int, ...]:
        return tuple(self.domain(n) for n in nodes)

    def cpt(self, node: Node) -> CPT:
        return self.cpts[node]

    def parents(self, node: Node) -> tuple[Node, ...]:
        return self.cpts[node].parents

    def tensor(self, node: Node) -> np.ndarray:
        c = self.cpts[node]
        return c.tensor(self.domains(c.parents))

    @cached_property
    def state_order(self) -> tuple[int, ...]:
        """Stable topological order of the t+1 state nodes."""
        return tuple(n.index for n in _stable_topo(self, [x1(i) for i in range(self.n)]))

    @cached_property
    def obs_order(self) -> tuple[int, ...]:
        return tuple(n.index for n in _stable_topo(self, [y(j) for j in range(self.m)]))

    def with_cpts(self, replacements: dict, action_name: str | None = None) -> "ActionDBN":
        """Copy of this network with some CPTs swapped out; edges follow the CPTs."""
        cpts = dict(self.cpts)
        cpts.update(replacements)
        edges = {(p, c.child) for c in cpts.values() for p in c.parents}
        return ActionDBN(action_name or self.action_name, self.state_vars, self.obs_vars,
                         frozenset(edges), cpts)


def _stable_topo(dbn: ActionDBN, nodes: list[Node]) -> list[Node]:
    # depth = longest path from a source within the slice; ties by declaration index
    members = set(nodes)
    depth: dict[Node, int] = {}

    def visit(node, stack):
        if node in depth:
            return depth[node]
        if node in stack:
            raise ValueError(f"cycle through {node!r}")
        stack.add(node)
        d = 0
        for p in dbn.cpts[node].parents if node in dbn.cpts else ():
            if p in members:
                d = max(d, visit(p, stack) + 1)
        stack.discard(node)
        depth[node] = d
        return d

    for node in nodes:
        visit(node, set())
    return sorted(nodes, key=lambda nd: (depth[nd], nd.index))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

class Violation(NamedTuple):
    kind: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)


_ALLOWED_EDGE_CLASSES = {(XT, X), (X, X), (X, Y), (Y, Y)}


def validate_dbn(dbn: ActionDBN) -> ValidationReport:
    """List every structural problem of ``dbn``; an empty report means valid."""
    report = ValidationReport()
    add = lambda kind, msg: report.violations.append(Violation(kind, msg))  # noqa: E731

    names = [v.name for v in dbn.state_vars] + [v.name for v in dbn.obs_vars]
    if len(set(names)) != len(names):
        add("duplicate-name", "variable names are not unique")

    def in_range(node):
        size = dbn.n if node.kind in (XT, X) else dbn.m
        return node.kind in (XT, X, Y) and 0 <= node.index < size

    for a, b in sorted(dbn.edges, key=repr):
        if not (in_range(a) and in_range(b)):
            add("unknown-node", f"edge {a!r} -> {b!r} references an unknown node")
        elif (a.kind, b.kind) not in _ALLOWED_EDGE_CLASSES:
            add("edge-class", f"edge {a!r} -> {b!r} is not an allowed edge class")

    required = [x1(i) for i in range(dbn.n)] + [y(j) for j in range(dbn.m)]
    for node in required:
        if node not in dbn.cpts:
            add("missing-cpt", f"no CPT for {node!r}")
    for node in dbn.cpts:
        if node not in required:
            add("extra-cpt", f"CPT for {node!r} which is not a t+1 node")

    for node in required:
        if node not in dbn.cpts:
            continue
        c = dbn.cpts[node]
        pa = {a for a, b in dbn.edges if b == node}
        if c.child != node:
            add("parent-order", f"CPT stored under {node!r} has child {c.child!r}")
        if set(c.parents) != pa or len(set(c.parents)) != len(c.parents):
            add("parent-order",
                f"CPT parents of {node!r} {list(c.parents)!r} differ from edge parents")
        if not all(in_range(p) for p in c.parents):
            add("unknown-node", f"CPT of {node!r} references an unknown parent")
            continue
        rows = int(np.prod(dbn.domains(c.parents), dtype=np.int64))
        t = c.table
        if t.shape != (rows, dbn.domain(node)):
            add("table-shape", f"CPT of {node!r} has shape {t.shape}, expected {(rows, dbn.domain(node))}")
            continue
        if np.any(t < -PROB_TOL) or np.any(t > 1 + PROB_TOL) or not np.all(np.isfinite(t)):
            add("probability-range", f"CPT of {node!r} has entries outside [0, 1]")
        sums = t.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL)
        for r in bad[:10]:
            add("normalization", f"CPT of {node!r} row {int(r)} sums to {sums[r]!r}")

    # acyclicity of the t+1 slice (state + observation nodes)
    slice_nodes = [n for n in required if n in dbn.cpts]
    graph = {n: [p for p in dbn.cpts[n].parents if p.kind in (X, Y) and p in dbn.cpts]
             for n in slice_nodes}
    if _has_cycle(graph):
        add("cycle", "the t+1 slice contains a directed cycle")
    return report


def _has_cycle(graph: dict) -> bool:
    state: dict = {}

    def dfs(n):
        state[n] = 1
        for p in graph.get(n, ()):
            s = state.get(p, 0)
            if s == 1 or (s == 0 and dfs(p)):
                return True
        state[n] = 2
        return False

    return any(state.get(n, 0) == 0 and dfs(n) for n in graph)


# ---------------------------------------------------------------------------
# evaluation and sampling
# ---------------------------------------------------------------------------

def _check_vec(vec, specs, what) -> np.ndarray:
    v = np.asarray(vec, dtype=np.int64)
    if v.shape != (len(specs),):
        raise ValueError(f"{what} has length {v.size}, expected {len(specs)}")
    sizes = np.array([s.domain_size for s in specs], dtype=np.int64)
    if np.any(v < 0) or np.any(v >= sizes):
        raise ValueError(f"{what} has values outside the variable domains")
    return v


def _lookup(dbn: ActionDBN, node: Node, values: dict) -> np.ndarray:
    c = dbn.cpts[node]
    idx = c.row_index([values[p.kind][p.index] for p in c.parents], dbn.domains(c.parents))
    return c.table[idx]


def transition_prob(dbn: ActionDBN, s, s_next) -> float:
    """Probability of moving from ``s`` to ``s_next`` under ``dbn``."""
    s = _check_vec(s, dbn.state_vars, "s")
    s_next = _check_vec(s_next, dbn.state_vars, "s_next")
    values = {XT: s, X: s_next}
    p = 1.0
    for i in range(dbn.n):
        p *= float(_lookup(dbn, x1(i), values)[s_next[i]])
    return p


def observation_prob(dbn: ActionDBN, s_next, o) -> float:
    """Probability of observing ``o`` in state ``s_next``."""
    s_next = _check_vec(s_next, dbn.state_vars, "s_next")
    o = _check_vec(o, dbn.obs_vars, "o")
    values = {X: s_next, Y: o}
    p = 1.0
    for j in range(dbn.m):
        p *= float(_lookup(dbn, y(j), values)[o[j]])
    return p


def _draw(row: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(np.cumsum(row), u, side="right")), row.size - 1)


def sample_transition(dbn: ActionDBN, s, rng: np.random.Generator) -> np.ndarray:
    s = _check_vec(s, dbn.state_vars, "s")
    out = np.zeros(dbn.n, dtype=np.int64)
    values = {XT: s, X: out}
    for i in dbn.state_order:
        out[i] = _draw(_lookup(dbn, x1(i), values), rng.random())
    return out


def sample_observation(dbn: ActionDBN, s_next, rng: np.random.Generator) -> np.ndarray:
    s_next = _check_vec(s_next, dbn.state_vars, "s_next")
    out = np.zeros(dbn.m, dtype=np.int64)
    values = {X: s_next, Y: out}
    for j in dbn.obs_order:
        out[j] = _draw(_lookup(dbn, y(j), values), rng.random())
    return out


def _batch_rows(dbn: ActionDBN, node: Node, values: dict) -> np.ndarray:
    c = dbn.cpts[node]
    n_rows = next(iter(values.values())).shape[0]
    idx = np.zeros(n_rows, dtype=np.int64)
    for p in c.parents:
        idx = idx * dbn.domain(p) + values[p.kind][:, p.index]
    return idx


def sample_transition_batch(dbn: ActionDBN, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`sample_transition` over the rows of ``states``."""
    states = np.asarray(states, dtype=np.int64)
    out = np.zeros_like(states)
    values = {XT: states, X: out}
    u = rng.random((states.shape[0], dbn.n))
    for i in dbn.state_order:
        c = dbn.cpts[x1(i)]
        cum = np.cumsum(c.table, axis=1)[_batch_rows(dbn, x1(i), values)]
        draw = (cum <= u[:, i:i + 1]).sum(axis=1)
        out[:, i] = np.minimum(draw, c.table.shape[1] - 1)
    return out


def observation_prob_batch(dbn: ActionDBN, states: np.ndarray, o) -> np.ndarray:
    """Vectorised :func:`observation_prob` over the rows of ``states``."""
    states = np.asarray(states, dtype=np.int64)
    o = _check_vec(o, dbn.obs_vars, "o")
    obs = np.broadcast_to(o, (states.shape[0], dbn.m))
    values = {X: states, Y: obs}
    w = np.ones(states.shape[0])
    for j in range(dbn.m):
        w *= dbn.cpts[y(j)].table[_batch_rows(dbn, y(j), values), o[j]]
    return w


def state_space_size(dbn_or_vars) -> int:
    specs = dbn_or_vars.state_vars if isinstance(dbn_or_vars, ActionDBN) else dbn_or_vars
    return int(np.prod([v.domain_size for v in specs], dtype=np.int64))


@dataclass(frozen=True, eq=False)
class Process:
    """A set of action networks over shared variables plus named clusterings."""

    name: str
    state_vars: tuple[VariableSpec, ...]
    obs_vars: tuple[VariableSpec, ...]
    actions: tuple[ActionDBN, ...]
    clusterings: dict = field(default_factory=dict)

    def action(self, key) -> ActionDBN:
        if isinstance(key, ActionDBN):
            return key
        if isinstance(key, (int, np.integer)):
            return self.actions[int(key)]
        for a in self.actions:
            if a.action_name == key:
                return a
        raise KeyError(f"unknown action {key!r}")

    @property
    def n(self) -> int:
        return len(self.state_vars)

    @property
    def m(self) -> int:
        return len(self.obs_vars)
