"""Random synthetic processes with a controlled share of passive variables.

Variables are laid out in consecutive blocks of ``block_size``.  Intra-slice
edges never leave a block, so the ``components`` clustering stays small.
Per action, ``round(n * passivity_pct / 100)`` variables are made passive by
filling whole blocks (in a random block order, lowest index first inside a
block).  The first passive variable of a block never changes under that
action; later ones are passive with respect to one earlier block member.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .clustering import auto_cluster
from .dbn import CPT, X, XT, ActionDBN, Process, VariableSpec, validate_dbn, x1, xt, y
from .passivity import detect_all

log = logging.getLogger(__name__)

PRESETS = {"S": (10, 3), "M": (20, 6), "L": (30, 9), "XL": (40, 12)}


@dataclass(frozen=True)
class SynthParams:
    n: int = 10
    m: int = 3
    passivity_pct: float = 0.0
    actions: int = 2
    max_parents: int = 3
    determinism: float = 0.5
    seed: int = 0
    block_size: int = 2
    intra_edge_prob: float = 0.1
    obs_noise: float = 0.15
    domain_size: int = 2

    def __post_init__(self):
        if not 0 <= self.passivity_pct <= 100:
            raise ValueError("passivity_pct must be within [0, 100]")
        if self.n < 1 or self.m < 1 or self.actions < 1:
            raise ValueError("n, m and actions must be >= 1")
        if not 0 <= self.determinism < 1:
            raise ValueError("determinism must be within [0, 1)")
        if self.max_parents < 1:
            raise ValueError("infeasible parent budget: max_parents must be >= 1")
        if self.block_size < 1 or self.domain_size < 2:
            raise ValueError("block_size must be >= 1 and domain_size >= 2")

    @property
    def alpha(self) -> float:
        """Dirichlet concentration of random CPT rows."""
        return 1.0 - self.determinism

    @property
    def passive_count(self) -> int:
        return int(math.floor(self.n * self.passivity_pct / 100 + 0.5))


def preset(name: str, **overrides) -> SynthParams:
    n, m = PRESETS[name.upper()]
    return SynthParams(n=n, m=m, **overrides)


def _random_rows(rng, rows: int, d: int, alpha: float) -> np.ndarray:
    t = rng.dirichlet(np.full(d, alpha), size=rows)
    # Dirichlet draws with tiny alpha can underflow to all-zero rows
    bad = ~(t.sum(axis=1) > 0.5)
    t[bad] = 1.0 / d
    return t / t.sum(axis=1, keepdims=True)


def _intra_ancestors(dbn: ActionDBN, i: int) -> set[int]:
    seen: set[int] = set()
    stack = [i]
    while stack:
        v = stack.pop()
        for p in dbn.parents(x1(v)):
            if p.kind == X and p.index not in seen:
                seen.add(p.index)
                stack.append(p.index)
    return seen


def make_passive(dbn: ActionDBN, i: int, phi, rng: np.random.Generator,
                 alpha: float = 1.0) -> ActionDBN:
    """Rewrite the CPT of ``x_i`` so that it is passive with respect to ``phi``.

    Adds the parents ``x_i@t`` and ``x_j@t``, ``x_j@t1`` for ``j`` in ``phi``.
    Rows in which every ``j`` in ``phi`` kept its value copy ``x_i@t``; every
    other row is redrawn at random.  An empty ``phi`` makes ``x_i`` constant
    under this action.
    """
    phi = sorted(set(phi))
    if i in phi or any(not 0 <= j < dbn.n for j in phi):
        raise ValueError("phi must be a subset of the other state variables")
    for j in phi:
        if i in _intra_ancestors(dbn, j):
            raise ValueError(f"edge x{j}@t1 -> x{i}@t1 would create a cycle")
    cpt = dbn.cpt(x1(i))
    parents = list(cpt.parents)
    for node in [xt(i)] + [n for j in phi for n in (xt(j), x1(j))]:
        if node not in parents:
            parents.append(node)
    doms = dbn.domains(parents)
    d = dbn.state_vars[i].domain_size
    rows = int(np.prod(doms, dtype=np.int64))
    table = _random_rows(rng, rows, d, alpha)
    grids = np.indices(doms).reshape(len(doms), -1)
    axis = {p: k for k, p in enumerate(parents)}
    keep = np.ones(rows, dtype=bool)
    for j in phi:
        keep &= grids[axis[xt(j)]] == grids[axis[x1(j)]]
    prev = grids[axis[xt(i)]]
    table[keep] = 0.0
    table[np.flatnonzero(keep), prev[keep]] = 1.0
    return dbn.with_cpts({x1(i): CPT(x1(i), tuple(parents), table)})


def blocks_of(params: SynthParams) -> list[list[int]]:
    bs = params.block_size
    return [list(range(s, min(s + bs, params.n))) for s in range(0, params.n, bs)]


def _observation_cpts(params: SynthParams, rng) -> list[CPT]:
    cpts = []
    d = params.domain_size
    for j in range(params.m):
        k = int(rng.integers(1, min(params.max_parents, params.n) + 1))
        parents = sorted(int(v) for v in rng.choice(params.n, size=k, replace=False))
        grids = np.indices((d,) * k).reshape(k, -1)
        reading = np.floor(grids.mean(axis=0) + 0.5).astype(int).clip(max=d - 1)
        table = np.full((d ** k, d), params.obs_noise / (d - 1))
        table[np.arange(d ** k), reading] = 1.0 - params.obs_noise
        cpts.append(CPT(y(j), tuple(x1(p) for p in parents), table))
    return cpts


def _action(params: SynthParams, a: int, obs_cpts, rng) -> tuple[ActionDBN, set[int]]:
    n, d = params.n, params.domain_size
    state_vars = tuple(VariableSpec(f"x{i}", d) for i in range(n))
    obs_vars = tuple(VariableSpec(f"y{j}", d) for j in range(params.m))
    blocks = blocks_of(params)
    block_of = {i: b for b, blk in enumerate(blocks) for i in blk}

    passive: list[int] = []
    for b in rng.permutation(len(blocks)):
        for i in blocks[b]:
            if len(passive) < params.passive_count:
                passive.append(i)
    passive_set = set(passive)

    cpts = []
    plan: list[tuple[int, list[int]]] = []
    for i in range(n):
        earlier = [j for j in blocks[block_of[i]] if j < i]
        if i in passive_set:
            phi = [int(rng.choice(earlier))] if earlier and params.max_parents >= 3 else []
            plan.append((i, phi))
            cpts.append(CPT(x1(i), (xt(i),), _random_rows(rng, d, d, params.alpha)))
            continue
        k = int(rng.integers(1, min(params.max_parents, n) + 1))
        tpar = sorted(int(v) for v in rng.choice(n, size=k, replace=False))
        parents = [xt(v) for v in tpar]
        for j in earlier:
            if len(parents) < params.max_parents and rng.random() < params.intra_edge_prob:
                parents.append(x1(j))
        rows = d ** len(parents)
        cpts.append(CPT(x1(i), tuple(parents), _random_rows(rng, rows, d, params.alpha)))
    dbn = ActionDBN.from_cpts(f"a{a}", state_vars, obs_vars, cpts + list(obs_cpts))
    for i, phi in plan:
        dbn = make_passive(dbn, i, phi, rng, params.alpha)
    return dbn, passive_set


def generate(params: SynthParams, name: str | None = None) -> Process:
    """Random process with ``params.actions`` action networks.

    The returned process carries a ``default`` clustering (connected
    components of the intra-slice edges, which satisfies A1 and A2) and the
    ``blocks`` layout used during generation.
    """
    rng = np.random.default_rng(params.seed)
    obs_cpts = _observation_cpts(params, rng)
    actions = []
    for a in range(params.actions):
        dbn, passive = _action(params, a, obs_cpts, rng)
        report = validate_dbn(dbn)
        if not report.ok:
            raise RuntimeError(f"generated an invalid network: {report.violations[:3]}")
        found = detect_all(dbn).passive
        if not passive <= found:
            raise RuntimeError("a constructed passive variable was not detected")
        if len(found) > len(passive):
            log.info("action a%d: %d variables passive, %d constructed", a, len(found), len(passive))
        actions.append(dbn)
    clustering = auto_cluster(actions, "components")
    name = name or f"synth-n{params.n}-m{params.m}-p{params.passivity_pct:g}-s{params.seed}"
    clusterings = {"default": [list(c) for c in clustering.clusters],
                   "blocks": blocks_of(params)}
    return Process(name, actions[0].state_vars, actions[0].obs_vars, tuple(actions), clusterings)
