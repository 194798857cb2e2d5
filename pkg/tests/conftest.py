"""Shared oracles and generators for the test suite.

The oracles evaluate the model formulas directly (dense enumeration of
states, one CPT lookup per variable) and share no code with the library's
contraction machinery.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from psbf.dbn import CPT, X, XT, Y, ActionDBN, VariableSpec, x1, xt, y


def all_states(domains) -> np.ndarray:
    """Every state in C order, shape (prod(domains), len(domains))."""
    return np.array(list(itertools.product(*[range(d) for d in domains])), dtype=np.int64).reshape(
        -1, len(domains))


def _rows(cpt: CPT, dbn: ActionDBN, values: dict) -> np.ndarray:
    idx = np.zeros(next(iter(values.values())).shape[0], dtype=np.int64)
    for p in cpt.parents:
        idx = idx * dbn.domain(p) + values[p.kind][:, p.index]
    return idx


def dense_transition(dbn: ActionDBN) -> np.ndarray:
    """T[s, s'] as the product of CPT entries, by direct lookup."""
    doms = [v.domain_size for v in dbn.state_vars]
    S = all_states(doms)
    N = len(S)
    s = np.repeat(S, N, axis=0)
    s2 = np.tile(S, (N, 1))
    values = {XT: s, X: s2}
    p = np.ones(N * N)
    for i in range(dbn.n):
        cpt = dbn.cpt(x1(i))
        p *= cpt.table[_rows(cpt, dbn, values), s2[:, i]]
    return p.reshape(N, N)


def dense_likelihood(dbn: ActionDBN, o) -> np.ndarray:
    """Omega(s', o) for every s'."""
    doms = [v.domain_size for v in dbn.state_vars]
    S = all_states(doms)
    O = np.tile(np.asarray(o, dtype=np.int64), (len(S), 1))
    values = {X: S, Y: O}
    p = np.ones(len(S))
    for j in range(dbn.m):
        cpt = dbn.cpt(y(j))
        p *= cpt.table[_rows(cpt, dbn, values), o[j]]
    return p


def product_joint(belief) -> np.ndarray:
    """Flat joint of a factored belief, one state at a time."""
    S = all_states(belief.domain_sizes)
    out = np.ones(len(S))
    for k, c in enumerate(belief.clustering.clusters):
        out *= belief.factors[k][tuple(S[:, i] for i in c)]
    return out


def cluster_marginal(joint_flat: np.ndarray, domains, cluster) -> np.ndarray:
    t = joint_flat.reshape(domains)
    other = tuple(a for a in range(len(domains)) if a not in cluster)
    m = t.sum(axis=other)
    order = sorted(cluster)
    return np.transpose(m, [order.index(i) for i in cluster])


def random_factored(rng, clustering, domains):
    from psbf.filtering import FactoredBelief

    factors = []
    for c in clustering.clusters:
        shape = tuple(domains[i] for i in c)
        factors.append(rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape))
    return FactoredBelief(clustering, factors, domains)


def random_dbn(rng, n: int, m: int = 1, max_domain: int = 2, p_intra: float = 0.3,
               p_copy: float = 0.5, name: str = "a") -> ActionDBN:
    """Random valid network with planted (near-)passive variables.

    Some variables get a CPT that copies ``x_i@t`` whenever their intra-slice
    parents kept their value; a share of those is then spoiled in a single
    row so the detector also sees near misses.
    """
    doms = [int(rng.integers(2, max_domain + 1)) for _ in range(n)]
    state = tuple(VariableSpec(f"x{i}", d) for i, d in enumerate(doms))
    obs = tuple(VariableSpec(f"o{j}", 2) for j in range(m))
    cpts = []
    for i in range(n):
        tpar = [int(v) for v in rng.choice(n, size=int(rng.integers(0, min(n, 3) + 1)), replace=False)]
        intra = [j for j in range(i) if rng.random() < p_intra][:2]
        copy = rng.random() < p_copy
        if copy:
            for j in intra:
                if j not in tpar:
                    tpar.append(j)
            if i not in tpar:
                tpar.append(i)
        parents = [xt(v) for v in tpar] + [x1(j) for j in intra]
        pd = [doms[p.index] for p in parents]
        rows = int(np.prod(pd, dtype=np.int64))
        table = rng.dirichlet(np.full(doms[i], 0.5), size=rows)
        if copy:
            grid = np.indices(pd).reshape(len(pd), -1) if pd else np.zeros((0, 1), dtype=int)
            keep = np.ones(rows, dtype=bool)
            for j in intra:
                keep &= grid[parents.index(xt(j))] == grid[parents.index(x1(j))]
            prev = grid[parents.index(xt(i))]
            table[keep] = 0.0
            table[np.flatnonzero(keep), prev[keep]] = 1.0
            if rng.random() < 0.3:
                r = int(rng.choice(np.flatnonzero(keep)))
                table[r] = rng.dirichlet(np.ones(doms[i]))
        cpts.append(CPT(x1(i), tuple(parents), table))
    for j in range(m):
        parents = (x1(int(rng.integers(n))),)
        cpts.append(CPT(y(j), parents, rng.dirichlet(np.ones(2), size=doms[parents[0].index])))
    return ActionDBN.from_cpts(name, state, obs, cpts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_passive(dbn, i, phi) -> bool:
    """Check the parent-set conditions, then that x_i never moves while phi stays put."""
    cpt = dbn.cpt(x1(i))
    for j in phi:
        if xt(j) not in cpt.parents or (x1(j), x1(i)) not in dbn.edges:
            return False
    T = dense_transition(dbn)
    S = all_states([v.domain_size for v in dbn.state_vars])
    src, dst = np.nonzero(T > 0)
    unchanged = np.ones(src.size, dtype=bool)
    for j in phi:
        unchanged &= S[src, j] == S[dst, j]
    return bool(np.all(S[src[unchanged], i] == S[dst[unchanged], i]))


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
