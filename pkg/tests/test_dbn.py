import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psbf.dbn import (
    CPT,
    ActionDBN,
    Node,
    VariableSpec,
    observation_prob,
    sample_observation,
    sample_transition,
    transition_prob,
    validate_dbn,
    x1,
    xt,
    y,
)
from psbf.examples import swap_process

from .conftest import all_states, dense_transition, random_dbn

B = VariableSpec


def identity_dbn(n=1):
    state = tuple(B(f"x{i}", 2) for i in range(n))
    obs = (B("o", 2),)
    cpts = [CPT(x1(i), (xt(i),), np.eye(2)) for i in range(n)]
    cpts.append(CPT(y(0), (x1(0),), np.eye(2)))
    return ActionDBN.from_cpts("id", state, obs, cpts)


def flip_dbn(p=0.3):
    state, obs = (B("x", 2),), (B("o", 2),)
    return ActionDBN.from_cpts("flip", state, obs, [
        CPT(x1(0), (), [[1 - p, p]]),
        CPT(y(0), (x1(0),), [[0.5, 0.5], [0.5, 0.5]]),
    ])


class TestValidate:
    def test_identity_is_valid(self):
        assert validate_dbn(identity_dbn()).ok

    def test_edge_between_time_t_nodes(self):
        d = identity_dbn(2)
        bad = ActionDBN(d.action_name, d.state_vars, d.obs_vars,
                        d.edges | {(xt(0), xt(1))}, d.cpts)
        assert "edge-class" in validate_dbn(bad).kinds()

    def test_unnormalised_row_reports_row_index(self):
        d = identity_dbn(1)
        bad = d.with_cpts({x1(0): CPT(x1(0), (xt(0),), [[1.0, 0.0], [0.6, 0.5]])})
        report = validate_dbn(bad)
        assert report.kinds() == {"normalization"}
        assert "row 1" in report.violations[0].message

    def test_cycle(self):
        state, obs = (B("a", 2), B("b", 2)), (B("o", 2),)
        cpts = [CPT(x1(0), (x1(1),), np.eye(2)), CPT(x1(1), (x1(0),), np.eye(2)),
                CPT(y(0), (x1(0),), np.eye(2))]
        assert "cycle" in validate_dbn(ActionDBN.from_cpts("c", state, obs, cpts)).kinds()

    def test_parent_order_mismatch(self):
        d = identity_dbn(2)
        bad = ActionDBN(d.action_name, d.state_vars, d.obs_vars, d.edges | {(xt(1), x1(0))}, d.cpts)
        assert "parent-order" in validate_dbn(bad).kinds()

    def test_observation_to_state_edge_is_rejected(self):
        d = identity_dbn(1)
        bad = ActionDBN(d.action_name, d.state_vars, d.obs_vars, d.edges | {(y(0), x1(0))}, d.cpts)
        assert "edge-class" in validate_dbn(bad).kinds()

    def test_wrong_table_shape_and_missing_cpt(self):
        d = identity_dbn(1)
        shaped = d.with_cpts({x1(0): CPT(x1(0), (xt(0),), [[0.5, 0.5]])})
        assert "table-shape" in validate_dbn(shaped).kinds()
        cpts = dict(d.cpts)
        del cpts[y(0)]
        missing = ActionDBN(d.action_name, d.state_vars, d.obs_vars,
                            frozenset(e for e in d.edges if e[1] != y(0)), cpts)
        assert "missing-cpt" in validate_dbn(missing).kinds()

    def test_negative_entries(self):
        d = identity_dbn(1)
        bad = d.with_cpts({x1(0): CPT(x1(0), (xt(0),), [[1.2, -0.2], [0.0, 1.0]])})
        assert "probability-range" in validate_dbn(bad).kinds()

    def test_duplicate_names(self):
        state, obs = (B("x", 2),), (B("x", 2),)
        d = ActionDBN.from_cpts("d", state, obs, [CPT(x1(0), (xt(0),), np.eye(2)),
                                                  CPT(y(0), (x1(0),), np.eye(2))])
        assert "duplicate-name" in validate_dbn(d).kinds()

    def test_injecting_each_violation_flips_acceptance(self, rng):
        for seed in range(20):
            d = random_dbn(np.random.default_rng(seed), 4)
            assert validate_dbn(d).ok
            c = d.cpt(x1(2))
            t = np.array(c.table)
            t[0, 0] += 0.2
            assert not validate_dbn(d.with_cpts({x1(2): CPT(x1(2), c.parents, t)})).ok


class TestTransitionProb:
    def test_identity(self):
        d = identity_dbn(3)
        for s in itertools.product(range(2), repeat=3):
            for s2 in itertools.product(range(2), repeat=3):
                assert transition_prob(d, s, s2) == (1.0 if s == s2 else 0.0)

    def test_flip(self):
        assert transition_prob(flip_dbn(), [0], [1]) == pytest.approx(0.3)

    def test_product_of_entries_and_sums_to_one(self, rng):
        d = random_dbn(rng, 3, p_copy=0.0)
        s = np.array([1, 0, 1])
        total = 0.0
        for s2 in itertools.product(range(2), repeat=3):
            expected = 1.0
            for i in range(3):
                c = d.cpt(x1(i))
                vals = [s[p.index] if p.kind == "xt" else s2[p.index] for p in c.parents]
                expected *= c.table[c.row_index(vals, d.domains(c.parents)), s2[i]]
            p = transition_prob(d, s, s2)
            assert p == pytest.approx(expected, abs=1e-15)
            total += p
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            transition_prob(identity_dbn(2), [0], [0, 0])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
    def test_rows_of_dense_transition_sum_to_one(self, seed, n):
        d = random_dbn(np.random.default_rng(seed), n, max_domain=3)
        T = dense_transition(d)
        assert np.allclose(T.sum(axis=1), 1.0, atol=1e-9)


class TestObservationProb:
    def test_noiseless_sensor(self):
        d = identity_dbn(1)
        assert observation_prob(d, [1], [1]) == 1.0
        assert observation_prob(d, [1], [0]) == 0.0

    def test_noisy_sensor(self):
        state, obs = (B("x", 2),), (B("o", 2),)
        d = ActionDBN.from_cpts("n", state, obs, [CPT(x1(0), (xt(0),), np.eye(2)),
                                                  CPT(y(0), (x1(0),), [[0.9, 0.1], [0.1, 0.9]])])
        assert observation_prob(d, [0], [0]) == pytest.approx(0.9)

    def test_intra_observation_edge_sums_to_one(self):
        state, obs = (B("x", 2),), (B("o1", 2), B("o2", 2))
        d = ActionDBN.from_cpts("n", state, obs, [
            CPT(x1(0), (xt(0),), np.eye(2)),
            CPT(y(0), (x1(0),), [[0.8, 0.2], [0.3, 0.7]]),
            CPT(y(1), (y(0), x1(0)), [[0.6, 0.4], [0.1, 0.9], [0.5, 0.5], [0.25, 0.75]]),
        ])
        assert validate_dbn(d).ok
        for s in (0, 1):
            total = sum(observation_prob(d, [s], o) for o in itertools.product(range(2), repeat=2))
            assert total == pytest.approx(1.0, abs=1e-12)
        # o2 given (o1=1, x=0) is row 1*2+0 = 2
        assert observation_prob(d, [0], [1, 1]) == pytest.approx(0.2 * 0.5)


class TestSampling:
    def test_identity(self, rng):
        d = identity_dbn(3)
        for s in itertools.product(range(2), repeat=3):
            assert tuple(sample_transition(d, s, rng)) == s

    def test_swap(self, rng):
        d = swap_process().actions[0]
        assert tuple(sample_transition(d, [0, 1], rng)) == (1, 0)

    def test_flip_frequency(self):
        d = flip_dbn()
        r = np.random.default_rng(0)
        flips = sum(sample_transition(d, [0], r)[0] for _ in range(100_000))
        assert abs(flips / 100_000 - 0.3) < 0.01

    def test_noisy_sensor_frequency(self):
        state, obs = (B("x", 2),), (B("o", 2),)
        d = ActionDBN.from_cpts("n", state, obs, [CPT(x1(0), (xt(0),), np.eye(2)),
                                                  CPT(y(0), (x1(0),), [[0.9, 0.1], [0.1, 0.9]])])
        r = np.random.default_rng(1)
        hits = sum(sample_observation(d, [1], r)[0] == 1 for _ in range(20_000))
        assert abs(hits / 20_000 - 0.9) < 0.01

    def test_observation_chain_frequencies(self):
        state, obs = (B("x", 2),), (B("o1", 2), B("o2", 2))
        d = ActionDBN.from_cpts("n", state, obs, [
            CPT(x1(0), (xt(0),), np.eye(2)),
            CPT(y(0), (x1(0),), [[0.8, 0.2], [0.3, 0.7]]),
            CPT(y(1), (y(0), x1(0)), [[0.6, 0.4], [0.1, 0.9], [0.5, 0.5], [0.25, 0.75]]),
        ])
        r = np.random.default_rng(2)
        n = 40_000
        counts = np.zeros((2, 2))
        for _ in range(n):
            o = sample_observation(d, [1], r)
            counts[o[0], o[1]] += 1
        for o in itertools.product(range(2), repeat=2):
            assert abs(counts[o] / n - observation_prob(d, [1], o)) < 0.01

    def test_empirical_distribution_matches_transition_prob(self):
        r = np.random.default_rng(3)
        d = random_dbn(r, 3)
        T = dense_transition(d)
        S = all_states([v.domain_size for v in d.state_vars])
        s = S[5 % len(S)]
        n = 40_000
        counts = np.zeros(len(S))
        index = {tuple(v): k for k, v in enumerate(S)}
        for _ in range(n):
            counts[index[tuple(sample_transition(d, s, r))]] += 1
        assert np.max(np.abs(counts / n - T[5 % len(S)])) < 0.01

    def test_fixed_seed_reproducible(self):
        d = random_dbn(np.random.default_rng(4), 5)
        a = [tuple(sample_transition(d, [0] * 5, np.random.default_rng(9))) for _ in range(3)]
        assert len(set(a)) == 1


def test_node_repr_and_kinds():
    assert Node("x", 2) == x1(2)
    assert xt(0).kind == "xt" and y(1).kind == "y"
