import numpy as np
import pytest

from psbf.dbn import sample_observation, transition_prob, validate_dbn
from psbf.filtering import FactoredBelief, psbf_step
from psbf.passivity import detect_all
from psbf.warehouse import (
    BeliefView,
    Task,
    WarehouseConfig,
    WarehouseModel,
    control_step,
    parse_action,
    preset,
    resolve_collisions,
    run_auction,
    simulate,
    step_towards,
    trace_csv,
)

N, E, S, W = range(4)


@pytest.fixture(scope="module")
def kiva():
    return WarehouseModel(preset())


def small(**kw):
    base = dict(width=5, height=5, workstations=((0, 2),), pods=((2, 2), (2, 4)),
                robots=((4, 2, W),))
    base.update(kw)
    return WarehouseConfig(**base)


def view_of(model, state):
    c = model.clustering()
    b = FactoredBelief.point(c, tuple(v.domain_size for v in model.state_vars), state)
    return BeliefView(model, b)


def test_sizes_and_validity(kiva):
    assert kiva.n == 28 and kiva.m == 28
    assert validate_dbn(kiva.action_dbn(("noop",) * 4)).ok
    assert validate_dbn(kiva.action_dbn(("forward", "load(3)", "turn-left", "unload(5)"))).ok


def test_parse_action():
    assert parse_action("forward") == ("forward", None)
    assert parse_action("unload(12)") == ("unload", 12)
    with pytest.raises(ValueError):
        parse_action("jump")


def test_joint_checks(kiva):
    with pytest.raises(ValueError):
        kiva.action_dbn(("noop",) * 3)
    with pytest.raises(ValueError):
        kiva.action_dbn(("load(1)", "load(1)", "noop", "noop"))
    with pytest.raises(ValueError):
        kiva.action_dbn(("load(99)", "noop", "noop", "noop"))


def test_all_noop_everything_passive(kiva):
    r = detect_all(kiva.action_dbn(("noop",) * 4))
    assert r.passive == set(range(kiva.n)) and r.reachable == frozenset()


def test_forward_only_moves_one_robot(kiva):
    r = detect_all(kiva.action_dbn(("forward", "noop", "noop", "noop")))
    assert r.active == {kiva.pos(0)}
    assert r.reachable == {kiva.pos(0)}
    # a pod carried by robot 0 keeps its carrier marker, so it stays out of reach
    assert all(kiva.pod(p) not in r.reachable for p in range(kiva.config.P))


def test_load_touches_pod_and_loaded_flag(kiva):
    r = detect_all(kiva.action_dbn(("load(2)", "noop", "noop", "noop")))
    assert kiva.pod(2) in r.active
    assert kiva.loaded(0) in r.reachable
    assert r.verdicts[kiva.loaded(0)].phi == {kiva.pod(2)}
    others = set(range(kiva.n)) - {kiva.pod(2), kiva.loaded(0)}
    assert not (others & r.reachable)


def test_load_and_carry_semantics():
    cfg = small(p_move=1.0, p_turn=1.0, p_load=1.0)
    m = WarehouseModel(cfg)
    s = m.initial_state()
    s[m.pos(0)] = cfg.cell(2, 2)
    s2 = s.copy()
    s2[m.pod(0)] = m.carried_by(0)
    s2[m.loaded(0)] = 1
    assert transition_prob(m.action_dbn(("load(0)",)), s, s2) == pytest.approx(1.0)
    # loading a pod elsewhere does nothing
    assert transition_prob(m.action_dbn(("load(1)",)), s, s) == pytest.approx(1.0)
    s3 = s2.copy()
    s3[m.pod(0)] = cfg.cell(2, 2)
    s3[m.loaded(0)] = 0
    assert transition_prob(m.action_dbn(("unload(0)",)), s2, s3) == pytest.approx(1.0)


def test_collision_rule():
    cfg = small(robots=((1, 1, E), (3, 1, W), (4, 4, S)))
    m = WarehouseModel(cfg)
    s = m.initial_state()
    assert resolve_collisions(m, s, ("forward", "forward", "forward")) == ("noop", "noop", "forward")
    assert resolve_collisions(m, s, ("forward", "noop", "turn-left")) == ("forward", "noop", "turn-left")


def test_step_towards():
    cfg = small()
    c = cfg.cell
    assert step_towards(cfg, c(4, 2), W, c(2, 2), set()) == "forward"
    assert step_towards(cfg, c(2, 2), N, c(1, 2), set()) == "turn-left"
    assert step_towards(cfg, c(2, 2), N, c(3, 2), set()) == "turn-right"
    assert step_towards(cfg, c(2, 2), W, c(2, 2), set()) == "noop"
    # cell ahead occupied and no detour on a one-row grid
    row = WarehouseConfig(width=4, height=1, workstations=((0, 0),), pods=(),
                          robots=((1, 0, E), (2, 0, W)))
    assert step_towards(row, 1, E, 3, {2}) == "noop"
    assert step_towards(row, 2, W, 0, {1}) == "noop"


def test_standoff_centralised_waits():
    row = WarehouseConfig(width=4, height=1, workstations=((0, 0),), pods=((3, 0),),
                          robots=((1, 0, E), (2, 0, W)))
    m = WarehouseModel(row)
    v = view_of(m, m.initial_state())
    t = [Task(0, 0, 0, 0, "assigned", robot=0, assigned_at=0)]
    assert control_step("centralised", {0: v, 1: v}, t) == ("noop", "noop")


def test_auction_nearest_and_ties():
    cfg = small(robots=((4, 2, W), (0, 0, S)))
    m = WarehouseModel(cfg)
    v = view_of(m, m.initial_state())
    tasks = [Task(0, 0, 0, 0)]
    [a] = run_auction({0: v, 1: v}, tasks)
    # pod (2,2) -> ws (0,2) costs 2; robot0 is 2 away, robot1 is 4 away
    assert a.winner == 0 and dict(a.bids) == {0: 4.0, 1: 6.0}
    assert tasks[0].status == "assigned" and tasks[0].robot == 0

    tie = small(robots=((2, 3, N), (2, 1, S)), pods=((2, 2), (4, 4)))
    m = WarehouseModel(tie)
    v = view_of(m, m.initial_state())
    tasks = [Task(0, 0, 0, 0)]
    [a] = run_auction({0: v, 1: v}, tasks)
    assert dict(a.bids)[0] == dict(a.bids)[1] and a.winner == 0


def test_auction_single_robot_and_busy():
    m = WarehouseModel(small())
    v = view_of(m, m.initial_state())
    tasks = [Task(0, 0, 0, 0), Task(1, 1, 0, 0)]
    out = run_auction({0: v}, tasks)
    assert [a.task for a in out] == [0] and tasks[1].status == "open"
    assert run_auction({0: v}, tasks) == []


def test_noiseless_delivery():
    cfg = small(p_move=1.0, p_turn=1.0, p_load=1.0, sensor_pos=1.0, sensor_heading=1.0,
                sensor_load=1.0, sensor_pod=1.0, tasks=((0, 0), (1, 0)))
    res = simulate(cfg, "psbf", steps=6, seed=0, no_timing=True)
    actions = [r.joint_action for r in res.trace]
    assert actions == ["forward", "forward", "load(0)", "forward", "forward", "unload(0)"]
    assert [r.tasks_done for r in res.trace] == [0, 0, 0, 0, 0, 1]
    longer = simulate(cfg, "bk", steps=40, seed=0, no_timing=True)
    assert longer.summary.tasks_completed == 2


def test_zero_steps():
    res = simulate(preset(), steps=0)
    assert res.summary.tasks_completed == 0 and res.trace == []


def test_trace_determinism():
    a = simulate(preset(), "psbf", steps=25, seed=3, no_timing=True)
    b = simulate(preset(), "psbf", steps=25, seed=3, no_timing=True)
    assert trace_csv(a.trace) == trace_csv(b.trace)
    assert all(r.filter_us == 0.0 for r in a.trace)


def test_psbf_and_bk_agree_and_skip():
    a = simulate(preset(), "psbf", steps=30, seed=1, no_timing=True)
    b = simulate(preset(), "bk", steps=30, seed=1, no_timing=True)
    assert [r.joint_action for r in a.trace] == [r.joint_action for r in b.trace]
    assert a.summary.mean_skipped_fraction > 0.25
    assert b.summary.mean_skipped_fraction == 0.0


def test_decentralised_runs():
    res = simulate(preset(mode="decentralised"), "psbf", steps=15, seed=0, no_timing=True)
    assert len(res.trace) == 15 and res.summary.mean_skipped_fraction > 0


def test_config_validation():
    with pytest.raises(ValueError):
        small(robots=((9, 9, 0),))
    with pytest.raises(ValueError):
        small(robots=((2, 2, 0),))  # on a pod
    with pytest.raises(ValueError):
        small(p_move=1.5)
    with pytest.raises(ValueError):
        small(mode="swarm")
    with pytest.raises(ValueError):
        preset("huge")
    with pytest.raises(ValueError):
        simulate(preset(), "exact", steps=1)


def test_pods_passive_without_carrier_action(kiva):
    for joint in (("turn-left", "forward", "noop", "turn-right"),
                  ("noop", "noop", "forward", "forward")):
        r = detect_all(kiva.action_dbn(joint))
        pods = {kiva.pod(p) for p in range(kiva.config.P)}
        assert pods <= r.passive and not (pods & r.reachable)
    assert np.all(kiva.initial_state() >= 0)


def test_noop_skips_every_factor(kiva):
    dbn = kiva.action_dbn(("noop",) * 4)
    s = kiva.initial_state()
    b = view_of(kiva, s).belief
    o = sample_observation(dbn, s, np.random.default_rng(0))
    post, stats = psbf_step(b, dbn, o)
    assert stats.factors_skipped == stats.factors_total == kiva.clustering().K
    assert all(np.allclose(f, g) for f, g in zip(post.factors, b.factors))
