"""Closed-loop warehouse simulation: auction, control, ground truth, filtering."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..dbn import sample_observation, sample_transition
from ..estimators import make_filter
from .control import Auction, BeliefView, Task, control_step, run_auction
from .model import WarehouseConfig, WarehouseModel

TRACE_COLUMNS = ("step", "joint_action", "tasks_done", "filter_us", "skipped_fraction")
FILTER_KINDS = ("psbf", "bk", "pf")


@dataclass
class TraceRow:
    step: int
    joint_action: str
    tasks_done: int
    filter_us: float
    skipped_fraction: float


@dataclass
class SummaryStats:
    steps: int
    tasks_completed: int
    mean_filter_us: float
    mean_skipped_fraction: float
    auctions: list = field(default_factory=list)


@dataclass
class SimResult:
    trace: list
    summary: SummaryStats
    tasks: list


def resolve_collisions(model: WarehouseModel, state, joint) -> tuple[str, ...]:
    """Forward moves of several robots into the same cell all fail."""
    cfg = model.config
    targets: dict[int, list[int]] = {}
    for r, a in enumerate(joint):
        if a == "forward":
            c = cfg.ahead(int(state[model.pos(r)]), int(state[model.head(r)]))
            if c is not None:
                targets.setdefault(c, []).append(r)
    clash = {r for rs in targets.values() if len(rs) > 1 for r in rs}
    return tuple("noop" if r in clash else a for r, a in enumerate(joint))


class _TaskBoard:
    def __init__(self, model: WarehouseModel, seed: int):
        self.model = model
        self.tasks: list[Task] = []
        self.rng = np.random.default_rng([seed, model.config.task_seed])
        self.fixed = list(model.config.tasks) if model.config.tasks is not None else None

    def active(self) -> list[Task]:
        return [t for t in self.tasks if t.status in ("open", "assigned")]

    def refill(self, step: int, state) -> None:
        cfg = self.model.config
        while len(self.active()) < cfg.R:
            if self.fixed is not None:
                if not self.fixed:
                    return
                pod, ws = self.fixed.pop(0)
            else:
                ws = int(self.rng.integers(len(cfg.workstations)))
                target = cfg.workstation_cells()[ws]
                busy = {t.pod for t in self.active()}
                free = [p for p in range(cfg.P) if p not in busy
                        and state[self.model.pod(p)] < self.model.n_cells
                        and state[self.model.pod(p)] != target]
                if not free:
                    return
                pod = int(free[self.rng.integers(len(free))])
            self.tasks.append(Task(len(self.tasks), pod, ws, step))

    def complete(self, step: int, state) -> int:
        """Close delivered tasks and abandon overdue ones; returns deliveries."""
        cfg = self.model.config
        ws_cells = cfg.workstation_cells()
        done = 0
        for t in self.tasks:
            if t.status != "assigned":
                continue
            if state[self.model.pod(t.pod)] == ws_cells[t.workstation]:
                t.status, t.done_at = "done", step
                done += 1
            elif step - t.assigned_at >= cfg.task_timeout:
                t.status, t.done_at = "expired", step
        return done


def _pods_in_play(model, view, assigned) -> list[tuple]:
    """Per robot: its task pod plus any pod ``view`` thinks it may carry."""
    out = []
    for j, task_pod in enumerate(assigned):
        pods = {p for p in range(model.config.P) if view.carried(p, j) > 1e-3}
        if task_pod is not None:
            pods.add(task_pod)
        out.append(tuple(sorted(pods)))
    return out


def simulate(config: WarehouseConfig, filter_kind: str = "psbf", steps: int = 100, seed: int = 0,
             *, threads: int = 1, n_particles: int = 2000, no_timing: bool = False,
             on_zero_likelihood: str = "error", model: WarehouseModel | None = None) -> SimResult:
    """Run the warehouse for ``steps`` steps under ``config.mode`` control.

    The ground truth starts in the configured layout and every filter starts
    from a point belief on it.  Identical arguments give identical traces
    (timings excepted, which ``no_timing`` zeroes).
    """
    if filter_kind not in FILTER_KINDS:
        raise ValueError(f"filter must be one of {FILTER_KINDS}")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    model = model or WarehouseModel(config)
    if model.config != config:
        raise ValueError("model was built for a different configuration")
    rng = np.random.default_rng(seed)
    state = model.initial_state()
    process = model.process()
    clustering = model.clustering()
    R = config.R
    decentral = config.mode == "decentralised"

    def new_filter(k):
        f = make_filter(filter_kind, threads=threads, n_particles=n_particles,
                        random_state=[seed, k], on_zero_likelihood=on_zero_likelihood)
        return f.fit(process, clustering=clustering, init=state)

    filters = [new_filter(r) for r in range(R)] if decentral else [new_filter(0)]
    board = _TaskBoard(model, seed)
    trace, auctions = [], []
    memory: dict = {}
    done_total = 0
    for step in range(steps):
        board.refill(step, state)
        if decentral:
            views = {r: BeliefView(model, filters[r].belief_) for r in range(R)}
        else:
            shared = BeliefView(model, filters[0].belief_)
            views = {r: shared for r in range(R)}
        auctions += run_auction(views, board.tasks, step)
        joint = control_step(config.mode, views, board.tasks, memory)

        executed = resolve_collisions(model, state, joint)
        truth = model.action_dbn(executed)
        state = sample_transition(truth, state, rng)
        obs = sample_observation(truth, state, rng)

        if decentral:
            assigned = [None] * R
            for t in board.active():
                if t.robot is not None:
                    assigned[t.robot] = t.pod
            stats = [f.step(model.belief_dbn(r, joint[r], _pods_in_play(model, views[r], assigned)), obs)
                     for r, f in enumerate(filters)]
        else:
            stats = [filters[0].step(model.action_dbn(joint), obs)]

        done_total += board.complete(step, state)
        us = 0.0 if no_timing else sum(s.total_time for s in stats) * 1e6
        skipped = float(np.mean([s.skipped_fraction for s in stats]))
        trace.append(TraceRow(step, ";".join(joint), done_total, us, skipped))

    summary = SummaryStats(
        steps=steps,
        tasks_completed=done_total,
        mean_filter_us=float(np.mean([r.filter_us for r in trace])) if trace else 0.0,
        mean_skipped_fraction=float(np.mean([r.skipped_fraction for r in trace])) if trace else 0.0,
        auctions=auctions,
    )
    return SimResult(trace, summary, board.tasks)


def trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace:
        w.writerow([r.step, r.joint_action, r.tasks_done, f"{r.filter_us:.1f}",
                    f"{r.skipped_fraction:.6f}"])
    return buf.getvalue()


def auction_winners(auctions: list[Auction]) -> list[tuple[int, int, int]]:
    return [(a.step, a.task, a.winner) for a in auctions]


__all__ = ["SimResult", "SummaryStats", "TraceRow", "auction_winners",
           "resolve_collisions", "simulate", "trace_csv"]
