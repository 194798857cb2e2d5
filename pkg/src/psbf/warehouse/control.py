"""Task auctions and greedy shortest-path control from beliefs.

Both control modes are deterministic functions of the beliefs they are
given.  A belief is read through :class:`BeliefView`, which only needs
per-variable marginals, so factored, joint and particle beliefs all work.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import WarehouseModel

BLOCK_PROB = 0.5


@dataclass
class Task:
    id: int
    pod: int
    workstation: int
    created: int
    status: str = "open"  # open -> assigned -> done | expired
    robot: int | None = None
    assigned_at: int | None = None
    done_at: int | None = None


@dataclass(frozen=True)
class Auction:
    step: int
    task: int
    bids: tuple  # ((robot, cost), ...)
    winner: int


class BeliefView:
    """Marginal queries on a belief, cached per instance."""

    def __init__(self, model: WarehouseModel, belief):
        self.model = model
        self.belief = belief
        self._cache: dict[int, np.ndarray] = {}

    def marginal(self, i: int) -> np.ndarray:
        m = self._cache.get(i)
        if m is None:
            m = self._cache[i] = np.asarray(self.belief.marginal(i), dtype=float)
        return m

    def position(self, r: int) -> int:
        return int(np.argmax(self.marginal(self.model.pos(r))))

    def heading(self, r: int) -> int:
        return int(np.argmax(self.marginal(self.model.head(r))))

    def mean_xy(self, r: int) -> tuple[float, float]:
        cfg = self.model.config
        p = self.marginal(self.model.pos(r))
        cells = np.arange(p.size)
        return float(p @ (cells % cfg.width)), float(p @ (cells // cfg.width))

    def pod_cell(self, p: int) -> int:
        """Most likely floor cell of pod ``p``."""
        return int(np.argmax(self.marginal(self.model.pod(p))[: self.model.n_cells]))

    def carried(self, p: int, r: int) -> float:
        return float(self.marginal(self.model.pod(p))[self.model.carried_by(r)])

    def blocked_cells(self, r: int) -> set[int]:
        """Cells believed to hold another robot with probability above 0.5."""
        out = set()
        for j in range(self.model.config.R):
            if j != r:
                p = self.marginal(self.model.pos(j))
                c = int(np.argmax(p))
                if p[c] > BLOCK_PROB:
                    out.add(c)
        return out


def _manhattan(cfg, a, b) -> float:
    ax, ay = a if isinstance(a, tuple) else cfg.coords(a)
    bx, by = b if isinstance(b, tuple) else cfg.coords(b)
    return abs(ax - bx) + abs(ay - by)


def bid(view: BeliefView, r: int, task: Task) -> float:
    """Travel cost from the belief-mean position of ``r`` to the pod, then on
    to the task's workstation."""
    cfg = view.model.config
    pod = view.pod_cell(task.pod)
    ws = cfg.workstation_cells()[task.workstation]
    return _manhattan(cfg, view.mean_xy(r), pod) + _manhattan(cfg, pod, ws)


def run_auction(views, tasks, step: int = 0) -> list[Auction]:
    """Assign open tasks to idle robots, oldest task first.

    ``views`` maps robot id to the :class:`BeliefView` that robot bids from.
    The lowest bid wins; ties go to the lowest robot id.
    """
    busy = {t.robot for t in tasks if t.status == "assigned"}
    idle = [r for r in sorted(views) if r not in busy]
    results = []
    for task in sorted((t for t in tasks if t.status == "open"), key=lambda t: t.id):
        if not idle:
            break
        bids = tuple((r, bid(views[r], r, task)) for r in idle)
        winner = min(bids, key=lambda b: (b[1], b[0]))[0]
        task.status, task.robot, task.assigned_at = "assigned", winner, step
        idle.remove(winner)
        results.append(Auction(step, task.id, bids, winner))
    return results


STUCK_LIMIT = 4


def _distances(cfg, target: int, blocked: set[int]) -> dict[int, int]:
    dist = {target: 0}
    queue = deque([target])
    while queue:
        c = queue.popleft()
        for nb in cfg.neighbours(c):
            if nb not in dist and nb not in blocked:
                dist[nb] = dist[c] + 1
                queue.append(nb)
    return dist


def _turn_towards(heading: int, h: int) -> str:
    return "turn-left" if h == (heading + 3) % 4 else "turn-right"


def step_towards(cfg, cell: int, heading: int, target: int, blocked: set[int],
                 reserved: set[int] = frozenset()) -> str:
    """One greedy move along a shortest path that avoids ``blocked`` cells.

    Prefers the current heading among equally short continuations, then
    north, east, south, west.  Returns ``noop`` when there is no path or the
    next cell is occupied or reserved.  While the target itself is occupied
    its neighbours count as blocked too, so waiting robots keep clear of it.
    """
    if cell == target:
        return "noop"
    blocked = set(blocked) - {cell}
    if target in blocked:
        blocked |= set(cfg.neighbours(target)) - {cell}
    dist = _distances(cfg, target, blocked - {target})
    if cell not in dist:
        return "noop"
    options = [h for h in range(4)
               if (nb := cfg.ahead(cell, h)) is not None and dist.get(nb) == dist[cell] - 1]
    if not options:
        return "noop"
    h = heading if heading in options else options[0]
    if h == heading:
        nxt = cfg.ahead(cell, h)
        return "noop" if nxt in blocked or nxt in reserved else "forward"
    return _turn_towards(heading, h)


def sidestep(cfg, cell: int, heading: int, blocked: set[int], reserved=frozenset()) -> str:
    """Move into any free neighbouring cell, straight ahead first."""
    for h in [heading] + [h for h in range(4) if h != heading]:
        nb = cfg.ahead(cell, h)
        if nb is not None and nb not in blocked and nb not in reserved:
            return "forward" if h == heading else _turn_towards(heading, h)
    return "noop"


def _goal(view: BeliefView, r: int, task: Task | None):
    """Either a pod action to perform here or a target cell to head for."""
    model = view.model
    cfg = model.config
    cell = view.position(r)
    mine = None if task is None else task.pod
    for p in range(cfg.P):
        if p != mine and view.carried(p, r) > 0.5:
            return f"unload({p})", None  # left over from an abandoned task
    if task is None:
        x, yy, _ = cfg.robots[r]
        return None, cfg.cell(x, yy)
    ws = cfg.workstation_cells()[task.workstation]
    if view.carried(task.pod, r) > 0.5:
        return (f"unload({task.pod})", None) if cell == ws else (None, ws)
    pod = view.pod_cell(task.pod)
    if cell == pod:
        # at a workstation the pod is believed delivered; retry the drop-off
        # until the workstation confirms it
        return (f"unload({task.pod})" if pod == ws else f"load({task.pod})"), None
    return None, pod


def robot_action(view: BeliefView, r: int, task: Task | None, reserved=frozenset(),
                 stuck: int = 0) -> str:
    """What robot ``r`` does next according to ``view``.

    ``stuck`` counts the robot's consecutive blocked steps; at
    ``STUCK_LIMIT`` it sidesteps to break gridlock.
    """
    cfg = view.model.config
    act, target = _goal(view, r, task)
    if act is not None:
        return act
    cell, heading = view.position(r), view.heading(r)
    blocked = view.blocked_cells(r)
    if stuck >= STUCK_LIMIT:
        return sidestep(cfg, cell, heading, blocked, reserved)
    return step_towards(cfg, cell, heading, target, blocked, reserved)


def control_step(mode: str, views, tasks, memory: dict | None = None) -> tuple[str, ...]:
    """Joint action for all robots.

    ``centralised``: one planner, robots in id order, each reserving the cell
    its forward move targets.  ``decentralised``: each robot plans from its
    own view without reservations.  ``memory`` (a dict kept by the caller)
    holds the per-robot blocked-step counters.
    """
    if mode not in ("centralised", "decentralised"):
        raise ValueError(f"unknown control mode {mode!r}")
    memory = {} if memory is None else memory
    by_robot = {t.robot: t for t in tasks if t.status == "assigned"}
    joint = []
    reserved: set[int] = set()
    for r in range(len(views)):
        view = views[r]
        cfg = view.model.config
        stuck = memory.get(r, 0)
        a = robot_action(view, r, by_robot.get(r), reserved if mode == "centralised" else (), stuck)
        _, target = _goal(view, r, by_robot.get(r))
        waiting = a == "noop" and target is not None and target != view.position(r)
        memory[r] = 0 if not waiting or stuck >= STUCK_LIMIT else stuck + 1
        if mode == "centralised" and a == "forward":
            reserved.add(cfg.ahead(view.position(r), view.heading(r)))
        joint.append(a)
    return tuple(joint)
