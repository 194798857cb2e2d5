"""Factored model of a grid warehouse with robots, pods and workstations.

State variables, robots first:

* ``pos_r``    cell id of robot ``r`` (``y * width + x``)
* ``head_r``   heading of robot ``r`` (0 north, 1 east, 2 south, 3 west)
* ``loaded_r`` whether robot ``r`` is carrying a pod
* ``pod_p``    location of pod ``p``: a cell id, or ``cells + r`` while robot
  ``r`` carries it (the pod then moves with its carrier implicitly)

Observations: per robot a noisy position, heading and load reading, and per
pod a noisy location reading (shelf tags), which is either correct or one of
the neighbouring values.

One network is built per joint action.  A pod only changes under a load or
unload aimed at it, so under every other joint action it keeps its value.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from ..clustering import Clustering
from ..dbn import CPT, ActionDBN, Process, VariableSpec, x1, xt, y

HEADINGS = ("N", "E", "S", "W")
_STEP = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}

MOTIONS = ("noop", "forward", "turn-left", "turn-right")
_POD_ACTION = re.compile(r"(load|unload)\((\d+)\)")


@dataclass(frozen=True)
class WarehouseConfig:
    width: int = 8
    height: int = 6
    workstations: tuple = ((0, 1), (0, 4))
    pods: tuple = tuple((x, y) for y in range(1, 5) for x in range(2, 6))
    robots: tuple = ((7, 0, 3), (7, 2, 3), (7, 3, 3), (7, 5, 3))  # (x, y, heading)
    p_move: float = 0.95
    p_turn: float = 0.95
    p_load: float = 0.9
    sensor_pos: float = 0.9
    sensor_heading: float = 0.9
    sensor_load: float = 0.9
    sensor_pod: float = 0.9
    mode: str = "centralised"
    task_seed: int = 0
    tasks: tuple | None = None  # fixed (pod, workstation) list instead of random tasks
    task_timeout: int = 40  # steps after assignment before a task is abandoned

    def __post_init__(self):
        inside = lambda x, yy: 0 <= x < self.width and 0 <= yy < self.height  # noqa: E731
        cells = [tuple(c[:2]) for c in (*self.workstations, *self.pods, *self.robots)]
        if not all(inside(*c) for c in cells):
            raise ValueError("every workstation, pod and robot must lie inside the grid")
        entities = [tuple(c[:2]) for c in (*self.pods, *self.robots)]
        if len(set(entities)) != len(entities):
            raise ValueError("pods and robots must start in distinct cells")
        if any(tuple(r[:2]) in {tuple(w) for w in self.workstations} for r in self.robots):
            raise ValueError("robots may not start on a workstation")
        if any(not 0 <= r[2] < 4 for r in self.robots):
            raise ValueError("robot headings must be 0..3")
        for name in ("p_move", "p_turn", "p_load", "sensor_pos", "sensor_heading",
                     "sensor_load", "sensor_pod", "task_timeout"):
            if name == "task_timeout":
                if self.task_timeout < 1:
                    raise ValueError("task_timeout must be >= 1")
            elif not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability")
        if self.mode not in ("centralised", "decentralised"):
            raise ValueError("mode must be 'centralised' or 'decentralised'")
        if not self.robots or not self.workstations:
            raise ValueError("need at least one robot and one workstation")

    @property
    def cells(self) -> int:
        return self.width * self.height

    @property
    def R(self) -> int:
        return len(self.robots)

    @property
    def P(self) -> int:
        return len(self.pods)

    def cell(self, x: int, yy: int) -> int:
        return yy * self.width + x

    def coords(self, c: int) -> tuple[int, int]:
        return c % self.width, c // self.width

    def ahead(self, c: int, h: int) -> int | None:
        x, yy = self.coords(c)
        dx, dy = _STEP[h]
        nx, ny = x + dx, yy + dy
        if 0 <= nx < self.width and 0 <= ny < self.height:
            return self.cell(nx, ny)
        return None

    @cached_property
    def _adjacency(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(n for h in range(4) if (n := self.ahead(c, h)) is not None)
                     for c in range(self.cells))

    def neighbours(self, c: int) -> tuple[int, ...]:
        return self._adjacency[c]

    def workstation_cells(self) -> tuple[int, ...]:
        return tuple(self.cell(*w) for w in self.workstations)


PRESETS = {"kiva16": WarehouseConfig()}


def preset(name: str = "kiva16", **overrides) -> WarehouseConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown warehouse preset {name!r}") from None
    return replace(base, **overrides)


def parse_action(text: str) -> tuple[str, int | None]:
    """``"forward"`` -> ``("forward", None)``, ``"load(3)"`` -> ``("load", 3)``."""
    if text in MOTIONS:
        return text, None
    m = _POD_ACTION.fullmatch(text)
    if not m:
        raise ValueError(f"unknown robot action {text!r}")
    return m.group(1), int(m.group(2))


def _deterministic(rows_to: np.ndarray, d: int) -> np.ndarray:
    t = np.zeros((rows_to.size, d))
    t[np.arange(rows_to.size), rows_to] = 1.0
    return t


def _move(stay: np.ndarray, go: np.ndarray, p: float, d: int) -> np.ndarray:
    """Rows that reach ``go`` with probability ``p`` and otherwise ``stay``."""
    t = np.zeros((stay.size, d))
    rows = np.arange(stay.size)
    t[rows, stay] += 1.0 - p
    t[rows, go] += p
    return t


@dataclass(eq=False)
class WarehouseModel:
    """Variables, observation model and per-joint-action networks."""

    config: WarehouseConfig
    _cpt_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        cfg = self.config
        self.n_cells = cfg.cells
        self.pod_domain = cfg.cells + cfg.R
        sv = []
        for r in range(cfg.R):
            sv += [VariableSpec(f"pos{r}", cfg.cells), VariableSpec(f"head{r}", 4),
                   VariableSpec(f"loaded{r}", 2)]
        sv += [VariableSpec(f"pod{p}", self.pod_domain) for p in range(cfg.P)]
        ov = []
        for r in range(cfg.R):
            ov += [VariableSpec(f"see_pos{r}", cfg.cells), VariableSpec(f"see_head{r}", 4),
                   VariableSpec(f"see_loaded{r}", 2)]
        ov += [VariableSpec(f"see_pod{p}", self.pod_domain) for p in range(cfg.P)]
        self.state_vars = tuple(sv)
        self.obs_vars = tuple(ov)
        self._obs_cpts = self._observation_cpts()
        self.build = lru_cache(maxsize=4096)(self._build)
        self.build_mixture = lru_cache(maxsize=4096)(self._build_mixture)

    # variable indices --------------------------------------------------
    @staticmethod
    def pos(r: int) -> int:
        return 3 * r

    @staticmethod
    def head(r: int) -> int:
        return 3 * r + 1

    @staticmethod
    def loaded(r: int) -> int:
        return 3 * r + 2

    def pod(self, p: int) -> int:
        return 3 * self.config.R + p

    def carried_by(self, r: int) -> int:
        """Pod-location value meaning "on robot ``r``"."""
        return self.n_cells + r

    @property
    def n(self) -> int:
        return len(self.state_vars)

    @property
    def m(self) -> int:
        return len(self.obs_vars)

    # states ------------------------------------------------------------
    def initial_state(self) -> np.ndarray:
        cfg = self.config
        s = np.zeros(self.n, dtype=np.int64)
        for r, (x, yy, h) in enumerate(cfg.robots):
            s[self.pos(r)] = cfg.cell(x, yy)
            s[self.head(r)] = h
        for p, (x, yy) in enumerate(cfg.pods):
            s[self.pod(p)] = cfg.cell(x, yy)
        return s

    def clustering(self) -> Clustering:
        cfg = self.config
        clusters = [(self.pos(r), self.head(r), self.loaded(r)) for r in range(cfg.R)]
        clusters += [(self.pod(p),) for p in range(cfg.P)]
        return Clustering(tuple(clusters), self.n)

    # CPT pieces ---------------------------------------------------------
    def _cached(self, key, make):
        c = self._cpt_cache.get(key)
        if c is None:
            c = self._cpt_cache[key] = make()
        return c

    def _identity(self, i: int) -> CPT:
        d = self.state_vars[i].domain_size
        return self._cached(("id", i), lambda: CPT(x1(i), (xt(i),), np.eye(d)))

    def _forward(self, r: int) -> CPT:
        cfg = self.config
        C = self.n_cells

        def make():
            stay = np.repeat(np.arange(C), 4)
            go = np.array([a if (a := cfg.ahead(c, h)) is not None else c
                           for c in range(C) for h in range(4)])
            return CPT(x1(self.pos(r)), (xt(self.pos(r)), xt(self.head(r))),
                       _move(stay, go, cfg.p_move, C))
        return self._cached(("fwd", r), make)

    def _turn(self, r: int, delta: int) -> CPT:
        h = np.arange(4)
        return self._cached(("turn", r, delta), lambda: CPT(
            x1(self.head(r)), (xt(self.head(r)),), _move(h, (h + delta) % 4, self.config.p_turn, 4)))

    def _pod_load(self, r: int, p: int) -> CPT:
        C, D = self.n_cells, self.pod_domain

        def make():
            loc, pos, ld = (a.ravel() for a in np.indices((D, C, 2)))
            go = np.where((ld == 0) & (loc == pos), self.carried_by(r), loc)
            t = _move(loc, go, self.config.p_load, D)
            return CPT(x1(self.pod(p)), (xt(self.pod(p)), xt(self.pos(r)), xt(self.loaded(r))), t)
        return self._cached(("load", r, p), make)

    def _pod_unload(self, r: int, p: int) -> CPT:
        C, D = self.n_cells, self.pod_domain

        def make():
            loc, pos = (a.ravel() for a in np.indices((D, C)))
            go = np.where(loc == self.carried_by(r), pos, loc)
            t = _move(loc, go, self.config.p_load, D)
            return CPT(x1(self.pod(p)), (xt(self.pod(p)), xt(self.pos(r))), t)
        return self._cached(("unload", r, p), make)

    def _loaded_follows(self, r: int, p: int) -> CPT:
        # keeps its value unless pod p changed; then tracks whether r holds it
        D = self.pod_domain
        mark = self.carried_by(r)

        def make():
            ld, before, after = (a.ravel() for a in np.indices((2, D, D)))
            val = np.where(before == after, ld,
                           np.where(after == mark, 1, np.where(before == mark, 0, ld)))
            return CPT(x1(self.loaded(r)),
                       (xt(self.loaded(r)), xt(self.pod(p)), x1(self.pod(p))),
                       _deterministic(val, 2))
        return self._cached(("follows", r, p), make)

    def robot_cpts(self, r: int, action: str) -> dict:
        """CPTs of robot ``r``'s variables (and its target pod) under ``action``."""
        kind, p = parse_action(action)
        if p is not None and not 0 <= p < self.config.P:
            raise ValueError(f"pod {p} does not exist")
        out = {x1(self.pos(r)): self._identity(self.pos(r)),
               x1(self.head(r)): self._identity(self.head(r)),
               x1(self.loaded(r)): self._identity(self.loaded(r))}
        if kind == "forward":
            out[x1(self.pos(r))] = self._forward(r)
        elif kind == "turn-left":
            out[x1(self.head(r))] = self._turn(r, 3)
        elif kind == "turn-right":
            out[x1(self.head(r))] = self._turn(r, 1)
        elif kind in ("load", "unload"):
            make = self._pod_load if kind == "load" else self._pod_unload
            out[x1(self.pod(p))] = make(r, p)
            out[x1(self.loaded(r))] = self._loaded_follows(r, p)
        return out

    def _noisy_location(self, d: int, q: float) -> np.ndarray:
        # correct with probability q, otherwise a uniformly chosen neighbour;
        # carrier markers neighbour each other
        cfg = self.config
        C = self.n_cells
        t = np.zeros((d, d))
        for v in range(d):
            nb = cfg.neighbours(v) if v < C else [w for w in range(C, d) if w != v]
            if nb:
                t[v, v] = q
                t[v, list(nb)] += (1.0 - q) / len(nb)
            else:
                t[v, v] = 1.0
        return t

    def _observation_cpts(self) -> list[CPT]:
        cfg = self.config
        cpts = []
        pos_table = self._noisy_location(self.n_cells, cfg.sensor_pos)
        for r in range(cfg.R):
            cpts.append(CPT(y(3 * r), (x1(self.pos(r)),), pos_table))
            h = np.full((4, 4), (1.0 - cfg.sensor_heading) / 3)
            np.fill_diagonal(h, cfg.sensor_heading)
            cpts.append(CPT(y(3 * r + 1), (x1(self.head(r)),), h))
            q = cfg.sensor_load
            cpts.append(CPT(y(3 * r + 2), (x1(self.loaded(r)),), [[q, 1 - q], [1 - q, q]]))
        pod_table = self._noisy_location(self.pod_domain, cfg.sensor_pod)
        for p in range(cfg.P):
            cpts.append(CPT(y(3 * cfg.R + p), (x1(self.pod(p)),), pod_table))
        return cpts

    # networks -----------------------------------------------------------
    def check_joint(self, joint: tuple[str, ...]) -> tuple[str, ...]:
        joint = tuple(joint)
        if len(joint) != self.config.R:
            raise ValueError(f"joint action needs {self.config.R} entries, got {len(joint)}")
        pods = [parse_action(a)[1] for a in joint]
        pods = [p for p in pods if p is not None]
        if len(set(pods)) != len(pods):
            raise ValueError("two robots act on the same pod")
        return joint

    def _assemble(self, name: str, per_var: dict) -> ActionDBN:
        cpts = [per_var.get(x1(i)) or self._identity(i) for i in range(self.n)]
        return ActionDBN.from_cpts(name, self.state_vars, self.obs_vars, cpts + self._obs_cpts)

    def _build(self, joint: tuple[str, ...]) -> ActionDBN:
        joint = self.check_joint(joint)
        per_var: dict = {}
        for r, a in enumerate(joint):
            per_var.update(self.robot_cpts(r, a))
        return self._assemble("|".join(joint), per_var)

    def action_dbn(self, joint) -> ActionDBN:
        """Network of ``joint`` (one action name per robot); cached."""
        return self.build(tuple(joint))

    def _build_mixture(self, robot: int, own: str, assigned: tuple) -> ActionDBN:
        """Network used by ``robot`` in decentralised mode.

        Its own action is known; every other robot ``j`` is modelled as a
        uniform mixture over the motions plus load/unload of each pod in
        ``assigned[j]`` (a pod id, a tuple of pod ids, or ``None``).
        """
        per_var = dict(self.robot_cpts(robot, own))
        for j in range(self.config.R):
            if j == robot:
                continue
            options = list(MOTIONS)
            pods = assigned[j]
            pods = () if pods is None else (pods,) if isinstance(pods, int) else pods
            for p in pods:
                if p != parse_action(own)[1]:
                    options += [f"load({p})", f"unload({p})"]
            comps = [self.robot_cpts(j, a) for a in options]
            for node in {k for c in comps for k in c}:
                per_var[node] = _mixture([c.get(node) or self._identity(node.index) for c in comps],
                                         self.state_vars)
        return self._assemble(f"r{robot}:{own}", per_var)

    def belief_dbn(self, robot: int, own: str, assigned) -> ActionDBN:
        return self.build_mixture(robot, own, tuple(
            a if a is None or isinstance(a, int) else tuple(a) for a in assigned))

    def process(self) -> Process:
        noop = self.action_dbn(("noop",) * self.config.R)
        return Process("warehouse", self.state_vars, self.obs_vars, (noop,),
                       {"default": [list(c) for c in self.clustering().clusters]})


def _mixture(cpts: list[CPT], state_vars) -> CPT:
    """Equal-weight mixture of CPTs over the union of their parents."""
    first = cpts[0]
    if all(c is first for c in cpts):
        return first
    parents: list = []
    for c in cpts:
        parents += [p for p in c.parents if p not in parents]
    dom = [state_vars[p.index].domain_size for p in parents]
    d = first.table.shape[1]
    total = np.zeros(tuple(dom) + (d,))
    for c in cpts:
        t = c.tensor([state_vars[p.index].domain_size for p in c.parents])
        axes = [parents.index(p) for p in c.parents]
        # move c's axes into the union layout and broadcast over the others
        shape = [1] * len(parents) + [d]
        for a, size in zip(axes, t.shape[:-1]):
            shape[a] = size
        order = np.argsort(axes)
        t = np.transpose(t, list(order) + [len(axes)]).reshape(shape)
        total = total + t
    return CPT(first.child, tuple(parents), (total / len(cpts)).reshape(-1, d))
