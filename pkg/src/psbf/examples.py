"""Small hand-built processes used in the docs, tests and shipped specs."""

from __future__ import annotations

import numpy as np

from .dbn import CPT, ActionDBN, Process, VariableSpec, x1, xt, y


def _noisy_sensor(d: int, accuracy: float) -> np.ndarray:
    t = np.full((d, d), (1 - accuracy) / (d - 1))
    np.fill_diagonal(t, accuracy)
    return t


def robot_arm(joints: int = 3, positions: int = 4, p_turn: float = 0.9,
              accuracy: float = 0.85) -> Process:
    """Planar arm whose state is each link's absolute orientation.

    Action ``turn<i>`` rotates link ``i`` one notch with probability
    ``p_turn``; every outer link is carried along by exactly the same
    rotation, so it changes only when its inner neighbour does.  Links inside
    the turned joint never move.  Each link has its own noisy encoder.
    """
    d = positions
    names = [f"theta{i + 1}" for i in range(joints)]
    state = tuple(VariableSpec(n, d) for n in names)
    obs = tuple(VariableSpec(f"enc{i + 1}", d) for i in range(joints))
    sensors = [CPT(y(i), (x1(i),), _noisy_sensor(d, accuracy)) for i in range(joints)]

    follow = np.zeros((d, d, d, d))  # (own^t, inner^t, inner^{t+1}, own^{t+1})
    for own in range(d):
        for a in range(d):
            for b in range(d):
                follow[own, a, b, (own + b - a) % d] = 1.0
    rotate = np.zeros((d, d))
    for v in range(d):
        rotate[v, v] += 1 - p_turn
        rotate[v, (v + 1) % d] += p_turn

    actions = []
    for k in range(joints):
        cpts = list(sensors)
        for i in range(joints):
            if i < k:
                cpts.append(CPT(x1(i), (xt(i),), np.eye(d)))
            elif i == k:
                cpts.append(CPT(x1(i), (xt(i),), rotate))
            else:
                cpts.append(CPT(x1(i), (xt(i), xt(i - 1), x1(i - 1)), follow.reshape(d ** 3, d)))
        actions.append(ActionDBN.from_cpts(f"turn{k + 1}", state, obs, cpts))
    clusters = [[i] for i in range(joints)]
    return Process(f"arm{joints}", state, obs, tuple(actions),
                   {"default": [list(range(joints))], "singletons": clusters})


def swap_process(accuracy: float = 0.9) -> Process:
    """Two binary variables that exchange values at every step."""
    state = (VariableSpec("x1", 2), VariableSpec("x2", 2))
    obs = (VariableSpec("o1", 2),)
    copy = np.eye(2)
    # x_i^{t+1} = x_j^t for j != i
    cpts = [
        CPT(x1(0), (xt(0), xt(1)), np.kron(np.ones((2, 1)), copy)),
        CPT(x1(1), (xt(0), xt(1)), np.kron(copy, np.ones((2, 1)))),
        CPT(y(0), (x1(0),), _noisy_sensor(2, accuracy)),
    ]
    dbn = ActionDBN.from_cpts("swap", state, obs, cpts)
    return Process("swap", state, obs, (dbn,), {"default": [[0, 1]]})


__all__ = ["robot_arm", "swap_process"]
