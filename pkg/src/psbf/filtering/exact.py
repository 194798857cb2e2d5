"""Exact filtering over the dense joint state space."""

from __future__ import annotations

import numpy as np

from .._einsum import contract
from ..dbn import X, XT, ActionDBN, state_space_size, x1, xt, y
from .belief import ImpossibleObservationError, JointBelief

DEFAULT_CAP = 2 ** 20


def exact_predict(belief: JointBelief, dbn: ActionDBN) -> np.ndarray:
    """Push the joint through the transition model (no observation)."""
    ops = [(belief.probs, [xt(i) for i in range(dbn.n)])]
    for i in range(dbn.n):
        ops.append((dbn.tensor(x1(i)), list(dbn.parents(x1(i))) + [x1(i)]))
    return contract(ops, [x1(i) for i in range(dbn.n)])


def likelihood(dbn: ActionDBN, o) -> np.ndarray:
    """Observation likelihood of ``o`` as a tensor over the full state space."""
    ops = []
    for j in range(dbn.m):
        cpt = dbn.cpt(y(j))
        index = tuple(slice(None) if p.kind == X else int(o[p.index]) for p in cpt.parents)
        ops.append((dbn.tensor(y(j))[index + (int(o[j]),)],
                    [p for p in cpt.parents if p.kind == X]))
    ops.append((np.ones(tuple(dbn.domains(x1(i) for i in range(dbn.n)))),
                [x1(i) for i in range(dbn.n)]))
    return contract(ops, [x1(i) for i in range(dbn.n)])


def exact_step(belief: JointBelief, dbn: ActionDBN, o, cap: int = DEFAULT_CAP) -> JointBelief:
    """Exact Bayes filter update of a dense joint belief."""
    if state_space_size(dbn) > cap:
        raise ValueError(f"state space of {state_space_size(dbn)} exceeds the exact cap {cap}")
    post = exact_predict(belief, dbn) * likelihood(dbn, o)
    z = post.sum()
    if not z > 0:
        raise ImpossibleObservationError("observation has zero probability under the exact belief")
    return JointBelief(post / z)
