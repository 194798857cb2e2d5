"""Accuracy metrics against the exact belief."""

from __future__ import annotations

import numpy as np

from .belief import FactoredBelief, JointBelief, ParticleSet

EPSILON = 1e-12


def relative_entropy(exact: JointBelief, approx, eps: float = EPSILON) -> float:
    """KL(exact || approx) in bits.

    ``approx`` may be a :class:`FactoredBelief` (evaluated as the product of
    its factors), a :class:`ParticleSet` (its weighted histogram), a
    :class:`JointBelief` or a plain array.  ``approx`` is floored at ``eps``
    before the logarithm and terms with zero exact mass contribute nothing.
    """
    p = np.asarray(exact.probs if isinstance(exact, JointBelief) else exact, dtype=float).ravel()
    if isinstance(approx, FactoredBelief):
        q = approx.joint()
    elif isinstance(approx, ParticleSet):
        q = approx.histogram()
    elif isinstance(approx, JointBelief):
        q = approx.probs
    else:
        q = np.asarray(approx, dtype=float)
    q = q.ravel()
    if q.shape != p.shape:
        raise ValueError("beliefs are over different state spaces")
    mask = p > 0
    kl = float(np.sum(p[mask] * np.log2(p[mask] / np.maximum(q[mask], eps))))
    return max(kl, 0.0)
