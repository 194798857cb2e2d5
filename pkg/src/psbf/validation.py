"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np

from .clustering import Clustering
from .dbn import ActionDBN, Process, validate_dbn


class ModelValidationError(ValueError):
    """A process or network failed structural validation."""


def check_vector(values, specs, what: str = "vector") -> np.ndarray:
    """Integer vector matching ``specs`` in length and per-variable range."""
    v = np.asarray(values)
    if v.ndim != 1 or v.shape[0] != len(specs):
        raise ValueError(f"{what} must have shape ({len(specs)},), got {v.shape}")
    if not np.issubdtype(v.dtype, np.integer):
        if not np.all(np.equal(np.mod(v, 1), 0)):
            raise ValueError(f"{what} must contain integers")
    v = v.astype(np.int64)
    sizes = np.array([s.domain_size for s in specs])
    if np.any(v < 0) or np.any(v >= sizes):
        raise ValueError(f"{what} has values outside the variable domains")
    return v


def check_process(process: Process, validate: bool = True) -> Process:
    if not isinstance(process, Process):
        raise TypeError(f"expected a Process, got {type(process).__name__}")
    if validate:
        for dbn in process.actions:
            report = validate_dbn(dbn)
            if not report.ok:
                first = report.violations[0]
                raise ModelValidationError(f"action {dbn.action_name!r}: {first.message}")
    return process


def check_clustering(clustering, process: Process) -> Clustering:
    """Coerce ``clustering`` (a Clustering, a named clustering of the process
    or a list of index lists) into a covering :class:`Clustering`."""
    if clustering is None:
        clustering = "default" if "default" in process.clusterings else "components"
    if isinstance(clustering, str):
        if clustering in process.clusterings:
            clustering = Clustering(tuple(map(tuple, process.clusterings[clustering])), process.n)
        else:
            from .clustering import auto_cluster

            clustering = auto_cluster(process.actions, clustering)
    elif not isinstance(clustering, Clustering):
        clustering = Clustering(tuple(map(tuple, clustering)), process.n)
    if clustering.n_vars != process.n or not clustering.covers:
        raise ValueError("clustering must cover every state variable exactly by index")
    if clustering.a1_satisfied is None and process.actions:
        clustering = clustering.with_status(process.actions)
    return clustering


def check_action(process: Process, action) -> ActionDBN:
    if isinstance(action, ActionDBN):
        if action.n != process.n or action.m != process.m:
            raise ValueError("action network does not match the process variables")
        return action
    return process.action(action)
