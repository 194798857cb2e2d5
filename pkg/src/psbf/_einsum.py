"""Einsum over operands whose axes are labelled by arbitrary hashable keys."""

from __future__ import annotations

import threading

import numpy as np

_plans: dict = {}
_lock = threading.Lock()


def _plan(label_lists, shapes, out_ids):
    """Pairwise contraction schedule for one operand structure.

    Each step lists the operand positions to pop and the label lists of the
    single einsum call that replaces them.
    """
    args = []
    for ids, shape in zip(label_lists, shapes):
        args.append(np.broadcast_to(0.0, shape))
        args.append(list(ids))
    args.append(list(out_ids))
    path = np.einsum_path(*args, optimize="greedy")[0][1:]
    current = [list(ids) for ids in label_lists]
    steps = []
    for positions in path:
        positions = tuple(sorted(positions, reverse=True))
        picked = [current.pop(p) for p in positions]
        rest = set(out_ids).union(*map(set, current))
        seen = []
        for ids in picked:
            for i in ids:
                if i in rest and i not in seen:
                    seen.append(i)
        if not current:
            seen = list(out_ids)
        steps.append((positions, picked, seen))
        current.append(seen)
    return steps


def contract(operands, output):
    """Sum-product of ``operands`` keeping the axes named in ``output``.

    ``operands`` is a sequence of ``(array, keys)`` pairs where ``keys`` names
    each axis of ``array``.  A greedy pairwise schedule is computed once per
    label pattern and shape signature and replayed afterwards.
    """
    labels: dict = {}
    arrays = []
    label_lists = []
    for arr, keys in operands:
        arrays.append(arr)
        label_lists.append(tuple(labels.setdefault(k, len(labels)) for k in keys))
    out_ids = tuple(labels[k] for k in output)
    if len(arrays) <= 2:
        args = []
        for arr, ids in zip(arrays, label_lists):
            args += [arr, list(ids)]
        return np.einsum(*args, list(out_ids))
    key = (tuple(label_lists), tuple(a.shape for a in arrays), out_ids)
    steps = _plans.get(key)
    if steps is None:
        steps = _plan(label_lists, [a.shape for a in arrays], out_ids)
        with _lock:
            if len(_plans) > 100_000:
                _plans.clear()
            _plans[key] = steps
    for positions, picked, result in steps:
        args = []
        for p, ids in zip(positions, picked):
            args += [arrays.pop(p), ids]
        arrays.append(np.einsum(*args, result))
    return arrays[0]
