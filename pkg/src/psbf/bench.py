"""Benchmark grid over synthetic processes, with CSV and table reporting.

For every (seed, preset, passivity) cell one process is generated, a single
ground-truth trajectory is sampled, and every requested filter (at every
thread count) is stepped along it.  Filters alternate their order at each
step and all cells of a seed run back to back, so slow drift in machine
speed hits every configuration alike instead of biasing one of them.
"""

from __future__ import annotations

import csv
import gc
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import jsonschema
import numpy as np

from .dbn import sample_observation, sample_transition
from .estimators import make_filter
from .filtering import relative_entropy
from .synthgen import PRESETS, generate, preset

log = logging.getLogger(__name__)

FILTER_KINDS = ("psbf", "bk", "pf", "exact")
KL_CAP = 2 ** 10
PF_BOUNDS = (16, 2 ** 16)


@dataclass(frozen=True)
class BenchPlan:
    presets: tuple = ("S", "M")
    passivity: tuple = (0, 20, 40, 60)
    filters: tuple = ("psbf", "bk")
    processes: int = 50
    threads: tuple = (1,)
    steps: int = 100
    seed: int = 0
    pf_match: str | None = "accuracy"  # "accuracy", "speed" or None (fixed count)
    pf_particles: int = 1000
    kl_cap: int = KL_CAP
    no_timing: bool = False
    on_zero_likelihood: str = "error"
    workers: int = 1

    def __post_init__(self):
        for name in ("presets", "passivity", "filters", "threads"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValueError(f"plan has an empty {name} axis")
        if self.processes < 1 or self.steps < 1:
            raise ValueError("processes and steps must be >= 1")
        unknown = [p for p in self.presets if p.upper() not in PRESETS]
        if unknown:
            raise ValueError(f"unknown presets {unknown}; choose from {sorted(PRESETS)}")
        bad = [f for f in self.filters if f not in FILTER_KINDS]
        if bad:
            raise ValueError(f"unknown filters {bad}; choose from {FILTER_KINDS}")
        if self.pf_match not in (None, "accuracy", "speed"):
            raise ValueError("pf_match must be 'accuracy', 'speed' or None")
        if any(t < 1 for t in self.threads) or self.workers < 1:
            raise ValueError("thread and worker counts must be >= 1")


@dataclass
class BenchmarkRecord:
    process_id: str
    preset: str
    passivity_pct: float
    filter: str
    threads: int
    step: int
    kl_bits: float | None
    transition_us: float
    observation_us: float
    overhead_us: float
    factors_skipped: int
    factors_total: int

    @property
    def step_us(self) -> float:
        return self.transition_us + self.observation_us + self.overhead_us


COLUMNS = tuple(f.name for f in fields(BenchmarkRecord))

_number = {"type": "number", "minimum": 0}
RECORD_SCHEMA = {
    "type": "object",
    "required": list(COLUMNS),
    "additionalProperties": False,
    "properties": {
        "process_id": {"type": "string", "minLength": 1},
        "preset": {"enum": sorted(PRESETS)},
        "passivity_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "filter": {"enum": list(FILTER_KINDS)},
        "threads": {"type": "integer", "minimum": 1},
        "step": {"type": "integer", "minimum": 0},
        "kl_bits": {"type": ["number", "null"], "minimum": 0},
        "transition_us": _number,
        "observation_us": _number,
        "overhead_us": _number,
        "factors_skipped": {"type": "integer", "minimum": 0},
        "factors_total": {"type": "integer", "minimum": 0},
    },
}


def _trajectory(process, steps: int, rng) -> list[tuple[int, np.ndarray]]:
    # actions drawn uniformly at every step
    state = np.array([rng.integers(v.domain_size) for v in process.state_vars])
    out = []
    for _ in range(steps):
        a = int(rng.integers(len(process.actions)))
        dbn = process.actions[a]
        state = sample_transition(dbn, state, rng)
        out.append((a, sample_observation(dbn, state, rng)))
    return out


def _exact_beliefs(process, traj, cap: int):
    size = math.prod(v.domain_size for v in process.state_vars)
    if size > cap:
        return None
    f = make_filter("exact", cap=cap).fit(process)
    out = []
    for a, o in traj:
        f.step(a, o)
        out.append(f.belief_)
    return out


def _filter(kind: str, process, threads: int, plan: BenchPlan, n_particles: int, seed):
    f = make_filter(kind, threads=threads, n_particles=n_particles, random_state=seed,
                    on_zero_likelihood=plan.on_zero_likelihood, cap=max(plan.kl_cap, 2))
    if kind == "exact":
        return f.fit(process)
    return f.fit(process, clustering="default")


def _pf_cost(process, traj, exact, plan, n: int, seed, target: str) -> float:
    """Mean KL (accuracy) or mean step time (speed) of a PF with ``n`` particles."""
    f = _filter("pf", process, 1, plan, n, seed)
    kls, times = [], []
    for t, (a, o) in enumerate(traj):
        s = f.step(a, o)
        times.append(s.total_time)
        if target == "accuracy":
            kls.append(relative_entropy(exact[t], f.belief_))
    return float(np.mean(kls if target == "accuracy" else times))


def calibrate_particles(process, traj, exact, plan: BenchPlan, seed) -> int:
    """Particle count matching the factored filters, found by bisection on log N.

    ``accuracy`` matches BK's mean KL along ``traj`` (needs ``exact``);
    ``speed`` matches PSBF's mean step time.  Falls back to speed when no
    exact beliefs are available.
    """
    target = plan.pf_match
    if target == "accuracy" and exact is None:
        log.warning("no exact oracle for %s; matching PF on speed instead", process.name)
        target = "speed"
    ref_kind = "bk" if target == "accuracy" else "psbf"
    ref = _filter(ref_kind, process, 1, plan, 0, seed)
    vals = []
    for t, (a, o) in enumerate(traj):
        s = ref.step(a, o)
        vals.append(relative_entropy(exact[t], ref.belief_) if target == "accuracy" else s.total_time)
    goal = float(np.mean(vals))
    lo, hi = (math.log2(b) for b in PF_BOUNDS)
    # cost falls with N for accuracy and rises with N for speed
    for _ in range(8):
        mid = (lo + hi) / 2
        cost = _pf_cost(process, traj, exact, plan, int(round(2 ** mid)), seed, target)
        too_many = cost < goal if target == "accuracy" else cost > goal
        lo, hi = (lo, mid) if too_many else (mid, hi)
    return int(round(2 ** ((lo + hi) / 2)))


def _run_seed(plan: BenchPlan, i: int) -> list[BenchmarkRecord]:
    records = []
    for pname in plan.presets:
        for pct in plan.passivity:
            pseed = plan.seed * 100_003 + i
            process = generate(preset(pname, passivity_pct=pct, seed=pseed))
            rng = np.random.default_rng([pseed, 1])
            traj = _trajectory(process, plan.steps, rng)
            exact = _exact_beliefs(process, traj, plan.kl_cap)
            n_pf = plan.pf_particles
            if "pf" in plan.filters and plan.pf_match is not None:
                n_pf = calibrate_particles(process, traj, exact, plan, [pseed, 2])
            runs = [(k, w, _filter(k, process, w, plan, n_pf, [pseed, 3]))
                    for k in plan.filters for w in plan.threads]
            gc_was = gc.isenabled()
            gc.disable()
            try:
                for t, (a, o) in enumerate(traj):
                    for k, w, f in (runs if t % 2 else runs[::-1]):
                        s = f.step(a, o)
                        kl = None if exact is None else relative_entropy(exact[t], f.belief_)
                        us = (0.0, 0.0, 0.0) if plan.no_timing else (
                            s.transition_time * 1e6, s.observation_time * 1e6, s.overhead_time * 1e6)
                        records.append(BenchmarkRecord(
                            process.name, pname.upper(), float(pct), k, w, t, kl, *us,
                            s.factors_skipped, s.factors_total))
            finally:
                if gc_was:
                    gc.enable()
    return records


def _sort_key(r: BenchmarkRecord):
    return (r.preset, r.passivity_pct, FILTER_KINDS.index(r.filter), r.threads, r.process_id, r.step)


def run_bench(plan: BenchPlan) -> list[BenchmarkRecord]:
    """All per-step records of ``plan``, in a fixed order."""
    if plan.workers > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            parts = list(pool.map(_run_seed, [plan] * plan.processes, range(plan.processes)))
    else:
        parts = [_run_seed(plan, i) for i in range(plan.processes)]
    return sorted((r for part in parts for r in part), key=_sort_key)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def parse_records(text: str) -> list[BenchmarkRecord]:
    """Inverse of :func:`records_csv`; each row is checked against the schema."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        doc = {
            "process_id": row["process_id"], "preset": row["preset"],
            "passivity_pct": float(row["passivity_pct"]), "filter": row["filter"],
            "threads": int(row["threads"]), "step": int(row["step"]),
            "kl_bits": float(row["kl_bits"]) if row["kl_bits"] else None,
            "transition_us": float(row["transition_us"]),
            "observation_us": float(row["observation_us"]),
            "overhead_us": float(row["overhead_us"]),
            "factors_skipped": int(row["factors_skipped"]),
            "factors_total": int(row["factors_total"]),
        }
        jsonschema.validate(doc, RECORD_SCHEMA)
        out.append(BenchmarkRecord(**doc))
    return out


def validate_records(records) -> None:
    for r in records:
        jsonschema.validate(asdict(r), RECORD_SCHEMA)


@dataclass
class SummaryRow:
    preset: str
    passivity_pct: float
    filter: str
    threads: int
    processes: int
    kl_final_mean: float | None
    kl_final_std: float | None
    step_us_mean: float
    skipped_fraction_mean: float
    extra: dict = field(default_factory=dict, repr=False)


SUMMARY_COLUMNS = ("preset", "passivity_pct", "filter", "threads", "processes", "kl_final_mean",
                   "kl_final_std", "step_us_mean", "skipped_fraction_mean")


def summarize(records) -> list[SummaryRow]:
    """Aggregate per (preset, passivity, filter, threads).

    KL statistics use each process's final step; the standard deviation is
    the population one, so a single process gives 0.
    """
    records = list(records)
    if not records:
        raise ValueError("nothing to summarize")
    groups: dict = {}
    for r in records:
        groups.setdefault((r.preset, r.passivity_pct, r.filter, r.threads), []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], FILTER_KINDS.index(k[2]), k[3])):
        rs = groups[key]
        last: dict = {}
        for r in rs:
            if r.process_id not in last or r.step > last[r.process_id].step:
                last[r.process_id] = r
        finals = [r.kl_bits for r in last.values()]
        have_kl = all(k is not None for k in finals)
        skipped = [r.factors_skipped / r.factors_total for r in rs if r.factors_total]
        rows.append(SummaryRow(
            *key, len(last),
            float(np.mean(finals)) if have_kl else None,
            float(np.std(finals)) if have_kl else None,
            float(np.mean([r.step_us for r in rs])),
            float(np.mean(skipped)) if skipped else 0.0,
        ))
    return rows


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def format_table(header, rows) -> str:
    """Left-aligned plain-text table."""
    cells = [[str(h) for h in header]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * wd for wd in widths))
    return "\n".join(lines) + "\n"


def summary_table(rows) -> str:
    def num(v, spec):
        return "-" if v is None else format(v, spec)

    return format_table(SUMMARY_COLUMNS, [
        (r.preset, f"{r.passivity_pct:g}", r.filter, r.threads, r.processes,
         num(r.kl_final_mean, ".5f"), num(r.kl_final_std, ".5f"), num(r.step_us_mean, ".1f"),
         num(r.skipped_fraction_mean, ".3f"))
        for r in rows])


__all__ = ["BenchPlan", "BenchmarkRecord", "COLUMNS", "RECORD_SCHEMA", "SummaryRow",
           "calibrate_particles", "format_table", "parse_records", "records_csv", "run_bench",
           "summarize", "summary_csv", "summary_table", "validate_records"]
