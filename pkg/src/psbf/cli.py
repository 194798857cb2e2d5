"""Command-line interface: ``psbf <command> ...``.

Exit status is 0 on success, 1 when the input (a process file, a clustering
or the command line itself) is invalid, and 2 when a model degenerates at
run time, e.g. an observation with zero likelihood.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, spec_io, synthgen
from .clustering import auto_cluster, check_a1
from .dbn import sample_observation, sample_transition, validate_dbn
from .estimators import make_filter
from .filtering import DegenerateModelError, relative_entropy
from .filtering.factored import ZERO_POLICIES
from .passivity import detect_all
from .validation import ModelValidationError, check_clustering

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE = 0, 1, 2
RUN_COLUMNS = ("step", "action", "filter", "transition_us", "observation_us", "overhead_us",
               "factors_skipped", "kl_bits")
RUN_KL_CAP = 2 ** 16

log = logging.getLogger("psbf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    """Flags accepted both before and after the subcommand."""
    p = _Parser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=d(1), help="filter worker threads (default 1)")
    p.add_argument("--format", choices=("csv", "table"), default=d(None),
                   help="output format (default table, csv for run)")
    p.add_argument("--on-zero-likelihood", choices=ZERO_POLICIES, default=d("error"),
                   help="what filters do with an impossible observation")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _rows_out(header, rows, fmt: str | None) -> str:
    if fmt in (None, "table"):
        return bench.format_table(header, rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    process = spec_io.load(args.process)
    problems = []
    for dbn in process.actions:
        problems += [f"action {dbn.action_name}: {v.kind}: {v.message}" for v in validate_dbn(dbn)]
    for name, clusters in process.clusterings.items():
        try:
            c = check_clustering(clusters, process)
        except ValueError as exc:
            problems.append(f"clustering {name}: {exc}")
            continue
        if not c.a2_satisfied:
            print(f"note: clustering {name} has overlapping clusters (approximate filtering)")
        if not c.a1_satisfied:
            print(f"note: clustering {name} has cross-cluster intra-slice edges (marginalized)")
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        print(f"{args.process}: INVALID ({len(problems)} problems)")
        return EXIT_INVALID
    print(f"{args.process}: ok ({process.n} state vars, {process.m} observation vars, "
          f"{len(process.actions)} actions)")
    return EXIT_OK


def passivity_rows(process) -> list[tuple]:
    names = [v.name for v in process.state_vars]
    rows = []
    for dbn in process.actions:
        report = detect_all(dbn)
        for v in report.verdicts:
            phi = ";".join(names[j] for j in sorted(v.phi)) if v.passive else ""
            rows.append((dbn.action_name, names[v.var_index], v.status.value, phi,
                         "yes" if v.var_index in report.reachable else "no"))
    return rows


PASSIVITY_COLUMNS = ("action", "variable", "verdict", "phi", "reachable")


def cmd_passivity(args) -> int:
    process = spec_io.load(args.process)
    _require_valid(process)
    _emit(_rows_out(PASSIVITY_COLUMNS, passivity_rows(process), args.format), args.output)
    return EXIT_OK


def cmd_cluster(args) -> int:
    process = spec_io.load(args.process)
    _require_valid(process)
    c = check_clustering(args.strategy, process)
    names = [v.name for v in process.state_vars]
    a1 = len(check_a1(c, process.actions))
    status_a1 = "satisfied" if not a1 else f"violated ({a1} edges)"
    status_a2 = "satisfied" if c.a2_satisfied else "violated"
    rows = [(k, len(cl), ";".join(names[i] for i in cl), status_a1, status_a2)
            for k, cl in enumerate(c.clusters)]
    _emit(_rows_out(("cluster", "size", "variables", "A1", "A2"), rows, args.format), args.output)
    if args.save:
        clusterings = dict(process.clusterings)
        clusterings[args.save] = [list(cl) for cl in c.clusters]
        updated = type(process)(process.name, process.state_vars, process.obs_vars,
                                process.actions, clusterings)
        spec_io.dump(updated, args.process)
    return EXIT_OK


def _gen_params(args, seed: int) -> synthgen.SynthParams:
    extra = {k: getattr(args, k) for k in ("actions", "determinism", "intra_edge_prob")
             if getattr(args, k) is not None}
    return synthgen.preset(args.preset, passivity_pct=args.passivity, seed=seed, **extra)


def cmd_gen(args) -> int:
    if args.count is None:
        _emit(spec_io.dumps(synthgen.generate(_gen_params(args, args.seed))), args.output)
        return EXIT_OK
    if not args.output:
        raise UsageError("batch mode (--count) needs -o DIRECTORY")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for seed in range(args.seed, args.seed + args.count):
        process = synthgen.generate(_gen_params(args, seed))
        spec_io.dump(process, out / f"{process.name}.spec")
    print(f"wrote {args.count} processes to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    process = spec_io.load(args.process)
    _require_valid(process)
    rng = np.random.default_rng([args.seed, 1])
    state = np.array([rng.integers(v.domain_size) for v in process.state_vars])
    f = make_filter(args.filter, threads=args.threads, n_particles=args.particles,
                    random_state=[args.seed, 2], on_zero_likelihood=args.on_zero_likelihood)
    f.fit(process, clustering=args.clustering)
    size = int(np.prod([v.domain_size for v in process.state_vars], dtype=np.int64))
    oracle = make_filter("exact", cap=args.kl_cap).fit(process) if size <= args.kl_cap else None
    rows = []
    for t in range(args.steps):
        a = int(rng.integers(len(process.actions)))
        dbn = process.actions[a]
        state = sample_transition(dbn, state, rng)
        o = sample_observation(dbn, state, rng)
        s = f.step(a, o)
        kl = ""
        if oracle is not None:
            oracle.step(a, o)
            kl = repr(relative_entropy(oracle.belief_, f.belief_))
        us = [0.0, 0.0, 0.0] if args.no_timing else [
            s.transition_time * 1e6, s.observation_time * 1e6, s.overhead_time * 1e6]
        rows.append((t, dbn.action_name, args.filter, *(f"{u:.1f}" for u in us),
                     s.factors_skipped, kl))
    _emit(_rows_out(RUN_COLUMNS, rows, args.format or "csv"), args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    plan = bench.BenchPlan(
        presets=tuple(args.presets), passivity=tuple(args.passivity), filters=tuple(args.filters),
        processes=args.processes, threads=tuple(args.thread_counts or [args.threads]),
        steps=args.steps, seed=args.seed,
        pf_match=None if args.pf_match == "none" else args.pf_match,
        pf_particles=args.particles, kl_cap=args.kl_cap, no_timing=args.no_timing,
        on_zero_likelihood=args.on_zero_likelihood, workers=args.workers)
    records = bench.run_bench(plan)
    if args.output:
        Path(args.output).write_text(bench.records_csv(records))
    rows = bench.summarize(records)
    if args.summary:
        Path(args.summary).write_text(bench.summary_csv(rows))
    sys.stdout.write(bench.summary_table(rows) if args.format != "csv" else bench.summary_csv(rows))
    return EXIT_OK


def cmd_warehouse(args) -> int:
    from .warehouse import preset, simulate, trace_csv

    config = preset(args.preset, mode=args.mode)
    res = simulate(config, args.filter, args.steps, args.seed, threads=args.threads,
                   n_particles=args.particles, no_timing=args.no_timing,
                   on_zero_likelihood=args.on_zero_likelihood)
    _emit(trace_csv(res.trace), args.output)
    s = res.summary
    print(f"tasks completed: {s.tasks_completed}  mean filter time: {s.mean_filter_us:.1f} us  "
          f"mean skipped fraction: {s.mean_skipped_fraction:.3f}", file=sys.stderr)
    return EXIT_OK


def _require_valid(process) -> None:
    for dbn in process.actions:
        report = validate_dbn(dbn)
        if not report.ok:
            v = report.violations[0]
            raise ModelValidationError(f"action {dbn.action_name}: {v.kind}: {v.message}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psbf", description=__doc__.splitlines()[0],
                     parents=[_global_flags(suppress=False)])
    common = [_global_flags(suppress=True)]
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=common, help="check a process file")
    p.add_argument("process")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("passivity", parents=common, help="passivity verdict per action and variable")
    p.add_argument("process")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_passivity)

    p = sub.add_parser("cluster", parents=common, help="cluster state variables, report A1/A2")
    p.add_argument("process")
    p.add_argument("--strategy", default="components",
                   help="components, singleton, max_size(L) or a clustering named in the file")
    p.add_argument("--save", metavar="NAME", help="store the clustering in the file under NAME")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("gen", parents=common, help="generate synthetic processes")
    p.add_argument("--preset", default="S", type=str.upper, choices=sorted(synthgen.PRESETS))
    p.add_argument("--passivity", type=float, default=0.0, help="percent of passive variables")
    p.add_argument("--actions", type=int)
    p.add_argument("--determinism", type=float)
    p.add_argument("--intra-edge-prob", type=float)
    p.add_argument("--count", type=int, help="batch mode: seeds seed..seed+count-1 into -o DIR")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", parents=common, help="filter one sampled trajectory")
    p.add_argument("process")
    p.add_argument("--filter", choices=bench.FILTER_KINDS, default="psbf")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--clustering", default=None, help="named clustering or strategy")
    p.add_argument("--particles", type=int, default=1000)
    p.add_argument("--kl-cap", type=int, default=RUN_KL_CAP,
                   help=f"largest joint state space for KL (default {RUN_KL_CAP})")
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", parents=common, help="benchmark grid over synthetic processes")
    p.add_argument("--presets", nargs="+", type=str.upper, default=["S", "M"])
    p.add_argument("--passivity", nargs="+", type=float, default=[0, 20, 40, 60])
    p.add_argument("--filters", nargs="+", choices=bench.FILTER_KINDS, default=["psbf", "bk"])
    p.add_argument("--processes", type=int, default=50)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--thread-counts", nargs="+", type=int)
    p.add_argument("--pf-match", choices=("speed", "accuracy", "none"), default="accuracy")
    p.add_argument("--particles", type=int, default=1000, help="PF size when --pf-match none")
    p.add_argument("--kl-cap", type=int, default=bench.KL_CAP)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("-o", "--output", help="per-step records CSV")
    p.add_argument("--summary", help="summary CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("warehouse", parents=common, help="closed-loop warehouse simulation")
    p.add_argument("--preset", default="kiva16")
    p.add_argument("--filter", choices=("psbf", "bk", "pf"), default="psbf")
    p.add_argument("--mode", choices=("centralised", "decentralised"), default="centralised")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--particles", type=int, default=2000)
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_warehouse)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (spec_io.SpecError, ModelValidationError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DegenerateModelError as exc:
        print(f"degenerate model: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
