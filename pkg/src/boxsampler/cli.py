"""Command-line front door.

Subcommands:
  run             sample an SMT-LIB file, writing JSON-lines samples plus
                  optional per-epoch intervals, a coverage bitmap, and stats
  verify          re-evaluate a samples file against its problem
  merge-coverage  union coverage bitmaps and report normalized coverage

Exit codes: 0 success, 2 unsatisfiable input, 3 unsupported input,
4 solver failure, 5 verification found violations, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import random
import sys

from . import coverage as coverage_mod
from .errors import (
    BoxsamplerError,
    NotAModel,
    SmtSyntaxError,
    SolverFailure,
    SoundnessViolation,
    UnsatFormula,
    UnsupportedFeature,
)
from .intervals import to_json_obj
from .sampler import RunStats, SamplerConfig, canonical_assignment, sample_formula
from .smtlib import ParsedProblem, parse_problem
from .solver import ProcessSolverClient
from .terms import FuncValue, Model, Sort, preprocess, to_nnf

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSAT = 2
EXIT_UNSUPPORTED = 3
EXIT_SOLVER = 4
EXIT_VIOLATIONS = 5


def sample_to_json(sample: Model) -> dict:
    out: dict = {}
    out.update(sample.ints)
    out.update(sample.bools)
    for name, fv in sample.funcs.items():
        out[name] = {
            "default": fv.default,
            "exceptions": {str(k): v for k, v in sorted(fv.exceptions.items())},
        }
    return out


def model_from_json(obj: dict, problem: ParsedProblem) -> Model:
    model = Model()
    env = problem.sort_env()
    for name, value in obj.items():
        decl = env.get(name)
        if decl is None:
            raise BoxsamplerError(f"unknown symbol {name!r} in assignment")
        if decl.is_function or decl.sort == Sort.ARRAY:
            if not isinstance(value, dict):
                raise BoxsamplerError(f"array symbol {name!r} needs a default/exceptions object")
            model.funcs[name] = FuncValue(
                int(value.get("default", 0)),
                {int(k): int(v) for k, v in value.get("exceptions", {}).items()},
            )
        elif decl.sort == Sort.BOOL:
            model.bools[name] = bool(value)
        else:
            model.ints[name] = int(value)
    # unmentioned symbols default to 0 / false / constant-0 arrays
    for decl in problem.declarations:
        if decl.is_function or decl.sort == Sort.ARRAY:
            model.funcs.setdefault(decl.name, FuncValue(0))
        elif decl.sort == Sort.BOOL:
            model.bools.setdefault(decl.name, False)
        else:
            model.ints.setdefault(decl.name, 0)
    return model


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boxsampler")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="sample a problem")
    run.add_argument("problem", help="SMT-LIB v2 input file")
    run.add_argument("--solver-cmd", default="z3 -in", help="solver command line (SMT-LIB on stdio)")
    run.add_argument("--strategy", choices=("random", "blocking"), default="random")
    run.add_argument("--time-limit", type=float, default=900.0, help="total run budget, seconds")
    run.add_argument("--epoch-time-limit", type=float, default=600.0)
    run.add_argument("--max-samples", type=int, default=None)
    run.add_argument("--rounds", type=int, default=10, help="sampling rounds per epoch")
    run.add_argument("--samples-per-round", type=int, default=1000)
    run.add_argument("--unique-rate-threshold", type=float, default=0.05)
    run.add_argument("--random-bound", type=int, default=100, help="soft-assignment range for random seeds")
    run.add_argument("--unbounded-width", type=int, default=10**6, help="clamp width for open intervals")
    run.add_argument("--rng-seed", type=int, default=0)
    run.add_argument("--solver-timeout", type=float, default=60.0, help="per-query solver timeout")
    run.add_argument("--samples-out", default=None, help="samples file (JSON lines); default <problem>.samples")
    run.add_argument("--intervals-out", default=None, help="per-epoch interval maps (JSON lines)")
    run.add_argument("--coverage-out", default=None, help="coverage bitmap output file")
    run.add_argument("--stats-out", default=None, help="run statistics JSON")
    run.add_argument("--emit-intervals", action="store_true", help="short for --intervals-out <problem>.intervals")
    run.add_argument("--inject-seed", default=None, help="JSON assignment used as the first seed (test hook)")

    verify = sub.add_parser("verify", help="audit a samples file")
    verify.add_argument("samples", help="JSON-lines samples file")
    verify.add_argument("problem", help="SMT-LIB v2 input file")

    merge = sub.add_parser("merge-coverage", help="union bitmaps, report normalized coverage")
    merge.add_argument("bitmaps", nargs="+", help="coverage bitmap files")
    merge.add_argument("--out", default=None, help="write the union bitmap here")
    return parser


def _cmd_run(args) -> int:
    with open(args.problem, "r", encoding="utf-8") as fh:
        problem = parse_problem(fh.read())

    cfg = SamplerConfig(
        strategy=args.strategy,
        total_time_limit=args.time_limit,
        epoch_time_limit=args.epoch_time_limit,
        max_samples=args.max_samples,
        rounds_per_epoch=args.rounds,
        samples_per_round=args.samples_per_round,
        unique_rate_threshold=args.unique_rate_threshold,
        random_bound=args.random_bound,
        unbounded_width=args.unbounded_width,
        rng_seed=args.rng_seed,
    )
    if args.inject_seed:
        cfg.inject_seed = model_from_json(json.loads(args.inject_seed), problem)

    samples_path = args.samples_out or args.problem + ".samples"
    intervals_path = args.intervals_out or (args.problem + ".intervals" if args.emit_intervals else None)

    bitmap = None
    nnf = None
    if args.coverage_out:
        nnf = to_nnf(preprocess(problem.assertion))
        bitmap = coverage_mod.CoverageBitmap.for_formula(nnf)

    client = ProcessSolverClient(args.solver_cmd, timeout=args.solver_timeout)
    rng = random.Random(cfg.rng_seed)

    # files are created lazily so that an unsat input leaves nothing behind
    sinks: dict[str, object] = {}

    def _writer(key: str, path: str):
        fh = sinks.get(key)
        if fh is None:
            fh = sinks[key] = open(path, "w", encoding="utf-8")
        return fh

    def on_sample(sample: Model):
        _writer("samples", samples_path).write(json.dumps(sample_to_json(sample), sort_keys=True) + "\n")
        if bitmap is not None:
            coverage_mod.record_sample(bitmap, nnf, sample)

    def on_epoch(epoch):
        if intervals_path:
            _writer("intervals", intervals_path).write(json.dumps(to_json_obj(epoch.intervals)) + "\n")

    try:
        stats = sample_formula(problem, cfg, client, rng, on_sample=on_sample, on_epoch=on_epoch)
    finally:
        for fh in sinks.values():
            fh.close()
        client.close()

    if bitmap is not None:
        coverage_mod.write_bitmap(bitmap, args.coverage_out)
        stats.raw_coverage = coverage_mod.raw_coverage(bitmap)
    if args.stats_out:
        with open(args.stats_out, "w", encoding="utf-8") as fh:
            json.dump(_stats_to_json(stats), fh, indent=2)
            fh.write("\n")
    print(
        f"{stats.unique_samples} unique samples in {stats.epochs} epochs "
        f"({stats.solver_calls} solver calls); stopped: {stats.stop_reason}"
    )
    return EXIT_OK


def _stats_to_json(stats: RunStats) -> dict:
    return {
        "epochs": stats.epochs,
        "solver_calls": stats.solver_calls,
        "maxsmt_degradations": stats.maxsmt_degradations,
        "unique_samples": stats.unique_samples,
        "clashes": stats.clashes,
        "blocking_resets": stats.blocking_resets,
        "raw_coverage": stats.raw_coverage,
        "probabilistic_dedup": stats.probabilistic_dedup,
        "stop_reason": stats.stop_reason,
        "wall_time": stats.wall_time,
    }


def _cmd_verify(args) -> int:
    with open(args.problem, "r", encoding="utf-8") as fh:
        problem = parse_problem(fh.read())
    from .terms import eval_formula

    formula = preprocess(problem.assertion)
    violations = 0
    duplicates = 0
    total = 0
    seen = set()
    with open(args.samples, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            total += 1
            sample = model_from_json(json.loads(line), problem)
            if not eval_formula(formula, sample):
                violations += 1
                print(f"violation at line {line_no}", file=sys.stderr)
            key = canonical_assignment(sample)
            if key in seen:
                duplicates += 1
                print(f"duplicate at line {line_no}", file=sys.stderr)
            seen.add(key)
    print(f"{total} samples, {violations} violations, {duplicates} duplicates")
    return EXIT_OK if violations == 0 and duplicates == 0 else EXIT_VIOLATIONS


def _cmd_merge(args) -> int:
    bitmaps = [coverage_mod.read_bitmap(path) for path in args.bitmaps]
    union = bitmaps[0].copy()
    for bm in bitmaps[1:]:
        union.merge(bm)
    for path, bm in zip(args.bitmaps, bitmaps):
        score = coverage_mod.normalized_coverage(bm, [b for b in bitmaps if b is not bm])
        print(f"{path}: raw {coverage_mod.raw_coverage(bm):.4f} normalized {score:.4f}")
    print(f"union: raw {coverage_mod.raw_coverage(union):.4f} ({union.covered_bits()} bits)")
    if args.out:
        coverage_mod.write_bitmap(union, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_merge(args)
    except UnsatFormula as exc:
        print(f"unsat: {exc}", file=sys.stderr)
        return EXIT_UNSAT
    except (UnsupportedFeature, SmtSyntaxError) as exc:
        print(f"unsupported input: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (SolverFailure,) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SoundnessViolation, NotAModel) as exc:
        print(f"internal soundness failure: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, json.JSONDecodeError, BoxsamplerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
