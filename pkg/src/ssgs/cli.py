"""Command line entry point.

Subcommands: generate (write random instances), solve (run the annealer on
one instance), sweep (axis benchmark to CSV), trace (adaptive scheduler
trace), selftest (quick correctness check, exits nonzero on failure).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

from ssgs.bench import (
    AXES,
    IMPLEMENTATIONS,
    SweepConfig,
    make_scheduler,
    run_adaptive_trace,
    run_sweep,
    write_csv,
)
from ssgs.bloom import BloomStructure, encode_job, encode_slot, filter_test
from ssgs.hybrid import SignVerdict, sign_test
from ssgs.instance import (
    GeneratorParams,
    Job,
    generate_instance,
    is_active,
    load_instance,
    parse_native,
    random_topological_permutation,
    serialize_native,
    validate_schedule,
)
from ssgs.metaheuristic import run_metaheuristic


def _add_generator_flags(parser: argparse.ArgumentParser) -> None:
    defaults = GeneratorParams()
    parser.add_argument("--jobs", type=int, default=defaults.num_jobs)
    parser.add_argument("--resources", type=int, default=defaults.num_resources)
    parser.add_argument("--max-duration", type=int, default=defaults.max_duration)
    parser.add_argument("--network-complexity", type=float, default=defaults.network_complexity)
    parser.add_argument("--resource-factor", type=float, default=defaults.resource_factor)
    parser.add_argument("--resource-strength", type=float, default=defaults.resource_strength)
    parser.add_argument("--seed", type=int, default=defaults.seed)


def _params_from_args(args: argparse.Namespace, seed: int) -> GeneratorParams:
    return GeneratorParams(
        num_jobs=args.jobs,
        num_resources=args.resources,
        max_duration=args.max_duration,
        network_complexity=args.network_complexity,
        resource_factor=args.resource_factor,
        resource_strength=args.resource_strength,
        seed=seed,
    )


def _cmd_generate(args: argparse.Namespace) -> int:
    if args.count < 1:
        print("count must be at least 1", file=sys.stderr)
        return 2
    if args.count == 1:
        text = serialize_native(generate_instance(_params_from_args(args, args.seed)))
        if args.out is None:
            sys.stdout.write(text)
        else:
            Path(args.out).write_text(text)
        return 0
    if args.out is None:
        print("--out directory is required when --count > 1", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for seed in range(args.seed, args.seed + args.count):
        text = serialize_native(generate_instance(_params_from_args(args, seed)))
        (out_dir / f"inst_{seed}.txt").write_text(text)
    print(f"wrote {args.count} instances to {out_dir}")
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    instance = load_instance(args.instance)
    scheduler = make_scheduler(args.impl, instance)
    started = time.perf_counter()
    schedule, stats = run_metaheuristic(
        instance, scheduler, iterations=args.iterations, seed=args.seed,
        collect_trajectory=False,
    )
    elapsed = time.perf_counter() - started
    report = validate_schedule(instance, schedule)
    print(f"impl: {args.impl}")
    print(f"best makespan: {schedule.makespan}")
    print(f"executions: {stats.executions}")
    print(f"decode seconds: {stats.decode_seconds:.6f}")
    print(f"total seconds: {elapsed:.6f}")
    print(f"valid: {report.ok}")
    return 0 if report.ok else 1


def _parse_values(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _cmd_sweep(args: argparse.Namespace) -> int:
    values = _parse_values(args.values)
    if not values:
        print("--values must list at least one number", file=sys.stderr)
        return 2
    config = SweepConfig(
        axis=args.axis,
        values=values,
        instances_per_point=args.instances,
        iterations_per_instance=args.iterations,
        implementations=tuple(args.impls.split(",")),
        warmup_decodes=args.warmup,
        seed=args.seed,
    )
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    records = run_sweep(config, progress=progress)
    metadata = {
        "axis": config.axis,
        "instances_per_point": config.instances_per_point,
        "iterations_per_instance": config.iterations_per_instance,
        "seed": config.seed,
    }
    write_csv(records, args.out, metadata=metadata)
    for rec in records:
        rel = "n/a" if math.isnan(rec.relative_pct) else f"{rec.relative_pct:.1f}%"
        print(f"{rec.axis}={rec.value} {rec.impl}: {rec.seconds:.4f}s ({rel})")
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_trace(args: argparse.Namespace) -> int:
    instance = load_instance(args.instance)
    result = run_adaptive_trace(
        instance,
        args.iterations,
        seed=args.seed,
        period_length=args.period,
        alternation_cap=args.cap,
        bloom_limit=args.limit,
        trace_path=args.out,
    )
    print(f"executions traced: {len(result.trace)}")
    print(f"first commit: {result.first_commit or 'none'}")
    print(f"commits: {list(result.commits)}")
    print(f"switches: {result.switches}")
    print(f"hybrid seconds: {result.hybrid_seconds:.6f}")
    print(f"baseline seconds: {result.baseline_seconds:.6f}")
    print(f"ratio: {result.ratio:.4f}")
    if args.out:
        print(f"trace written to {args.out}")
    return 0


def _selftest_decoders(failures: list[str]) -> None:
    for seed in (11, 12, 13):
        params = GeneratorParams(num_jobs=30, num_resources=3, seed=seed)
        instance = generate_instance(params)
        schedulers = [(name, make_scheduler(name, instance)) for name in IMPLEMENTATIONS]
        for perm_seed in range(5):
            perm = random_topological_permutation(instance, perm_seed)
            schedules = [(name, s.execute(perm)) for name, s in schedulers]
            baseline = schedules[0][1]
            for name, schedule in schedules[1:]:
                if schedule.starts != baseline.starts:
                    failures.append(f"decoders: {name} disagrees with conv on seed {seed}")
                    return
            report = validate_schedule(instance, baseline)
            if not report.ok or not is_active(instance, baseline):
                failures.append(f"decoders: invalid or non-active schedule on seed {seed}")
                return


def _selftest_filters(failures: list[str]) -> None:
    structure = BloomStructure(
        bits=((0, 2), (0, 3), (0, 4), (1, 1), (1, 3), (2, 1), (2, 3), (2, 4)),
        capacities=(4, 4, 4),
    )
    job = Job(duration=1, demands=(3, 2, 0), predecessors=frozenset())
    jf = encode_job(job, structure)
    cases = [
        # availability, formatted slot word, filter verdict, full check
        ((2, 3, 4), "100 11 111", False, False),
        ((3, 1, 4), "110 10 111", True, False),
        ((3, 2, 2), "110 10 100", True, True),
    ]
    if structure.format_word(jf.word) != "110 10 000":
        failures.append("filters: job word mismatch")
        return
    for avail, formatted, expect_pass, expect_full in cases:
        word = encode_slot(avail, structure)
        if structure.format_word(word) != formatted:
            failures.append(f"filters: slot word mismatch for {avail}")
            return
        if filter_test(jf, word) != expect_pass:
            failures.append(f"filters: verdict mismatch for {avail}")
            return
        full = all(a >= v for a, v in zip(avail, job.demands))
        if full != expect_full:
            failures.append(f"filters: full check mismatch for {avail}")
            return


def _selftest_sign_test(failures: list[str]) -> None:
    cases = [
        (6, 6, SignVerdict.BF_FASTER),
        (0, 6, SignVerdict.NBF_FASTER),
        (3, 6, SignVerdict.INCONCLUSIVE),
        (1, 6, SignVerdict.INCONCLUSIVE),
    ]
    for wins, trials, expected in cases:
        result = sign_test(wins, trials)
        if result.verdict is not expected:
            failures.append(f"sign test: {wins}/{trials} gave {result.verdict.name}")
            return


def _selftest_roundtrip(failures: list[str]) -> None:
    instance = generate_instance(GeneratorParams(num_jobs=12, num_resources=2, seed=5))
    if parse_native(serialize_native(instance)) != instance:
        failures.append("round trip: native serialization is lossy")


def _cmd_selftest(_args: argparse.Namespace) -> int:
    checks = [
        ("decoder agreement", _selftest_decoders),
        ("filter encoding", _selftest_filters),
        ("sign test", _selftest_sign_test),
        ("native round trip", _selftest_roundtrip),
    ]
    exit_code = 0
    for name, check in checks:
        failures: list[str] = []
        check(failures)
        if failures:
            exit_code = 1
            print(f"FAIL {name}: {failures[0]}")
        else:
            print(f"PASS {name}")
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssgs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write random instances in the native format")
    _add_generator_flags(p_gen)
    p_gen.add_argument("--count", type=int, default=1, help="number of instances (seeds seed..seed+count-1)")
    p_gen.add_argument("--out", default=None, help="output file, or directory when --count > 1")
    p_gen.set_defaults(func=_cmd_generate)

    p_solve = sub.add_parser("solve", help="run the annealer on an instance file")
    p_solve.add_argument("instance")
    p_solve.add_argument("--impl", choices=IMPLEMENTATIONS, default="hybrid")
    p_solve.add_argument("--iterations", type=int, default=100_000)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="benchmark implementations along one generator axis")
    p_sweep.add_argument("--axis", choices=AXES, required=True)
    p_sweep.add_argument("--values", required=True, help="comma separated axis values")
    p_sweep.add_argument("--instances", type=int, default=50)
    p_sweep.add_argument("--iterations", type=int, default=1_000_000)
    p_sweep.add_argument("--impls", default=",".join(IMPLEMENTATIONS))
    p_sweep.add_argument("--seed", type=int, default=1)
    p_sweep.add_argument("--warmup", type=int, default=100)
    p_sweep.add_argument("--out", required=True, help="CSV output path")
    p_sweep.add_argument("--verbose", action="store_true")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_trace = sub.add_parser("trace", help="per-execution adaptive trace on one instance")
    p_trace.add_argument("instance")
    p_trace.add_argument("--iterations", type=int, default=25_000)
    p_trace.add_argument("--seed", type=int, default=0)
    p_trace.add_argument("--period", type=int, default=10_000)
    p_trace.add_argument("--cap", type=int, default=100)
    p_trace.add_argument("--limit", type=int, default=32)
    p_trace.add_argument("--out", default=None, help="trace file path (index,impl,nanos lines)")
    p_trace.set_defaults(func=_cmd_trace)

    p_self = sub.add_parser("selftest", help="quick correctness check")
    p_self.set_defaults(func=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
