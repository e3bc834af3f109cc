"""Benchmark harness: axis sweeps over generated instances, CSV reporting,
and the per-execution adaptive trace.

Decode time is measured around the scheduler call with the monotonic
clock and summed, excluding a configurable warm-up prefix, so the CSV
isolates decoder cost from annealer overhead. Everything runs on one
thread; timing numbers are only comparable within one machine and run.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ssgs.bloom import BloomScheduler
from ssgs.core import ConventionalScheduler, SchedulerBase
from ssgs.fast import EnhancedScheduler
from ssgs.hybrid import HybridScheduler
from ssgs.instance import GeneratorParams, Instance, InstanceError, generate_instance
from ssgs.metaheuristic import run_metaheuristic

AXES = (
    "num_jobs",
    "num_resources",
    "resource_strength",
    "resource_factor",
    "network_complexity",
    "max_duration",
)
_INT_AXES = {"num_jobs", "num_resources", "max_duration"}

IMPLEMENTATIONS = ("conv", "nbf", "bf", "hybrid")


def make_scheduler(name: str, instance: Instance, **kwargs) -> SchedulerBase:
    if name == "conv":
        return ConventionalScheduler(instance, **kwargs)
    if name == "nbf":
        return EnhancedScheduler(instance, **kwargs)
    if name == "bf":
        return BloomScheduler(instance, **kwargs)
    if name == "hybrid":
        return HybridScheduler(instance, **kwargs)
    raise ValueError(f"unknown implementation {name!r}; expected one of {IMPLEMENTATIONS}")


@dataclass(frozen=True)
class SweepConfig:
    axis: str
    values: tuple
    baseline: GeneratorParams = GeneratorParams()
    instances_per_point: int = 50
    iterations_per_instance: int = 1_000_000
    implementations: tuple[str, ...] = IMPLEMENTATIONS
    warmup_decodes: int = 100
    seed: int = 1

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ValueError(f"axis {self.axis!r} not in {AXES}")
        if not self.values:
            raise ValueError("values must be nonempty")
        if self.instances_per_point < 1 or self.iterations_per_instance < 0:
            raise ValueError("counts must be positive")
        if self.warmup_decodes < 0:
            raise ValueError("warmup_decodes must be nonnegative")
        for impl in self.implementations:
            if impl not in IMPLEMENTATIONS:
                raise ValueError(f"unknown implementation {impl!r}")


@dataclass(frozen=True)
class BenchRecord:
    axis: str
    value: float
    impl: str
    seconds: float
    executions: int
    relative_pct: float


def _axis_value(axis: str, value):
    return int(value) if axis in _INT_AXES else float(value)


def run_sweep(config: SweepConfig, progress: Callable[[str], None] | None = None) -> list[BenchRecord]:
    """One metaheuristic run per (axis value, instance, implementation).

    Returns one aggregated record per (axis value, implementation);
    relative_pct is against conv at the same point (NaN when conv was not
    part of the sweep). A value whose parameters the generator rejects is
    skipped with a warning.
    """
    records: list[BenchRecord] = []
    for raw_value in config.values:
        value = _axis_value(config.axis, raw_value)
        try:
            instances = [
                generate_instance(
                    replace(config.baseline, **{config.axis: value, "seed": config.seed + i})
                )
                for i in range(config.instances_per_point)
            ]
        except InstanceError as exc:
            warnings.warn(f"skipping {config.axis}={value}: {exc}")
            continue
        seconds: dict[str, float] = {}
        executions: dict[str, int] = {}
        for impl in config.implementations:
            total = 0.0
            execs = 0
            for i, inst in enumerate(instances):
                scheduler = make_scheduler(impl, inst)
                _, stats = run_metaheuristic(
                    inst,
                    scheduler,
                    iterations=config.iterations_per_instance,
                    seed=config.seed + i,
                    timing_warmup=config.warmup_decodes,
                    collect_trajectory=False,
                )
                total += stats.decode_seconds
                execs += stats.executions
                if progress is not None:
                    progress(f"{config.axis}={value} {impl} instance {i + 1}/{len(instances)}")
            seconds[impl] = total
            executions[impl] = execs
        conv_seconds = seconds.get("conv")
        for impl in config.implementations:
            if conv_seconds:
                # divide first so the baseline's own ratio is exactly 100.0
                rel = 100.0 * (seconds[impl] / conv_seconds)
            else:
                rel = float("nan")
            records.append(BenchRecord(config.axis, value, impl, seconds[impl], executions[impl], rel))
    return records


CSV_COLUMNS = ("axis", "value", "impl", "seconds", "executions", "relative_pct")


def write_csv(records: Sequence[BenchRecord], path, metadata: Mapping[str, object] | None = None) -> None:
    """Rows in CSV_COLUMNS order; metadata as leading '# key: value' lines."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for key, val in (metadata or {}).items():
            fh.write(f"# {key}: {val}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(
                [rec.axis, repr(rec.value), rec.impl, repr(rec.seconds), rec.executions, repr(rec.relative_pct)]
            )


def read_csv(path) -> list[BenchRecord]:
    path = Path(path)
    records: list[BenchRecord] = []
    with path.open(newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header!r}")
        for row in rows:
            axis, value, impl, seconds, execs, rel = row
            records.append(
                BenchRecord(axis, _axis_value(axis, float(value)), impl, float(seconds), int(execs), float(rel))
            )
    return records


@dataclass(frozen=True)
class TraceResult:
    """Outcome of run_adaptive_trace.

    ratio = hybrid decode seconds / decode seconds of rerunning the first
    period's committed implementation alone over the same search path.
    """

    ratio: float
    first_commit: str | None
    commits: tuple[tuple[int, str], ...]
    switches: int
    hybrid_seconds: float
    baseline_seconds: float
    trace: tuple[tuple[int, str, int], ...]


def write_trace(trace: Sequence[tuple[int, str, int]], path) -> None:
    """One 'index,impl,nanos' line per execution."""
    path = Path(path)
    with path.open("w") as fh:
        for index, impl, nanos in trace:
            fh.write(f"{index},{impl},{nanos}\n")


def run_adaptive_trace(
    instance: Instance,
    iterations: int,
    *,
    seed: int = 0,
    period_length: int | None = 10_000,
    alternation_cap: int = 100,
    bloom_limit: int = 32,
    warmup_decodes: int = 0,
    trace_path=None,
) -> TraceResult:
    """Trace every hybrid execution, then replay the same search with the
    initially committed implementation alone and report the time ratio.

    period_length=None is the forced-commit mode: a single commitment holds
    for the whole run.
    """
    trace: list[tuple[int, str, int]] = []
    hybrid = HybridScheduler(
        instance,
        period_length=period_length,
        alternation_cap=alternation_cap,
        bloom_limit=bloom_limit,
        trace=trace,
    )
    _, hybrid_stats = run_metaheuristic(
        instance, hybrid, iterations=iterations, seed=seed,
        timing_warmup=warmup_decodes, collect_trajectory=False,
    )
    commits = tuple(hybrid.commit_log)
    first_commit = commits[0][1] if commits else None
    baseline_impl = first_commit if first_commit is not None else "nbf"
    baseline = make_scheduler(baseline_impl, instance)
    _, baseline_stats = run_metaheuristic(
        instance, baseline, iterations=iterations, seed=seed,
        timing_warmup=warmup_decodes, collect_trajectory=False,
    )
    switches = sum(1 for a, b in zip(commits, commits[1:]) if a[1] != b[1])
    if trace_path is not None:
        write_trace(trace, trace_path)
    ratio = (
        hybrid_stats.decode_seconds / baseline_stats.decode_seconds
        if baseline_stats.decode_seconds > 0
        else float("nan")
    )
    return TraceResult(
        ratio=ratio,
        first_commit=first_commit,
        commits=commits,
        switches=switches,
        hybrid_seconds=hybrid_stats.decode_seconds,
        baseline_seconds=baseline_stats.decode_seconds,
        trace=tuple(trace),
    )
