"""Permutation-space annealing without a temperature schedule.

One move: pick a uniformly random job, reinsert it at a uniformly random
position inside its precedence-feasible interval. Not-worse makespans are
always accepted, worse ones on a fair coin. Four named RNG substreams
(initial order, job choice, position choice, acceptance coin) keep the
search path byte-identical across scheduler implementations, which is what
makes decoder swaps observable only through the clock.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

import numpy as np

from ssgs.core import SchedulerBase
from ssgs.instance import (
    Instance,
    Permutation,
    Schedule,
    random_topological_permutation,
    successors,
)


@dataclass
class SearchState:
    """Snapshot of the annealing loop, for callers driving their own steps."""

    current: Permutation
    current_makespan: int
    best_makespan: int
    iteration: int
    seed: int


@dataclass
class RunStats:
    """Bookkeeping from one annealing run. decode_seconds sums the wall
    clock around scheduler.decode only (warmup decodes excluded);
    trajectory holds (iteration, makespan) at each strict improvement."""

    iterations: int
    executions: int
    decode_seconds: float
    best_makespan: int
    trajectory: list[tuple[int, int]]
    accepted: int
    impl_counts: dict[str, int]


def feasible_positions(permutation: Permutation, instance: Instance, job: int) -> tuple[int, int]:
    """1-based closed interval of positions where job can be reinserted
    without breaking precedence feasibility. Always contains the job's
    current position."""
    pos = {j: i + 1 for i, j in enumerate(permutation.order)}
    lo = 1
    for p in instance.jobs[job].predecessors:
        lo = max(lo, pos[p] + 1)
    hi = len(permutation.order)
    for s in successors(instance)[job]:
        hi = min(hi, pos[s] - 1)
    return lo, hi


def propose_move(
    current: Permutation | SearchState,
    instance: Instance,
    rng: random.Random,
    position_rng: random.Random | None = None,
) -> Permutation:
    """Move a uniformly random job to a uniformly random feasible position.

    With position_rng omitted, both draws come from rng; the annealer passes
    separate streams so the two choices cannot perturb each other.
    """
    permutation = current.current if isinstance(current, SearchState) else current
    prng = position_rng if position_rng is not None else rng
    job = rng.randrange(instance.num_jobs)
    lo, hi = feasible_positions(permutation, instance, job)
    target = prng.randint(lo, hi)
    order = list(permutation.order)
    order.remove(job)
    order.insert(target - 1, job)
    return Permutation(tuple(order))


def accept(old_makespan: int, new_makespan: int, rng: random.Random) -> bool:
    """Not-worse always passes; worse passes on a fair coin."""
    if new_makespan <= old_makespan:
        return True
    return rng.random() < 0.5


def run_metaheuristic(
    instance: Instance,
    scheduler: SchedulerBase,
    iterations: int = 1_000_000,
    seed: int = 0,
    *,
    timing_warmup: int = 0,
    collect_trajectory: bool = True,
) -> tuple[Schedule, RunStats]:
    """Anneal from a random topological order for the given iteration count.

    Identical (instance, iterations, seed) yield the identical permutation
    and acceptance sequence for every scheduler, because all decoders
    return the same makespans. The first timing_warmup decodes run normally
    but are excluded from decode_seconds.
    """
    root = random.Random(seed)
    init_rng = random.Random(root.getrandbits(64))
    job_rng = random.Random(root.getrandbits(64))
    pos_rng = random.Random(root.getrandbits(64))
    accept_rng = random.Random(root.getrandbits(64))

    n = instance.num_jobs
    preds = [sorted(job.predecessors) for job in instance.jobs]
    succs = successors(instance)

    perm = random_topological_permutation(instance, init_rng)
    order = np.asarray(perm.order, np.int64)
    cand = order.copy()
    positions = np.zeros(n, np.int64)
    positions[order] = np.arange(n)

    clock = time.perf_counter_ns
    timed_ns = 0
    executions = 0

    def decode_timed(o: np.ndarray) -> int:
        nonlocal timed_ns, executions
        t0 = clock()
        m = scheduler.decode(o)
        t1 = clock()
        executions += 1
        if executions > timing_warmup:
            timed_ns += t1 - t0
        return m

    current = decode_timed(order)
    best = current
    best_starts = scheduler.last_starts.copy()
    trajectory = [(0, int(best))] if collect_trajectory else []
    accepted = 0

    if n == 0:
        iterations = 0  # nothing to move
    for it in range(1, iterations + 1):
        j = job_rng.randrange(n)
        lo = 0
        for p in preds[j]:
            pp = positions[p]
            if pp >= lo:
                lo = pp + 1
        hi = n - 1
        for s in succs[j]:
            sp = positions[s]
            if sp <= hi:
                hi = sp - 1
        target = pos_rng.randint(lo + 1, hi + 1) - 1  # draws mirror propose_move's 1-based interval
        i = positions[j]
        np.copyto(cand, order)
        if target < i:
            cand[target + 1 : i + 1] = order[target:i]
            cand[target] = j
        elif target > i:
            cand[i:target] = order[i + 1 : target + 1]
            cand[target] = j
        m = decode_timed(cand)
        if m <= current or accept_rng.random() < 0.5:
            accepted += 1
            current = m
            if target != i:
                order, cand = cand, order
                a, b = (target, i) if target < i else (i, target)
                positions[order[a : b + 1]] = np.arange(a, b + 1)
            if m < best:
                best = m
                best_starts = scheduler.last_starts.copy()
                if collect_trajectory:
                    trajectory.append((it, int(m)))

    impl_counts = getattr(scheduler, "execution_counts", None)
    impl_counts = dict(impl_counts) if impl_counts is not None else {scheduler.name: executions}
    stats = RunStats(
        iterations=iterations,
        executions=executions,
        decode_seconds=timed_ns / 1e9,
        best_makespan=int(best),
        trajectory=trajectory,
        accepted=accepted,
        impl_counts=impl_counts,
    )
    return Schedule(tuple(int(t) for t in best_starts), int(best)), stats
