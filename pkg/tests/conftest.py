"""Shared helpers: reference oracles written from scratch.

The oracles recompute occupancy directly from start times and scan slots
forward with no incremental state, so they share no machinery with the
kernels under test.
"""

from __future__ import annotations

import random
from fractions import Fraction
from functools import lru_cache

from ssgs.hybrid import SignVerdict
from ssgs.instance import GeneratorParams, Instance, Permutation, generate_instance


def random_instance(seed: int = 0, **overrides) -> Instance:
    defaults = dict(num_jobs=20, num_resources=3, max_duration=6, seed=seed)
    defaults.update(overrides)
    return generate_instance(GeneratorParams(**defaults))


def usage_at(instance: Instance, starts: dict[int, int], resource: int, slot: int, exclude: int = -1) -> int:
    total = 0
    for j, t in starts.items():
        if j == exclude:
            continue
        job = instance.jobs[j]
        if t <= slot <= t + job.duration - 1:
            total += job.demands[resource]
    return total


def fits(instance: Instance, starts: dict[int, int], job_index: int, t: int) -> bool:
    job = instance.jobs[job_index]
    for s in range(t, t + job.duration):
        for r, v in enumerate(job.demands):
            if v and usage_at(instance, starts, r, s, exclude=job_index) + v > instance.capacities[r]:
                return False
    return True


def earliest_by_predecessors(instance: Instance, starts: dict[int, int], job_index: int) -> int:
    est = 1
    for p in instance.jobs[job_index].predecessors:
        est = max(est, starts[p] + instance.jobs[p].duration)
    return est


def naive_ssgs(instance: Instance, permutation: Permutation) -> tuple[int, ...]:
    """Place each job at the first start where a full rescan finds room."""
    starts: dict[int, int] = {}
    for j in permutation.order:
        t = earliest_by_predecessors(instance, starts, j)
        while not fits(instance, starts, j, t):
            t += 1
        starts[j] = t
    return tuple(starts[j] for j in range(instance.num_jobs))


def naive_is_active(instance: Instance, starts_seq) -> bool:
    """True iff no single job can move to any earlier start, others fixed."""
    starts = dict(enumerate(starts_seq))
    for j in range(instance.num_jobs):
        est = earliest_by_predecessors(instance, starts, j)
        for t in range(est, starts[j]):
            if fits(instance, starts, j, t):
                return False
    return True


def many_permutations(instance: Instance, count: int, seed: int = 0) -> list[Permutation]:
    rng = random.Random(seed)
    from ssgs.instance import random_topological_permutation

    return [random_topological_permutation(instance, rng) for _ in range(count)]


def greedy_deletion_oracle(demand, availability, caps):
    """Recomputes every bit's cost from scratch at each step."""
    retained = {r: list(range(1, c + 1)) for r, c in enumerate(caps)}
    deleted = []
    while any(retained.values()):
        best = None
        for r in sorted(retained):
            ks = retained[r]
            for i, k in enumerate(ks):
                q = ks[i - 1] if i > 0 else 0
                m = ks[i + 1] if i + 1 < len(ks) else caps[r] + 1
                c = float(sum(demand[r, k:m]) * sum(availability[r, q:k]))
                if best is None or (c, r, k) < best:
                    best = (c, r, k)
        _, r, k = best
        retained[r].remove(k)
        deleted.append((r, k))
    return deleted


@lru_cache(maxsize=None)
def _pascal_row(n: int) -> tuple[int, ...]:
    if n == 0:
        return (1,)
    prev = _pascal_row(n - 1)
    return tuple(a + b for a, b in zip((0,) + prev, prev + (0,)))


def oracle_sign_verdict(wins, trials, alpha=Fraction(1, 20)):
    """Pascal's-triangle binomial CDF in exact rationals."""
    row = _pascal_row(trials)
    denom = Fraction(2) ** trials
    below = sum(row[: wins + 1]) / denom
    above = sum(row[wins:]) / denom
    p = min(Fraction(1), 2 * min(below, above))
    if trials == 0 or p >= alpha:
        return SignVerdict.INCONCLUSIVE, p
    return (SignVerdict.BF_FASTER if wins > trials - wins else SignVerdict.NBF_FASTER), p
