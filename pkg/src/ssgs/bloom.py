"""Resource-level bit filters for the sufficiency test.

Each retained bit u_{r,k} means "at least k units of resource r": demanded,
when encoding a job; available, when encoding a slot. A job fits a slot
only if its word is a subset of the slot word, so one AND/NOT decides
"definitely insufficient" vs "maybe sufficient" for all resources at once.
The retained subset is chosen greedily to minimize the expected false
positive rate under the instance demand distribution and the availability
distribution observed by the instrumented pass.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from ssgs.core import AvailabilityProfile, SchedulerBase, SsgsStrategy, _checked_start, _restore
from ssgs.fast import (
    KERNEL_MULTI,
    KERNEL_SINGLE,
    InsufficiencyStats,
    Preprocessing,
    _find_single,
    data_decode_into,
    order_resources,
    preprocess,
)
from ssgs.instance import Instance, InstanceError, Job, instance_arrays

WORD_BITS = 32


@dataclass(frozen=True)
class BloomStructure:
    """Ordered list L of retained (resource, level) bits.

    Bits are grouped by resource in ascending order with strictly
    increasing levels inside each group, so every resource occupies one
    contiguous bit span of the word. Bit i of any encoded word corresponds
    to bits[i].
    """

    bits: tuple[tuple[int, int], ...]
    capacities: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.bits) > WORD_BITS:
            raise InstanceError(f"{len(self.bits)} bits exceed the {WORD_BITS}-bit word")
        prev: tuple[int, int] | None = None
        for r, k in self.bits:
            if not 0 <= r < len(self.capacities):
                raise InstanceError(f"bit ({r},{k}): resource out of range")
            if not 1 <= k <= self.capacities[r]:
                raise InstanceError(f"bit ({r},{k}): level outside [1, {self.capacities[r]}]")
            if prev is not None and (r, k) <= prev:
                raise InstanceError("bits must be strictly increasing by (resource, level)")
            prev = (r, k)

    def __len__(self) -> int:
        return len(self.bits)

    @cached_property
    def _index(self) -> dict[tuple[int, int], int]:
        return {bit: i for i, bit in enumerate(self.bits)}

    def has_bit(self, r: int, k: int) -> bool:
        return (r, k) in self._index

    def bit_position(self, r: int, k: int) -> int:
        return self._index[(r, k)]

    def levels(self, r: int) -> tuple[int, ...]:
        return tuple(k for rr, k in self.bits if rr == r)

    def span(self, r: int) -> tuple[int, int]:
        """(first bit position, bit count) of resource r's block."""
        first = None
        count = 0
        for i, (rr, _) in enumerate(self.bits):
            if rr == r:
                if first is None:
                    first = i
                count += 1
        return (first if first is not None else 0, count)

    @property
    def full_word(self) -> int:
        return (1 << len(self.bits)) - 1

    def format_word(self, word: int) -> str:
        """Render a word as per-resource bit groups, first bit leftmost."""
        groups = []
        i = 0
        for r in range(len(self.capacities)):
            _, count = self.span(r)
            groups.append("".join("1" if word >> (i + b) & 1 else "0" for b in range(count)))
            i += count
        return " ".join(g for g in groups if g)

    def dump(self) -> str:
        """One 'r k' line per bit, in list order."""
        return "\n".join(f"{r} {k}" for r, k in self.bits) + ("\n" if self.bits else "")

    @classmethod
    def from_dump(cls, text: str, capacities: tuple[int, ...]) -> "BloomStructure":
        bits = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            body = raw.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 2:
                raise InstanceError(f"line {lineno}: expected 'r k'")
            bits.append((int(parts[0]), int(parts[1])))
        return cls(tuple(sorted(bits)), tuple(capacities))


@dataclass(frozen=True)
class JobFilter:
    word: int
    exact: bool


def compute_exactness(job: Job, structure: BloomStructure) -> bool:
    """True iff every consumed resource retains the bit at exactly the job's
    demand level; the filter verdict is then the full check, no verification
    needed."""
    return all(structure.has_bit(r, v) for r, v in enumerate(job.demands) if v > 0)


def encode_job(job: Job, structure: BloomStructure) -> JobFilter:
    word = 0
    for i, (r, k) in enumerate(structure.bits):
        if job.demands[r] >= k:
            word |= 1 << i
    return JobFilter(word, compute_exactness(job, structure))


def encode_slot(column, structure: BloomStructure) -> int:
    """Word for one availability column (indexable by resource)."""
    word = 0
    for i, (r, k) in enumerate(structure.bits):
        if column[r] >= k:
            word |= 1 << i
    return word


def filter_test(job_filter: JobFilter | int, slot_word: int) -> bool:
    """True = maybe sufficient, False = definitely insufficient."""
    word = job_filter.word if isinstance(job_filter, JobFilter) else job_filter
    return (word & ~int(slot_word)) == 0


def compute_demand_distribution(instance: Instance) -> np.ndarray:
    """D[r, k]: fraction of jobs demanding exactly k units of r, k in 0..c_r.

    Rows are padded with zeros up to the largest capacity.
    """
    if instance.num_jobs == 0:
        raise InstanceError("instance has no jobs")
    width = max(instance.capacities) + 1
    d = np.zeros((instance.num_resources, width), np.float64)
    for job in instance.jobs:
        for r, v in enumerate(job.demands):
            d[r, v] += 1.0
    return d / instance.num_jobs


def availability_distribution(stats: InsufficiencyStats) -> np.ndarray:
    """E[r, k]: observed fraction of tests that saw k units available.

    A resource never observed during the instrumented pass falls back to
    the uniform distribution over 0..c_r.
    """
    hist = stats.availability_histogram
    e = np.zeros_like(hist, np.float64)
    for r, cap in enumerate(stats.capacities):
        total = hist[r, : cap + 1].sum()
        if total > 0:
            e[r, : cap + 1] = hist[r, : cap + 1] / total
        else:
            e[r, : cap + 1] = 1.0 / (cap + 1)
    return e


@dataclass(frozen=True)
class ResourceDistributions:
    demand: np.ndarray
    availability: np.ndarray
    capacities: tuple[int, ...]

    @classmethod
    def gather(cls, instance: Instance, stats: InsufficiencyStats) -> "ResourceDistributions":
        return cls(
            compute_demand_distribution(instance),
            availability_distribution(stats),
            instance.capacities,
        )


def build_structure(demand, availability, capacities, limit: int = WORD_BITS) -> BloomStructure:
    """Greedily delete bits until at most `limit` remain.

    Deleting u_{r,i} can only misclassify jobs demanding i..m-1 units
    against slots offering q..i-1 units (q, m the retained neighbors, 0 and
    c_r+1 at the edges), so each step removes the bit with the smallest
    P[demand in i..m-1] * P[availability in q..i-1], ties broken by
    smallest (r, k).
    """
    if limit < 1:
        raise InstanceError("limit must be at least 1; a zero-bit filter is vacuous")
    if limit > WORD_BITS:
        raise InstanceError(f"limit {limit} exceeds the {WORD_BITS}-bit word")
    capacities = tuple(int(c) for c in capacities)
    demand = np.asarray(demand, np.float64)
    availability = np.asarray(availability, np.float64)

    total = sum(capacities)
    if total <= limit:
        bits = tuple((r, k) for r, c in enumerate(capacities) for k in range(1, c + 1))
        return BloomStructure(bits, capacities)

    # Doubly linked level lists per resource, with 0 / c_r+1 sentinels.
    prev: list[dict[int, int]] = []
    nxt: list[dict[int, int]] = []
    alive: list[set[int]] = []
    for c in capacities:
        prev.append({k: k - 1 for k in range(1, c + 1)})
        nxt.append({k: k + 1 for k in range(1, c + 1)})
        alive.append(set(range(1, c + 1)))

    # plain float lists keep sum() cheap; the additions are the same IEEE
    # operations in the same order, so ties still break identically
    demand_rows = demand.tolist()
    avail_rows = availability.tolist()

    def cost(r: int, k: int) -> float:
        q = prev[r][k]
        m = nxt[r][k]
        return float(sum(demand_rows[r][k:m]) * sum(avail_rows[r][q:k]))

    heap = [
        (cost(r, k), r, k, prev[r][k], nxt[r][k])
        for r, c in enumerate(capacities)
        for k in range(1, c + 1)
    ]
    heapq.heapify(heap)
    while total > limit:
        c0, r, k, q0, m0 = heapq.heappop(heap)
        if k not in alive[r] or prev[r][k] != q0 or nxt[r][k] != m0:
            continue  # stale entry; a fresh one is in the heap
        alive[r].remove(k)
        q, m = prev[r][k], nxt[r][k]
        if q >= 1:
            nxt[r][q] = m
            heapq.heappush(heap, (cost(r, q), r, q, prev[r][q], m))
        if m <= capacities[r]:
            prev[r][m] = q
            heapq.heappush(heap, (cost(r, m), r, m, q, nxt[r][m]))
        total -= 1

    bits = tuple((r, k) for r in range(len(capacities)) for k in sorted(alive[r]))
    return BloomStructure(bits, capacities)


class SlotFilterBank:
    """Per-slot filter words plus the level-to-mask tables that keep them
    aligned with the availability grid under incremental updates."""

    def __init__(self, structure: BloomStructure, horizon: int):
        self.structure = structure
        caps = structure.capacities
        nres = len(caps)
        span = [0] * nres
        mask_ptr = [0] * (nres + 1)
        for r, c in enumerate(caps):
            mask_ptr[r + 1] = mask_ptr[r] + c + 1
        mask_flat = [0] * mask_ptr[-1]
        for i, (r, k) in enumerate(structure.bits):
            bit = 1 << i
            span[r] |= bit
            base = mask_ptr[r]
            for a in range(k, caps[r] + 1):
                mask_flat[base + a] |= bit
        self.span_mask = np.asarray(span, np.uint32)
        self.mask_ptr = np.asarray(mask_ptr, np.int32)
        self.mask_flat = np.asarray(mask_flat, np.uint32)
        self.full_word = np.uint32(structure.full_word)
        self.words = np.full(horizon + 1, self.full_word, np.uint32)

    def word(self, t: int) -> int:
        return int(self.words[t])

    def rebuild(self, availability: AvailabilityProfile) -> None:
        """Re-encode every slot from the live grid (slow; test support)."""
        for t in range(availability.horizon + 1):
            self.words[t] = encode_slot(availability.grid[:, t], self.structure)

    def consistent_with(self, availability: AvailabilityProfile) -> bool:
        return all(
            int(self.words[t]) == encode_slot(availability.grid[:, t], self.structure)
            for t in range(availability.horizon + 1)
        )


class BloomFilters:
    """Job words, exactness flags and the slot bank for one instance."""

    def __init__(self, instance: Instance, structure: BloomStructure, horizon: int | None = None):
        if tuple(structure.capacities) != tuple(instance.capacities):
            raise InstanceError("structure capacities do not match the instance")
        arr = instance_arrays(instance)
        self.structure = structure
        bits = structure.bits
        demands = arr.demands
        if bits:
            bit_r = np.fromiter((r for r, _ in bits), np.int64, count=len(bits))
            bit_k = np.fromiter((k for _, k in bits), np.int64, count=len(bits))
            hit = demands[:, bit_r] >= bit_k
            values = np.where(hit, np.uint32(1) << np.arange(len(bits), dtype=np.uint32), 0)
            self.job_words = np.bitwise_or.reduce(values.astype(np.uint32), axis=1)
        else:
            self.job_words = np.zeros(instance.num_jobs, np.uint32)
        caps = structure.capacities
        level_retained = np.zeros((len(caps), max(caps) + 1), bool)
        for r, k in bits:
            level_retained[r, k] = True
        demand_level_kept = level_retained[np.arange(len(caps))[None, :], demands]
        self.job_exact = np.all(demand_level_kept | (demands == 0), axis=1).astype(np.uint8)
        self.slots = SlotFilterBank(structure, horizon if horizon is not None else arr.horizon)

    def job_filter(self, j: int) -> JobFilter:
        return JobFilter(int(self.job_words[j]), bool(self.job_exact[j]))


@njit(cache=True)
def _find_bloom(grid, res_flat, dem_flat, ptr, j, t0, d, job_word, exact, slot_words):  # pragma: no cover
    """Backward scan gated by the one-word test.

    Returns (start, slot tests, full verifications). A set bit surviving
    job_word & ~slot_word means some demanded level is not available, so
    the slot is rejected without touching the grid.
    """
    horizon = grid.shape[1] - 1
    lo = ptr[j]
    hi = ptr[j + 1]
    t_j = t0
    t = t0 + d - 1
    t_test = t0
    tests = 0
    verified = 0
    if t > horizon:
        return -1, tests, verified
    while t >= t_test:
        tests += 1
        ok = (job_word & ~slot_words[t]) == np.uint32(0)
        if ok and exact == 0:
            verified += 1
            for i in range(lo, hi):
                if grid[res_flat[i], t] < dem_flat[i]:
                    ok = False
                    break
        if ok:
            t -= 1
        else:
            t_test = t_j + d
            t_j = t + 1
            t = t_j + d - 1
            if t > horizon:
                return -1, tests, verified
    return t_j, tests, verified


@njit(cache=True)
def _update_bloom(grid, res_flat, dem_flat, ptr, j, start, d, slot_words, span_mask, mask_flat, mask_ptr):  # pragma: no cover
    """Availability decrement plus word maintenance: only the touched
    resources' bit spans are rewritten from the level-mask table."""
    for i in range(ptr[j], ptr[j + 1]):
        r = res_flat[i]
        v = dem_flat[i]
        span = span_mask[r]
        base = mask_ptr[r]
        for t in range(start, start + d):
            a = grid[r, t] - v
            grid[r, t] = a
            slot_words[t] = (slot_words[t] & ~span) | mask_flat[base + a]


@njit(cache=True)
def _restore_bloom(grid, caps, slot_words, full_word, m):  # pragma: no cover
    for r in range(caps.shape[0]):
        for t in range(1, m + 1):
            grid[r, t] = caps[r]
    for t in range(1, m + 1):
        slot_words[t] = full_word


@njit(cache=True)
def _decode_bloom(
    order,
    durs,
    preds_flat,
    preds_ptr,
    res_flat,
    dem_flat,
    ptr,
    kernels,
    caps,
    grid,
    starts,
    job_words,
    job_exact,
    slot_words,
    span_mask,
    mask_flat,
    mask_ptr,
    full_word,
):  # pragma: no cover
    makespan = 0
    for k in range(order.shape[0]):
        j = order[k]
        t0 = 1
        for i in range(preds_ptr[j], preds_ptr[j + 1]):
            p = preds_flat[i]
            f = starts[p] + durs[p]
            if f > t0:
                t0 = f
        d = durs[j]
        kind = kernels[j]
        if kind == 2:
            t_j, _, _ = _find_bloom(
                grid, res_flat, dem_flat, ptr, j, t0, d, job_words[j], job_exact[j], slot_words
            )
        elif kind == 1:
            i = ptr[j]
            t_j, _ = _find_single(grid, res_flat[i], dem_flat[i], t0, d)
        else:
            t_j = t0
        _update_bloom(grid, res_flat, dem_flat, ptr, j, t_j, d, slot_words, span_mask, mask_flat, mask_ptr)
        starts[j] = t_j
        if t_j + d - 1 > makespan:
            makespan = t_j + d - 1
    _restore_bloom(grid, caps, slot_words, full_word, makespan)
    return makespan


def find_bloom(
    instance: Instance,
    job: int,
    t0: int,
    availability: AvailabilityProfile,
    filters: BloomFilters,
    prep: Preprocessing,
) -> int:
    """Filter-gated find for jobs consuming two or more resources."""
    if t0 < 1:
        raise InstanceError(f"t0 must be >= 1, got {t0}")
    if prep.kernels[job] != KERNEL_MULTI:
        raise InstanceError(f"job {job} consumes fewer than two resources; use the specialized kernel")
    arr = instance_arrays(instance)
    start, _, _ = _find_bloom(
        availability.grid,
        prep.res_flat,
        prep.dem_flat,
        prep.ptr,
        job,
        t0,
        int(arr.durations[job]),
        filters.job_words[job],
        filters.job_exact[job],
        filters.slots.words,
    )
    return _checked_start(start, job)


def instrumented_find_bloom(
    instance: Instance,
    job: int,
    t0: int,
    availability: AvailabilityProfile,
    filters: BloomFilters,
    prep: Preprocessing,
) -> tuple[int, int, int]:
    """(start, slot tests, full verifications) for counter-based tests."""
    if t0 < 1:
        raise InstanceError(f"t0 must be >= 1, got {t0}")
    if prep.kernels[job] != KERNEL_MULTI:
        raise InstanceError(f"job {job} consumes fewer than two resources; use the specialized kernel")
    arr = instance_arrays(instance)
    start, tests, verified = _find_bloom(
        availability.grid,
        prep.res_flat,
        prep.dem_flat,
        prep.ptr,
        job,
        t0,
        int(arr.durations[job]),
        filters.job_words[job],
        filters.job_exact[job],
        filters.slots.words,
    )
    return _checked_start(start, job), int(tests), int(verified)


def update_with_filters(
    instance: Instance,
    job: int,
    start: int,
    availability: AvailabilityProfile,
    filters: BloomFilters,
    prep: Preprocessing,
) -> None:
    """Consume the job's window and keep the touched slot words in sync."""
    arr = instance_arrays(instance)
    bank = filters.slots
    _update_bloom(
        availability.grid,
        prep.res_flat,
        prep.dem_flat,
        prep.ptr,
        job,
        start,
        int(arr.durations[job]),
        bank.words,
        bank.span_mask,
        bank.mask_flat,
        bank.mask_ptr,
    )


class BloomStrategy(SsgsStrategy):
    """Filter-gated strategy for the reference driver. Assumes the bound
    filters started consistent with the profile it is run against."""

    name = "bf"

    def __init__(self, instance: Instance, structure: BloomStructure, prep: Preprocessing | None = None):
        self.instance = instance
        self._arr = instance_arrays(instance)
        self.prep = prep if prep is not None else preprocess(instance)
        self.filters = BloomFilters(instance, structure)

    def find(self, job, t0, availability):
        d = int(self._arr.durations[job])
        kind = self.prep.kernels[job]
        if kind == KERNEL_MULTI:
            start, _, _ = _find_bloom(
                availability.grid,
                self.prep.res_flat,
                self.prep.dem_flat,
                self.prep.ptr,
                job,
                t0,
                d,
                self.filters.job_words[job],
                self.filters.job_exact[job],
                self.filters.slots.words,
            )
        elif kind == KERNEL_SINGLE:
            i = self.prep.ptr[job]
            start, _ = _find_single(
                availability.grid, int(self.prep.res_flat[i]), int(self.prep.dem_flat[i]), t0, d
            )
        else:
            start = t0
        return int(start)

    def update(self, job, start, availability):
        update_with_filters(self.instance, job, start, availability, self.filters, self.prep)

    def on_schedule(self, schedule):
        # the fused restore is not in play here; re-fill the touched words
        self.filters.slots.words[1 : schedule.makespan + 1] = self.filters.slots.full_word


class BloomScheduler(SchedulerBase):
    """BF decoder. The first execution is the instrumented pass; it fixes
    the resource test order, extracts the distributions and builds the
    filter structure used from the second execution on."""

    name = "bf"

    def __init__(self, instance: Instance, limit: int = WORD_BITS, learn_order: bool = True):
        super().__init__(instance)
        self.prep = preprocess(instance)
        self.limit = limit
        self.stats: InsufficiencyStats | None = None
        self.structure: BloomStructure | None = None
        self.filters: BloomFilters | None = None
        self._learn_order = learn_order
        self._demand = compute_demand_distribution(instance) if instance.num_jobs else None

    def decode(self, order: np.ndarray) -> int:
        if self.filters is None:
            makespan, stats = data_decode_into(self.arrays, self.prep, self.profile.grid, self._starts, order)
            self.stats = stats
            if self._learn_order:
                order_resources(self.prep, stats)
            self.structure = build_structure(
                self._demand, availability_distribution(stats), self.instance.capacities, self.limit
            )
            self.filters = BloomFilters(self.instance, self.structure, self.arrays.horizon)
            return makespan
        a = self.arrays
        p = self.prep
        bank = self.filters.slots
        return int(
            _decode_bloom(
                order,
                a.durations,
                a.preds_flat,
                a.preds_ptr,
                p.res_flat,
                p.dem_flat,
                p.ptr,
                p.kernels,
                a.capacities,
                self.profile.grid,
                self._starts,
                self.filters.job_words,
                self.filters.job_exact,
                bank.words,
                bank.span_mask,
                bank.mask_flat,
                bank.mask_ptr,
                bank.full_word,
            )
        )
