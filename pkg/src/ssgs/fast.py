"""Enhanced serial generation: backward window scan with slot-skip logic,
per-job consumed-resource lists, insufficiency-driven resource ordering,
a single-resource specialization, and the instrumented data pass that
feeds both the ordering and the filter construction downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ssgs.core import AvailabilityProfile, SchedulerBase, SsgsStrategy, _checked_start, _restore
from ssgs.instance import (
    Instance,
    InstanceError,
    Permutation,
    Schedule,
    instance_arrays,
    is_precedence_feasible,
)

KERNEL_NONE = 0
KERNEL_SINGLE = 1
KERNEL_MULTI = 2

_KERNEL_NAMES = {KERNEL_NONE: "none", KERNEL_SINGLE: "single", KERNEL_MULTI: "multi"}


@dataclass(frozen=True)
class JobPreprocess:
    """Read-only view of one job's consumed-resource data."""

    consumed: tuple[int, ...]
    demands: tuple[int, ...]
    kernel: str


class Preprocessing:
    """Consumed-resource lists for all jobs, CSR layout.

    Job j tests resources res_flat[ptr[j]:ptr[j+1]] in stored order; the
    aligned demands sit in dem_flat. order_resources() rewrites segment
    order in place, reset_order() returns to ascending resource ids.
    """

    def __init__(self, res_flat: np.ndarray, dem_flat: np.ndarray, ptr: np.ndarray, kernels: np.ndarray):
        self.res_flat = res_flat
        self.dem_flat = dem_flat
        self.ptr = ptr
        self.kernels = kernels

    def __len__(self) -> int:
        return len(self.kernels)

    def job(self, j: int) -> JobPreprocess:
        lo, hi = self.ptr[j], self.ptr[j + 1]
        return JobPreprocess(
            tuple(int(r) for r in self.res_flat[lo:hi]),
            tuple(int(v) for v in self.dem_flat[lo:hi]),
            _KERNEL_NAMES[int(self.kernels[j])],
        )

    def reset_order(self) -> None:
        jobs = np.repeat(np.arange(len(self.kernels), dtype=np.int64), np.diff(self.ptr))
        order = np.lexsort((self.res_flat, jobs))
        self.res_flat[:] = self.res_flat[order]
        self.dem_flat[:] = self.dem_flat[order]


def preprocess(instance: Instance) -> Preprocessing:
    """Extract R_j, aligned demands and kernel tags, ascending resource order."""
    n = instance.num_jobs
    ptr = np.zeros(n + 1, np.int32)
    res: list[int] = []
    dem: list[int] = []
    kernels = np.zeros(n, np.int8)
    for j, job in enumerate(instance.jobs):
        consumed = [(r, v) for r, v in enumerate(job.demands) if v > 0]
        for r, v in consumed:
            res.append(r)
            dem.append(v)
        ptr[j + 1] = len(res)
        if len(consumed) == 1:
            kernels[j] = KERNEL_SINGLE
        elif len(consumed) > 1:
            kernels[j] = KERNEL_MULTI
    return Preprocessing(np.asarray(res, np.int32), np.asarray(dem, np.int32), ptr, kernels)


@dataclass
class InsufficiencyStats:
    """Tallies from one instrumented execution.

    counts[j, r] is how often resource r was observed insufficient for job
    j; availability_histogram[r, a] is how often a consumed-resource test
    saw a units available. Bins run 0..c_r per resource (rows are padded
    to the largest capacity).
    """

    counts: np.ndarray
    availability_histogram: np.ndarray
    capacities: tuple[int, ...]


def order_resources(prep: Preprocessing, stats: InsufficiencyStats) -> None:
    """Reorder each R_j by descending insufficiency count, ties by resource id.

    One global lexsort keyed by (job, -count, resource): entries stay grouped
    by job because the job is the primary key, and within a job every
    resource id is unique, so the order is total."""
    jobs = np.repeat(np.arange(len(prep), dtype=np.int64), np.diff(prep.ptr))
    neg_counts = -stats.counts[jobs, prep.res_flat]
    order = np.lexsort((prep.res_flat, neg_counts, jobs))
    prep.res_flat[:] = prep.res_flat[order]
    prep.dem_flat[:] = prep.dem_flat[order]


@njit(cache=True)
def _find_enhanced(grid, res_flat, dem_flat, ptr, j, t0, d):  # pragma: no cover
    """Backward window scan; returns (start, slot sufficiency tests).

    A failure at slot t rules out every start in [t_j, t], so the window
    restarts at t+1 and only its yet-unseen tail (below the old window's
    end, tracked by t_test) needs testing.
    """
    horizon = grid.shape[1] - 1
    lo = ptr[j]
    hi = ptr[j + 1]
    t_j = t0
    t = t0 + d - 1
    t_test = t0
    tests = 0
    if t > horizon:
        return -1, tests
    while t >= t_test:
        tests += 1
        ok = True
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
                return -1, tests
    return t_j, tests


@njit(cache=True)
def _find_single(grid, r, v, t0, d):  # pragma: no cover
    horizon = grid.shape[1] - 1
    t_j = t0
    t = t0 + d - 1
    t_test = t0
    tests = 0
    if t > horizon:
        return -1, tests
    while t >= t_test:
        tests += 1
        if grid[r, t] >= v:
            t -= 1
        else:
            t_test = t_j + d
            t_j = t + 1
            t = t_j + d - 1
            if t > horizon:
                return -1, tests
    return t_j, tests


@njit(cache=True)
def _update_consumed(grid, res_flat, dem_flat, ptr, j, start, d):  # pragma: no cover
    for i in range(ptr[j], ptr[j + 1]):
        r = res_flat[i]
        v = dem_flat[i]
        for t in range(start, start + d):
            grid[r, t] -= v


@njit(cache=True)
def _decode_enhanced(
    order, durs, preds_flat, preds_ptr, res_flat, dem_flat, ptr, kernels, caps, grid, starts
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
            t_j, _ = _find_enhanced(grid, res_flat, dem_flat, ptr, j, t0, d)
        elif kind == 1:
            i = ptr[j]
            t_j, _ = _find_single(grid, res_flat[i], dem_flat[i], t0, d)
        else:
            t_j = t0
        _update_consumed(grid, res_flat, dem_flat, ptr, j, t_j, d)
        starts[j] = t_j
        if t_j + d - 1 > makespan:
            makespan = t_j + d - 1
    _restore(grid, caps, makespan)
    return makespan


@njit(cache=True)
def _decode_data(
    order, durs, preds_flat, preds_ptr, res_flat, dem_flat, ptr, caps, grid, starts, counts, hist
):  # pragma: no cover
    """Instrumented decode: no early exits, every consumed-resource test is
    tallied into the availability histogram and failures into counts."""
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
        t_j = t0
        t = t0 + d - 1
        t_test = t0
        while t >= t_test:
            ok = True
            for i in range(ptr[j], ptr[j + 1]):
                r = res_flat[i]
                a = grid[r, t]
                hist[r, a] += 1
                if a < dem_flat[i]:
                    counts[j, r] += 1
                    ok = False
            if ok:
                t -= 1
            else:
                t_test = t_j + d
                t_j = t + 1
                t = t_j + d - 1
        _update_consumed(grid, res_flat, dem_flat, ptr, j, t_j, d)
        starts[j] = t_j
        if t_j + d - 1 > makespan:
            makespan = t_j + d - 1
    _restore(grid, caps, makespan)
    return makespan


def find_enhanced(
    instance: Instance, job: int, t0: int, availability: AvailabilityProfile, prep: Preprocessing
) -> int:
    """Same slot as find_conventional, found with the backward-scan logic."""
    if t0 < 1:
        raise InstanceError(f"t0 must be >= 1, got {t0}")
    arr = instance_arrays(instance)
    start, _ = _find_enhanced(
        availability.grid, prep.res_flat, prep.dem_flat, prep.ptr, job, t0, int(arr.durations[job])
    )
    return _checked_start(start, job)


def instrumented_find_enhanced(
    instance: Instance, job: int, t0: int, availability: AvailabilityProfile, prep: Preprocessing
) -> tuple[int, int]:
    if t0 < 1:
        raise InstanceError(f"t0 must be >= 1, got {t0}")
    arr = instance_arrays(instance)
    start, tests = _find_enhanced(
        availability.grid, prep.res_flat, prep.dem_flat, prep.ptr, job, t0, int(arr.durations[job])
    )
    return _checked_start(start, job), int(tests)


def _single_resource_of(prep: Preprocessing, job: int) -> tuple[int, int]:
    if prep.kernels[job] != KERNEL_SINGLE:
        raise InstanceError(f"job {job} does not consume exactly one resource")
    i = prep.ptr[job]
    return int(prep.res_flat[i]), int(prep.dem_flat[i])


def find_single_resource(
    instance: Instance, job: int, t0: int, availability: AvailabilityProfile, prep: Preprocessing
) -> int:
    """Backward-scan find for jobs consuming exactly one resource."""
    if t0 < 1:
        raise InstanceError(f"t0 must be >= 1, got {t0}")
    arr = instance_arrays(instance)
    r, v = _single_resource_of(prep, job)
    start, _ = _find_single(availability.grid, r, v, t0, int(arr.durations[job]))
    return _checked_start(start, job)


def update_single_resource(
    instance: Instance, job: int, start: int, availability: AvailabilityProfile, prep: Preprocessing
) -> None:
    arr = instance_arrays(instance)
    r, v = _single_resource_of(prep, job)
    availability.grid[r, start : start + int(arr.durations[job])] -= v


def update_consumed(
    instance: Instance, job: int, start: int, availability: AvailabilityProfile, prep: Preprocessing
) -> None:
    """Decrement only the resources the job actually consumes."""
    arr = instance_arrays(instance)
    _update_consumed(
        availability.grid, prep.res_flat, prep.dem_flat, prep.ptr, job, start, int(arr.durations[job])
    )


def data_decode_into(arr, prep: Preprocessing, grid, starts, order) -> tuple[int, InsufficiencyStats]:
    """Instrumented decode over raw buffers; shared by the schedulers that
    bootstrap from one data pass."""
    caps = tuple(int(c) for c in arr.capacities)
    stats = InsufficiencyStats(
        counts=np.zeros((arr.durations.shape[0], len(caps)), np.int64),
        availability_histogram=np.zeros((len(caps), (max(caps) if caps else 0) + 1), np.int64),
        capacities=caps,
    )
    makespan = _decode_data(
        order,
        arr.durations,
        arr.preds_flat,
        arr.preds_ptr,
        prep.res_flat,
        prep.dem_flat,
        prep.ptr,
        arr.capacities,
        grid,
        starts,
        stats.counts,
        stats.availability_histogram,
    )
    return int(makespan), stats


def ssgs_data_run(
    instance: Instance,
    permutation: Permutation,
    availability: AvailabilityProfile,
    prep: Preprocessing | None = None,
) -> tuple[Schedule, InsufficiencyStats]:
    """One instrumented execution. The schedule is identical to any other
    variant's; the price is that sufficiency tests never exit early.

    Requires a clean profile: the availability histogram is only meaningful
    from capacity, and cleanliness bounds every scanned window by the horizon.
    """
    if not is_precedence_feasible(instance, permutation):
        raise InstanceError("permutation is not precedence-feasible")
    if not availability.is_clean():
        raise InstanceError("data run requires a fully restored availability profile")
    if prep is None:
        prep = preprocess(instance)
    arr = instance_arrays(instance)
    starts = np.zeros(instance.num_jobs, np.int32)
    order = np.asarray(permutation.order, np.int64)
    makespan, stats = data_decode_into(arr, prep, availability.grid, starts, order)
    return Schedule(tuple(int(t) for t in starts), makespan), stats


class EnhancedStrategy(SsgsStrategy):
    """Backward-scan find over a shared Preprocessing (multi and single
    resource kernels; zero-demand jobs start at t0 directly)."""

    name = "nbf"

    def __init__(self, instance: Instance, prep: Preprocessing | None = None):
        self.instance = instance
        self._arr = instance_arrays(instance)
        self.prep = prep if prep is not None else preprocess(instance)

    def find(self, job, t0, availability):
        d = int(self._arr.durations[job])
        kind = self.prep.kernels[job]
        if kind == KERNEL_MULTI:
            start, _ = _find_enhanced(
                availability.grid, self.prep.res_flat, self.prep.dem_flat, self.prep.ptr, job, t0, d
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
        _update_consumed(
            availability.grid,
            self.prep.res_flat,
            self.prep.dem_flat,
            self.prep.ptr,
            job,
            start,
            int(self._arr.durations[job]),
        )


class EnhancedScheduler(SchedulerBase):
    """NBF decoder. The first execution runs the instrumented pass and
    locks in the per-job resource test order for the rest of the run."""

    name = "nbf"

    def __init__(self, instance: Instance, learn_order: bool = True):
        super().__init__(instance)
        self.prep = preprocess(instance)
        self.stats: InsufficiencyStats | None = None
        self._learn = learn_order

    def decode(self, order: np.ndarray) -> int:
        if self._learn and self.stats is None:
            makespan, stats = data_decode_into(self.arrays, self.prep, self.profile.grid, self._starts, order)
            self.stats = stats
            order_resources(self.prep, stats)
            return makespan
        a = self.arrays
        p = self.prep
        return int(
            _decode_enhanced(
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
            )
        )
