"""Serial schedule generation: availability profile, conventional decoder,
and a strategy-driven reference driver.

The decode kernels are compiled with numba and shared between the generic
driver (one Python call per job) and the fused per-execution decoders used
by the schedulers, so both paths run the same slot arithmetic.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from numba import njit

from ssgs.instance import (
    Instance,
    InstanceError,
    Permutation,
    Schedule,
    instance_arrays,
    is_precedence_feasible,
)


class AvailabilityProfile:
    """Remaining capacity per (resource, slot) over slots 1..T.

    Column 0 is never consumed; keeping it at capacity makes cleanliness a
    single grid-wide comparison. The profile persists across executions:
    each decode consumes cells and then restores exactly the slots it
    touched (1..makespan), so restore cost tracks the schedule, not T.
    """

    __slots__ = ("grid", "capacities", "horizon")

    def __init__(self, capacities, horizon: int):
        caps = np.asarray(capacities, np.int32)
        self.capacities = caps
        self.horizon = int(horizon)
        self.grid = np.repeat(caps[:, None], self.horizon + 1, axis=1)

    @classmethod
    def for_instance(cls, instance: Instance) -> "AvailabilityProfile":
        arr = instance_arrays(instance)
        return cls(arr.capacities, arr.horizon)

    def availability(self, t: int, r: int) -> int:
        return int(self.grid[r, t])

    def column(self, t: int) -> np.ndarray:
        """View of all resource availabilities at slot t."""
        return self.grid[:, t]

    def is_clean(self) -> bool:
        return bool((self.grid == self.capacities[:, None]).all())

    def restore(self, makespan: int) -> int:
        """Reset slots 1..makespan to capacity. Returns the cells written."""
        m = int(makespan)
        self.grid[:, 1 : m + 1] = self.capacities[:, None]
        return m * self.grid.shape[0]


@njit(cache=True)
def _find_conventional(grid, dems, j, t0, d):  # pragma: no cover
    """Forward scan; returns (start, slot sufficiency tests performed).

    Start is -1 when no window fits before the end of the grid; unreachable
    when every consumed slot came from earliest-start placement, since then
    windows never extend past the horizon.
    """
    horizon = grid.shape[1] - 1
    t_j = t0
    t = t0
    tests = 0
    nres = grid.shape[0]
    if t_j + d - 1 > horizon:
        return -1, tests
    while t < t_j + d:
        tests += 1
        ok = True
        for r in range(nres):
            if grid[r, t] < dems[j, r]:
                ok = False
                break
        if ok:
            t += 1
        else:
            t_j = t + 1
            t = t_j
            if t_j + d - 1 > horizon:
                return -1, tests
    return t_j, tests


@njit(cache=True)
def _update(grid, dems, j, start, d):  # pragma: no cover
    nres = grid.shape[0]
    for r in range(nres):
        v = dems[j, r]
        if v != 0:
            for t in range(start, start + d):
                grid[r, t] -= v


@njit(cache=True)
def _restore(grid, caps, m):  # pragma: no cover
    for r in range(caps.shape[0]):
        for t in range(1, m + 1):
            grid[r, t] = caps[r]


@njit(cache=True)
def _decode_conventional(order, durs, dems, preds_flat, preds_ptr, caps, grid, starts):  # pragma: no cover
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
        t_j, _ = _find_conventional(grid, dems, j, t0, d)
        _update(grid, dems, j, t_j, d)
        starts[j] = t_j
        if t_j + d - 1 > makespan:
            makespan = t_j + d - 1
    _restore(grid, caps, makespan)
    return makespan


def _checked_start(start: int, job: int) -> int:
    if start < 0:
        raise InstanceError(f"job {job}: no feasible start within the horizon")
    return int(start)


def find_conventional(instance: Instance, job: int, t0: int, availability: AvailabilityProfile) -> int:
    """Earliest start >= t0 with enough capacity over the whole job window."""
    if t0 < 1:
        raise InstanceError(f"t0 must be >= 1, got {t0}")
    arr = instance_arrays(instance)
    start, _ = _find_conventional(availability.grid, arr.demands, job, t0, int(arr.durations[job]))
    return _checked_start(start, job)


def instrumented_find_conventional(
    instance: Instance, job: int, t0: int, availability: AvailabilityProfile
) -> tuple[int, int]:
    """Same as find_conventional but also reports slot tests performed."""
    if t0 < 1:
        raise InstanceError(f"t0 must be >= 1, got {t0}")
    arr = instance_arrays(instance)
    start, tests = _find_conventional(availability.grid, arr.demands, job, t0, int(arr.durations[job]))
    return _checked_start(start, job), int(tests)


def update_availability(instance: Instance, job: int, start: int, availability: AvailabilityProfile) -> None:
    arr = instance_arrays(instance)
    d = int(arr.durations[job])
    _update(availability.grid, arr.demands, job, start, d)
    assert availability.grid[:, start : start + d].min() >= 0, "availability went negative: find returned an infeasible slot"


def restore_availability(availability: AvailabilityProfile, schedule: Schedule) -> int:
    return availability.restore(schedule.makespan)


def precedence_earliest_start(instance: Instance, job: int, scheduled: Mapping[int, int]) -> int:
    """Earliest slot compatible with the already-placed predecessors of job."""
    t0 = 1
    for p in instance.jobs[job].predecessors:
        if p not in scheduled:
            raise InstanceError(f"predecessor {p} of job {job} is not scheduled yet")
        t0 = max(t0, scheduled[p] + instance.jobs[p].duration)
    return t0


class SsgsStrategy:
    """find/update pair plugged into ssgs_run. Strategies may keep learned
    state across executions (resource orderings, filters); on_schedule fires
    after each completed run."""

    name = "?"

    def find(self, job: int, t0: int, availability: AvailabilityProfile) -> int:
        raise NotImplementedError

    def update(self, job: int, start: int, availability: AvailabilityProfile) -> None:
        raise NotImplementedError

    def on_schedule(self, schedule: Schedule) -> None:
        pass


class ConventionalStrategy(SsgsStrategy):
    name = "conv"

    def __init__(self, instance: Instance):
        self.instance = instance
        self._arr = instance_arrays(instance)

    def find(self, job, t0, availability):
        start, _ = _find_conventional(
            availability.grid, self._arr.demands, job, t0, int(self._arr.durations[job])
        )
        return int(start)

    def update(self, job, start, availability):
        _update(availability.grid, self._arr.demands, job, start, int(self._arr.durations[job]))


def ssgs_run(
    instance: Instance,
    permutation: Permutation,
    availability: AvailabilityProfile,
    strategy: SsgsStrategy,
) -> Schedule:
    """Reference serial generation loop over an explicit strategy.

    Checks its contracts as it goes (feasible permutation, horizon bound,
    never-negative availability), which makes it the slow path; the
    schedulers below fuse the same per-job steps into one compiled call.
    """
    if not is_precedence_feasible(instance, permutation):
        raise InstanceError("permutation is not precedence-feasible")
    scheduled: dict[int, int] = {}
    makespan = 0
    for j in permutation.order:
        t0 = precedence_earliest_start(instance, j, scheduled)
        start = strategy.find(j, t0, availability)
        if start < 1:
            raise InstanceError(f"job {j}: no feasible start within the horizon")
        d = instance.jobs[j].duration
        assert start + d - 1 <= availability.horizon, "window exceeds the horizon"
        strategy.update(j, start, availability)
        assert availability.grid[:, start : start + d].min() >= 0, "availability went negative"
        scheduled[j] = start
        makespan = max(makespan, start + d - 1)
    availability.restore(makespan)
    schedule = Schedule(tuple(scheduled[j] for j in range(instance.num_jobs)), makespan)
    strategy.on_schedule(schedule)
    return schedule


def order_array(permutation: Permutation) -> np.ndarray:
    return np.asarray(permutation.order, np.int64)


class SchedulerBase:
    """Base for the four interchangeable decoders.

    execute() validates the permutation and returns a Schedule. decode()
    is the metaheuristic hot path: it takes a raw job-index array, trusts
    precedence feasibility, writes starts into a reused buffer and returns
    the makespan.
    """

    name = "?"

    def __init__(self, instance: Instance):
        self.instance = instance
        self.arrays = instance_arrays(instance)
        self.profile = AvailabilityProfile.for_instance(instance)
        self._starts = np.zeros(instance.num_jobs, np.int32)

    def decode(self, order: np.ndarray) -> int:
        raise NotImplementedError

    @property
    def last_starts(self) -> np.ndarray:
        """Start slots of the most recent decode (shared buffer)."""
        return self._starts

    def execute(self, permutation: Permutation) -> Schedule:
        if not is_precedence_feasible(self.instance, permutation):
            raise InstanceError("permutation is not precedence-feasible")
        makespan = self.decode(order_array(permutation))
        return Schedule(tuple(int(t) for t in self._starts), makespan)


class ConventionalScheduler(SchedulerBase):
    """Baseline decoder: forward scan, no preprocessing, no learned state."""

    name = "conv"

    def decode(self, order: np.ndarray) -> int:
        a = self.arrays
        return int(
            _decode_conventional(
                order,
                a.durations,
                a.demands,
                a.preds_flat,
                a.preds_ptr,
                a.capacities,
                self.profile.grid,
                self._starts,
            )
        )
