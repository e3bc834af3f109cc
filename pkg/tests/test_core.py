import random

import numpy as np
import pytest

from ssgs.core import (
    AvailabilityProfile,
    ConventionalScheduler,
    ConventionalStrategy,
    find_conventional,
    instrumented_find_conventional,
    precedence_earliest_start,
    restore_availability,
    ssgs_run,
    update_availability,
)
from ssgs.instance import (
    Instance,
    InstanceError,
    Job,
    Permutation,
    Schedule,
    horizon,
    random_topological_permutation,
    validate_schedule,
)
from conftest import naive_ssgs, random_instance


def two_job_instance():
    return Instance(
        jobs=(Job(2, (2,), frozenset()), Job(3, (1,), frozenset())),
        capacities=(2,),
    )


def blocked_slot_instance():
    # job 2 only pads the horizon so a late blocker leaves room to restart
    return Instance(
        jobs=(Job(1, (2,), frozenset()), Job(3, (1,), frozenset()), Job(3, (0,), frozenset())),
        capacities=(2,),
    )


class TestAvailabilityProfile:
    def test_starts_clean_at_capacity(self):
        inst = random_instance(0)
        profile = AvailabilityProfile.for_instance(inst)
        assert profile.grid.shape == (inst.num_resources, horizon(inst) + 1)
        assert profile.is_clean()
        assert profile.availability(1, 0) == inst.capacities[0]

    def test_restore_clears_consumed_prefix(self):
        inst = two_job_instance()
        profile = AvailabilityProfile.for_instance(inst)
        update_availability(inst, 0, 1, profile)
        assert not profile.is_clean()
        assert profile.availability(1, 0) == 0
        written = profile.restore(2)
        assert written == 2
        assert profile.is_clean()

    def test_column_is_a_view(self):
        inst = two_job_instance()
        profile = AvailabilityProfile.for_instance(inst)
        col = profile.column(3)
        update_availability(inst, 1, 3, profile)
        assert col[0] == 1


class TestFindConventional:
    def test_skips_busy_prefix(self):
        inst = two_job_instance()
        profile = AvailabilityProfile.for_instance(inst)
        update_availability(inst, 0, 1, profile)  # slots 1..2 fully used
        assert find_conventional(inst, 1, 1, profile) == 3

    def test_window_restarts_after_late_failure(self):
        # room at slots 1..2 but not 3: a 3-slot job must restart at 4
        inst = blocked_slot_instance()
        profile = AvailabilityProfile.for_instance(inst)
        update_availability(inst, 0, 3, profile)
        assert find_conventional(inst, 1, 1, profile) == 4

    def test_rejects_nonpositive_t0(self):
        inst = two_job_instance()
        profile = AvailabilityProfile.for_instance(inst)
        with pytest.raises(InstanceError):
            find_conventional(inst, 0, 0, profile)

    def test_no_feasible_start_raises(self):
        # the whole horizon consumed by hand: nothing fits any more
        inst = two_job_instance()
        profile = AvailabilityProfile.for_instance(inst)
        profile.grid[:, 1:] = 0
        with pytest.raises(InstanceError, match="horizon"):
            find_conventional(inst, 1, 1, profile)

    def test_instrumented_counts_every_slot_test(self):
        inst = blocked_slot_instance()
        profile = AvailabilityProfile.for_instance(inst)
        update_availability(inst, 0, 3, profile)
        start, tests = instrumented_find_conventional(inst, 1, 1, profile)
        assert start == 4
        # slots 1,2 pass, 3 fails, then 4,5,6 pass
        assert tests == 6

    def test_clean_profile_places_at_t0(self):
        inst = random_instance(5)
        profile = AvailabilityProfile.for_instance(inst)
        start, tests = instrumented_find_conventional(inst, 3, 2, profile)
        assert start == 2
        assert tests == inst.jobs[3].duration


class TestPrecedenceEarliestStart:
    def test_maximum_over_predecessors(self):
        inst = Instance(
            jobs=(
                Job(4, (0,), frozenset()),
                Job(1, (0,), frozenset()),
                Job(2, (0,), frozenset({0, 1})),
            ),
            capacities=(1,),
        )
        assert precedence_earliest_start(inst, 2, {0: 1, 1: 3}) == 5

    def test_no_predecessors_gives_one(self):
        assert precedence_earliest_start(two_job_instance(), 0, {}) == 1

    def test_unscheduled_predecessor_raises(self):
        inst = Instance(
            jobs=(Job(1, (0,), frozenset()), Job(1, (0,), frozenset({0}))),
            capacities=(1,),
        )
        with pytest.raises(InstanceError, match="not scheduled"):
            precedence_earliest_start(inst, 1, {})


class TestSsgsRun:
    def test_matches_naive_oracle(self):
        for seed in range(25):
            inst = random_instance(seed, num_jobs=12)
            profile = AvailabilityProfile.for_instance(inst)
            strategy = ConventionalStrategy(inst)
            for perm_seed in range(4):
                perm = random_topological_permutation(inst, perm_seed)
                schedule = ssgs_run(inst, perm, profile, strategy)
                assert schedule.starts == naive_ssgs(inst, perm)
                assert validate_schedule(inst, schedule).ok

    def test_leaves_profile_clean(self):
        inst = random_instance(1)
        profile = AvailabilityProfile.for_instance(inst)
        ssgs_run(inst, random_topological_permutation(inst, 0), profile, ConventionalStrategy(inst))
        assert profile.is_clean()

    def test_rejects_infeasible_permutation(self):
        inst = Instance(
            jobs=(Job(1, (0,), frozenset()), Job(1, (0,), frozenset({0}))),
            capacities=(1,),
        )
        profile = AvailabilityProfile.for_instance(inst)
        with pytest.raises(InstanceError, match="feasible"):
            ssgs_run(inst, Permutation((1, 0)), profile, ConventionalStrategy(inst))


class TestConventionalScheduler:
    def test_execute_matches_ssgs_run(self):
        inst = random_instance(8, num_jobs=25)
        scheduler = ConventionalScheduler(inst)
        profile = AvailabilityProfile.for_instance(inst)
        strategy = ConventionalStrategy(inst)
        for perm_seed in range(6):
            perm = random_topological_permutation(inst, perm_seed)
            assert scheduler.execute(perm) == ssgs_run(inst, perm, profile, strategy)

    def test_profile_clean_between_decodes(self):
        inst = random_instance(2)
        scheduler = ConventionalScheduler(inst)
        scheduler.execute(random_topological_permutation(inst, 0))
        assert scheduler.profile.is_clean()

    def test_last_starts_tracks_most_recent_decode(self):
        inst = random_instance(2)
        scheduler = ConventionalScheduler(inst)
        a = scheduler.execute(random_topological_permutation(inst, 0))
        assert tuple(scheduler.last_starts) == a.starts
        b = scheduler.execute(random_topological_permutation(inst, 5))
        assert tuple(scheduler.last_starts) == b.starts

    def test_rejects_infeasible_permutation(self):
        inst = Instance(
            jobs=(Job(1, (0,), frozenset()), Job(1, (0,), frozenset({0}))),
            capacities=(1,),
        )
        with pytest.raises(InstanceError):
            ConventionalScheduler(inst).execute(Permutation((1, 0)))


def test_update_then_restore_round_trip():
    rng = random.Random(3)
    inst = random_instance(3, num_jobs=10)
    profile = AvailabilityProfile.for_instance(inst)
    before = profile.grid.copy()
    perm = random_topological_permutation(inst, 1)
    schedule = ssgs_run(inst, perm, profile, ConventionalStrategy(inst))
    restore_availability(profile, schedule)
    assert np.array_equal(profile.grid, before)
