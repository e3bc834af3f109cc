import random

import pytest

from ssgs.bloom import BloomScheduler
from ssgs.core import ConventionalScheduler
from ssgs.fast import EnhancedScheduler
from ssgs.hybrid import HybridScheduler
from ssgs.instance import (
    Instance,
    Job,
    Permutation,
    random_topological_permutation,
    successors,
    validate_schedule,
)
from ssgs.metaheuristic import (
    accept,
    feasible_positions,
    propose_move,
    run_metaheuristic,
)
from conftest import random_instance


def is_precedence_feasible(order, instance):
    pos = {j: i for i, j in enumerate(order)}
    return all(
        pos[p] < pos[j] for j in range(instance.num_jobs) for p in instance.jobs[j].predecessors
    )


def chain_instance():
    return Instance(
        jobs=(
            Job(1, (1,), frozenset()),
            Job(2, (1,), frozenset({0})),
            Job(1, (1,), frozenset({1})),
            Job(3, (1,), frozenset()),
        ),
        capacities=(2,),
    )


class TestFeasiblePositions:
    def test_chain_locks_middle_job(self):
        inst = chain_instance()
        perm = Permutation((0, 1, 2, 3))
        # job 1 sits between its predecessor and successor
        assert feasible_positions(perm, inst, 1) == (2, 2)
        # job 3 is free to move anywhere
        assert feasible_positions(perm, inst, 3) == (1, 4)
        assert feasible_positions(perm, inst, 0) == (1, 1)

    def test_interval_contains_current_position(self):
        for seed in range(10):
            inst = random_instance(seed, num_jobs=15)
            perm = random_topological_permutation(inst, seed)
            pos = {j: i + 1 for i, j in enumerate(perm.order)}
            for j in range(inst.num_jobs):
                lo, hi = feasible_positions(perm, inst, j)
                assert lo <= pos[j] <= hi

    def test_every_position_in_interval_is_feasible(self):
        inst = random_instance(3, num_jobs=12)
        perm = random_topological_permutation(inst, 1)
        for j in range(inst.num_jobs):
            lo, hi = feasible_positions(perm, inst, j)
            for target in range(1, inst.num_jobs + 1):
                order = list(perm.order)
                order.remove(j)
                order.insert(target - 1, j)
                assert is_precedence_feasible(order, inst) == (lo <= target <= hi)


class TestProposeMove:
    def test_result_is_feasible_permutation(self):
        inst = random_instance(4, num_jobs=18)
        perm = random_topological_permutation(inst, 0)
        rng = random.Random(7)
        for _ in range(200):
            perm = propose_move(perm, inst, rng)
            assert sorted(perm.order) == list(range(inst.num_jobs))
            assert is_precedence_feasible(perm.order, inst)

    def test_deterministic_for_fixed_rng(self):
        inst = random_instance(5, num_jobs=14)
        perm = random_topological_permutation(inst, 2)
        a = propose_move(perm, inst, random.Random(11))
        b = propose_move(perm, inst, random.Random(11))
        assert a == b

    def test_split_streams_match_single_stream_draw_order(self):
        inst = random_instance(6, num_jobs=14)
        perm = random_topological_permutation(inst, 2)
        rng = random.Random(3)
        job = rng.randrange(inst.num_jobs)
        lo, hi = feasible_positions(perm, inst, job)
        target = random.Random(4).randint(lo, hi)
        moved = propose_move(perm, inst, random.Random(3), random.Random(4))
        order = list(perm.order)
        order.remove(job)
        order.insert(target - 1, job)
        assert moved == Permutation(tuple(order))


class TestAccept:
    def test_not_worse_always_passes(self):
        rng = random.Random(0)
        assert accept(10, 9, rng)
        assert accept(10, 10, rng)

    def test_worse_is_a_fair_coin(self):
        rng = random.Random(1)
        taken = sum(accept(10, 11, rng) for _ in range(4000))
        assert 1850 <= taken <= 2150

    def test_worse_consumes_exactly_one_draw(self):
        rng = random.Random(2)
        mirror = random.Random(2)
        for _ in range(50):
            outcome = accept(5, 6, rng)
            assert outcome == (mirror.random() < 0.5)


class TestRunMetaheuristic:
    def test_same_seed_same_run(self):
        inst = random_instance(8, num_jobs=15)
        res = [
            run_metaheuristic(inst, ConventionalScheduler(inst), iterations=300, seed=5)
            for _ in range(2)
        ]
        (s1, r1), (s2, r2) = res
        assert s1 == s2
        assert r1.trajectory == r2.trajectory
        assert r1.accepted == r2.accepted

    def test_search_path_is_scheduler_independent(self):
        inst = random_instance(9, num_jobs=20)
        outcomes = []
        for scheduler in (
            ConventionalScheduler(inst),
            EnhancedScheduler(inst),
            BloomScheduler(inst),
            HybridScheduler(inst, period_length=50, alternation_cap=10),
        ):
            schedule, stats = run_metaheuristic(inst, scheduler, iterations=400, seed=3)
            outcomes.append((schedule, stats.trajectory, stats.accepted))
        assert all(o == outcomes[0] for o in outcomes[1:])

    def test_best_schedule_is_valid_and_improves(self):
        inst = random_instance(10, num_jobs=25)
        schedule, stats = run_metaheuristic(
            inst, ConventionalScheduler(inst), iterations=500, seed=1
        )
        assert validate_schedule(inst, schedule).ok
        assert schedule.makespan == stats.best_makespan
        first_it, first_m = stats.trajectory[0]
        assert first_it == 0
        assert stats.best_makespan <= first_m

    def test_trajectory_strictly_improves(self):
        inst = random_instance(11, num_jobs=25)
        _, stats = run_metaheuristic(inst, ConventionalScheduler(inst), iterations=600, seed=2)
        iterations = [it for it, _ in stats.trajectory]
        makespans = [m for _, m in stats.trajectory]
        assert iterations == sorted(iterations)
        assert all(b < a for a, b in zip(makespans, makespans[1:]))
        assert stats.trajectory[-1][1] == stats.best_makespan

    def test_stats_bookkeeping(self):
        inst = random_instance(12, num_jobs=15)
        _, stats = run_metaheuristic(inst, ConventionalScheduler(inst), iterations=100, seed=0)
        assert stats.iterations == 100
        # one decode for the initial order plus one per iteration
        assert stats.executions == 101
        assert stats.decode_seconds > 0
        assert 0 <= stats.accepted <= 100
        assert stats.impl_counts == {"conv": 101}

    def test_warmup_excludes_all_timing_when_large(self):
        inst = random_instance(13, num_jobs=12)
        _, stats = run_metaheuristic(
            inst, ConventionalScheduler(inst), iterations=50, seed=0, timing_warmup=51
        )
        assert stats.decode_seconds == 0.0
        assert stats.executions == 51

    def test_trajectory_can_be_disabled(self):
        inst = random_instance(14, num_jobs=12)
        _, stats = run_metaheuristic(
            inst, ConventionalScheduler(inst), iterations=50, seed=0, collect_trajectory=False
        )
        assert stats.trajectory == []
        assert stats.best_makespan > 0

    def test_hybrid_impl_counts_come_from_the_scheduler(self):
        inst = random_instance(15, num_jobs=15)
        scheduler = HybridScheduler(inst, period_length=40, alternation_cap=10)
        _, stats = run_metaheuristic(inst, scheduler, iterations=120, seed=4)
        assert stats.impl_counts == scheduler.execution_counts
        assert sum(stats.impl_counts.values()) == stats.executions
        assert stats.impl_counts["data"] >= 1

    def test_matches_reference_loop_built_from_public_moves(self):
        # the vectorized loop must replay exactly what propose_move and
        # accept produce from the four documented substreams
        inst = random_instance(16, num_jobs=12)
        scheduler = ConventionalScheduler(inst)
        schedule, stats = run_metaheuristic(inst, scheduler, iterations=60, seed=9)

        root = random.Random(9)
        init_rng = random.Random(root.getrandbits(64))
        job_rng = random.Random(root.getrandbits(64))
        pos_rng = random.Random(root.getrandbits(64))
        accept_rng = random.Random(root.getrandbits(64))
        reference = ConventionalScheduler(inst)
        current = random_topological_permutation(inst, init_rng)
        current_m = reference.execute(current).makespan
        best = current_m
        accepted = 0
        for _ in range(60):
            cand = propose_move(current, inst, job_rng, pos_rng)
            m = reference.execute(cand).makespan
            if accept(current_m, m, accept_rng):
                accepted += 1
                current, current_m = cand, m
                best = min(best, m)
        assert stats.best_makespan == best
        assert stats.accepted == accepted
        assert schedule.makespan == best
