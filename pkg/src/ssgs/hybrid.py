"""Online selection between the Bloom and non-Bloom decoders.

Each period opens with one instrumented execution that relearns resource
orderings and rebuilds the filter structure, then the two candidates
alternate under a monotonic clock until an exact sign test (or the
alternation cap) picks a winner, which runs until the period ends. All
phases return the same schedules, so the choice is invisible to callers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from ssgs.bloom import (
    WORD_BITS,
    BloomFilters,
    _decode_bloom,
    availability_distribution,
    build_structure,
    compute_demand_distribution,
)
from ssgs.core import SchedulerBase
from ssgs.fast import _decode_enhanced, data_decode_into, order_resources, preprocess
from ssgs.instance import Instance


class SignVerdict(Enum):
    BF_FASTER = "bf-faster"
    NBF_FASTER = "nbf-faster"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class SignTestResult:
    verdict: SignVerdict
    p_value: float
    wins: int
    trials: int


@lru_cache(maxsize=None)
def _binom_prefix(trials: int) -> tuple[int, ...]:
    """prefix[i] = sum of C(trials, k) for k <= i."""
    total = 0
    out = []
    for k in range(trials + 1):
        total += comb(trials, k)
        out.append(total)
    return tuple(out)


def sign_test(wins: int, trials: int, alpha: float = 0.05) -> SignTestResult:
    """Exact two-sided sign test under the fair-coin null.

    p = min(1, 2 min(P[X <= wins], P[X >= wins])), X ~ Binomial(trials, 1/2).
    The significance comparison runs in exact rational arithmetic so a p
    value within float rounding of alpha cannot flip the verdict.
    """
    if not 0 <= wins <= trials:
        raise ValueError(f"wins={wins} outside [0, {trials}]")
    if trials == 0:
        return SignTestResult(SignVerdict.INCONCLUSIVE, 1.0, wins, trials)
    prefix = _binom_prefix(trials)
    below = prefix[wins]
    above = prefix[trials] - (prefix[wins - 1] if wins else 0)
    numerator = min(2 * min(below, above), 1 << trials)
    p = Fraction(numerator, 1 << trials)
    verdict = SignVerdict.INCONCLUSIVE
    if p < Fraction(alpha):
        verdict = SignVerdict.BF_FASTER if 2 * wins > trials else SignVerdict.NBF_FASTER
    return SignTestResult(verdict, float(p), wins, trials)


class Phase(Enum):
    DATA = "data"
    ALTERNATING = "alternating"
    COMMITTED = "committed"


@dataclass
class HybridState:
    """Per-period lifecycle state.

    pair_buffer holds the BF leg's nanoseconds while its NBF partner is
    pending; None there after a BF leg means the timing failed and the
    pair will count as a tie.
    """

    period_length: int | None = 10_000
    alternation_cap: int = 100
    phase: Phase = Phase.DATA
    execution_count: int = 0
    next_leg: str = "bf"
    pair_buffer: int | None = None
    wins: int = 0
    trials: int = 0
    committed_choice: str | None = None


class HybridScheduler(SchedulerBase):
    """Decoder that measures its two candidates and commits to the faster.

    period_length=None disables restarts: the first commitment holds for
    the rest of the run. A trace list, when supplied, receives one
    (execution index, implementation, nanoseconds) tuple per decode;
    nanoseconds is -1 when the clock failed. The clock is injectable for
    deterministic lifecycle tests.
    """

    name = "hybrid"

    def __init__(
        self,
        instance: Instance,
        *,
        period_length: int | None = 10_000,
        alternation_cap: int = 100,
        alpha: float = 0.05,
        bloom_limit: int = WORD_BITS,
        clock=time.perf_counter_ns,
        trace: list | None = None,
    ):
        super().__init__(instance)
        if period_length is not None and period_length < 1:
            raise ValueError("period_length must be positive (or None for no restarts)")
        if alternation_cap < 0:
            raise ValueError("alternation_cap must be nonnegative")
        self.prep = preprocess(instance)
        self.alpha = alpha
        self.bloom_limit = bloom_limit
        self.clock = clock
        self.trace = trace
        self.state = HybridState(period_length, alternation_cap)
        self.stats = None
        self.structure = None
        self.filters: BloomFilters | None = None
        self._demand = compute_demand_distribution(instance)
        self.commit_log: list[tuple[int, str]] = []
        self._counts = {"data": 0, "bf": 0, "nbf": 0}
        self._period_base = 0
        self._committed_at = 0
        self._kernel = None
        self._kernel_args: tuple | None = None

    @property
    def _global_index(self) -> int:
        return self._period_base + self.state.execution_count

    @property
    def execution_counts(self) -> dict[str, int]:
        """Executions per implementation. Committed decodes are tallied
        lazily so the hot path stays one counter bump."""
        counts = dict(self._counts)
        st = self.state
        if st.committed_choice is not None:
            counts[st.committed_choice] += st.execution_count - self._committed_at
        return counts

    def _run_data(self, order: np.ndarray) -> int:
        makespan, stats = data_decode_into(self.arrays, self.prep, self.profile.grid, self._starts, order)
        self.stats = stats
        order_resources(self.prep, stats)
        self.structure = build_structure(
            self._demand, availability_distribution(stats), self.instance.capacities, self.bloom_limit
        )
        self.filters = BloomFilters(self.instance, self.structure, self.arrays.horizon)
        return makespan

    def _run_nbf(self, order: np.ndarray) -> int:
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

    def _run_bf(self, order: np.ndarray) -> int:
        a = self.arrays
        p = self.prep
        f = self.filters
        bank = f.slots
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
                f.job_words,
                f.job_exact,
                bank.words,
                bank.span_mask,
                bank.mask_flat,
                bank.mask_ptr,
                bank.full_word,
            )
        )

    def _timed(self, runner, order) -> tuple[int, int | None]:
        try:
            t0 = self.clock()
        except Exception:
            return runner(order), None
        makespan = runner(order)
        try:
            t1 = self.clock()
        except Exception:
            return makespan, None
        ns = int(t1) - int(t0)
        return makespan, (ns if ns >= 0 else None)

    def decode(self, order: np.ndarray) -> int:
        st = self.state
        if st.phase is Phase.COMMITTED:
            impl = st.committed_choice
            if self.trace is None:
                # hot path: a committed untraced decode is just the kernel
                makespan = int(self._kernel(order, *self._kernel_args))
                st.execution_count += 1
                if st.period_length is not None and st.execution_count >= st.period_length:
                    self.restart()
                return makespan
            runner = self._run_bf if impl == "bf" else self._run_nbf
            makespan, ns = self._timed(runner, order)
        elif st.phase is Phase.DATA:
            impl = "data"
            ns = None
            if self.trace is not None:
                makespan, ns = self._timed(self._run_data, order)
            else:
                makespan = self._run_data(order)
            st.phase = Phase.ALTERNATING
            st.next_leg = "bf"
            self._counts["data"] += 1
            self._maybe_commit()
        elif st.next_leg == "bf":
            impl = "bf"
            makespan, ns = self._timed(self._run_bf, order)
            st.pair_buffer = ns
            st.next_leg = "nbf"
            self._counts["bf"] += 1
        else:
            impl = "nbf"
            makespan, ns = self._timed(self._run_nbf, order)
            bf_ns = st.pair_buffer
            st.pair_buffer = None
            st.next_leg = "bf"
            st.trials += 1
            if bf_ns is not None and ns is not None and bf_ns < ns:
                st.wins += 1
            self._counts["nbf"] += 1
            self._maybe_commit()
        st.execution_count += 1
        if self.trace is not None:
            self.trace.append((self._global_index, impl, ns if ns is not None else -1))
        if st.period_length is not None and st.execution_count >= st.period_length:
            self.restart()
        return makespan

    def _maybe_commit(self) -> None:
        st = self.state
        result = sign_test(st.wins, st.trials, self.alpha)
        if result.verdict is SignVerdict.BF_FASTER:
            choice = "bf"
        elif result.verdict is SignVerdict.NBF_FASTER:
            choice = "nbf"
        elif st.trials >= st.alternation_cap // 2:
            choice = "bf" if 2 * st.wins > st.trials else "nbf"  # ties fall back to nbf
        else:
            return
        st.phase = Phase.COMMITTED
        st.committed_choice = choice
        self._bind_committed(choice)
        self.commit_log.append((self._global_index + 1, choice))

    def _bind_committed(self, choice: str) -> None:
        """Freeze the winner's kernel arguments; the committed hot path
        then skips the per-call attribute walk. Every array here is
        mutated in place (never rebound) until restart() drops the
        binding, so the frozen references stay valid."""
        # the deciding execution is counted eagerly by its own branch
        self._committed_at = self.state.execution_count + 1
        a = self.arrays
        p = self.prep
        common = (
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
        if choice == "bf":
            f = self.filters
            bank = f.slots
            self._kernel = _decode_bloom
            self._kernel_args = common + (
                f.job_words,
                f.job_exact,
                bank.words,
                bank.span_mask,
                bank.mask_flat,
                bank.mask_ptr,
                bank.full_word,
            )
        else:
            self._kernel = _decode_enhanced
            self._kernel_args = common

    def restart(self) -> None:
        """Forget everything learned this period; the demand distribution is
        instance-only and stays cached."""
        old = self.state
        if old.committed_choice is not None:
            self._counts[old.committed_choice] += old.execution_count - self._committed_at
        self._period_base += old.execution_count
        self._committed_at = 0
        self.state = HybridState(old.period_length, old.alternation_cap)
        self.stats = None
        self.structure = None
        self.filters = None
        self._kernel = None
        self._kernel_args = None
        self.prep.reset_order()
