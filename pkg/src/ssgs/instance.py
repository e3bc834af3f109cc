"""RCPSP instance model: types, file formats, generator, schedule checks.

Conventions used throughout the package:
  * jobs are 0-indexed,
  * time slots are 1-indexed; a job starting at t with duration d occupies
    slots t .. t+d-1,
  * the scheduling horizon is the sum of all durations, so any precedence
    feasible permutation decodes without overflow.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit


class InstanceError(ValueError):
    """An instance or schedule violates a structural invariant."""


class ParseError(InstanceError):
    """Malformed instance text. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Job:
    duration: int
    demands: tuple[int, ...]
    predecessors: frozenset[int]


@dataclass(frozen=True)
class Instance:
    """Immutable single-mode RCPSP instance with renewable resources."""

    jobs: tuple[Job, ...]
    capacities: tuple[int, ...]

    @property
    def num_jobs(self) -> int:
        return len(self.jobs)

    @property
    def num_resources(self) -> int:
        return len(self.capacities)

    def validate(self) -> None:
        """Raise InstanceError on the first violated invariant."""
        n = self.num_jobs
        r = self.num_resources
        for c in self.capacities:
            if c < 1:
                raise InstanceError(f"capacity {c} is not positive")
        for j, job in enumerate(self.jobs):
            if job.duration < 1:
                raise InstanceError(f"job {j}: duration {job.duration} < 1")
            if len(job.demands) != r:
                raise InstanceError(f"job {j}: expected {r} demands, got {len(job.demands)}")
            for k, v in enumerate(job.demands):
                if v < 0:
                    raise InstanceError(f"job {j}: negative demand on resource {k}")
                if v > self.capacities[k]:
                    raise InstanceError(
                        f"job {j}: demand {v} exceeds capacity {self.capacities[k]} of resource {k}"
                    )
            for p in job.predecessors:
                if not 0 <= p < n:
                    raise InstanceError(f"job {j}: predecessor {p} out of range")
                if p == j:
                    raise InstanceError(f"job {j}: self-loop")
        topological_order(self)  # raises on cycles


@dataclass(frozen=True)
class Permutation:
    """Job ordering fed to a schedule generation scheme."""

    order: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.order)


@dataclass(frozen=True)
class Schedule:
    """Start slots per job plus the resulting makespan."""

    starts: tuple[int, ...]
    makespan: int

    def __post_init__(self) -> None:
        for j, t in enumerate(self.starts):
            if t < 1:
                raise InstanceError(f"job {j}: start slot {t} < 1")

    @classmethod
    def from_starts(cls, instance: Instance, starts: Sequence[int]) -> "Schedule":
        starts = tuple(int(t) for t in starts)
        if len(starts) != instance.num_jobs:
            raise InstanceError("start vector length does not match the job count")
        m = 0
        for t, job in zip(starts, instance.jobs):
            m = max(m, t + job.duration - 1)
        return cls(starts, m)


@dataclass(frozen=True)
class Violation:
    kind: str  # "precedence" or "resource"
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def horizon(instance: Instance) -> int:
    """Scheduling horizon T: the sum of all job durations."""
    return sum(job.duration for job in instance.jobs)


@dataclass(frozen=True)
class InstanceArrays:
    """Flat numpy view of an instance, shared by the compiled kernels.

    Predecessors are stored CSR-style: the predecessor list of job j is
    preds_flat[preds_ptr[j]:preds_ptr[j+1]].
    """

    durations: np.ndarray  # int32 (J,)
    demands: np.ndarray  # int32 (J, R), C order
    preds_flat: np.ndarray  # int32
    preds_ptr: np.ndarray  # int32 (J+1,)
    capacities: np.ndarray  # int32 (R,)
    horizon: int


@lru_cache(maxsize=256)
def _arrays_for(instance: Instance) -> InstanceArrays:
    n = instance.num_jobs
    r = instance.num_resources
    durations = np.fromiter((j.duration for j in instance.jobs), np.int32, count=n)
    demands = np.zeros((n, r), np.int32)
    ptr = np.zeros(n + 1, np.int32)
    flat: list[int] = []
    for j, job in enumerate(instance.jobs):
        demands[j, :] = job.demands
        flat.extend(sorted(job.predecessors))
        ptr[j + 1] = len(flat)
    preds_flat = np.asarray(flat, np.int32)
    caps = np.asarray(instance.capacities, np.int32)
    for arr in (durations, demands, preds_flat, ptr, caps):
        arr.setflags(write=False)
    return InstanceArrays(durations, demands, preds_flat, ptr, caps, int(durations.sum()))


def instance_arrays(instance: Instance) -> InstanceArrays:
    """Cached numpy representation used by the decode kernels."""
    return _arrays_for(instance)


def successors(instance: Instance) -> list[list[int]]:
    succ: list[list[int]] = [[] for _ in range(instance.num_jobs)]
    for j, job in enumerate(instance.jobs):
        for p in job.predecessors:
            succ[p].append(j)
    for s in succ:
        s.sort()
    return succ


def topological_order(instance: Instance) -> list[int]:
    """Kahn's algorithm. Raises InstanceError if the precedence graph has a cycle."""
    n = instance.num_jobs
    indegree = [len(job.predecessors) for job in instance.jobs]
    succ = successors(instance)
    ready = [j for j in range(n) if indegree[j] == 0]
    out: list[int] = []
    while ready:
        j = ready.pop()
        out.append(j)
        for s in succ[j]:
            indegree[s] -= 1
            if indegree[s] == 0:
                ready.append(s)
    if len(out) != n:
        raise InstanceError("precedence graph contains a cycle")
    return out


def random_topological_permutation(instance: Instance, rng: random.Random | int) -> Permutation:
    """Sample a precedence-feasible permutation, choosing uniformly among the
    jobs whose predecessors are already placed at every step."""
    if isinstance(rng, int):
        rng = random.Random(rng)
    n = instance.num_jobs
    indegree = [len(job.predecessors) for job in instance.jobs]
    succ = successors(instance)
    eligible = [j for j in range(n) if indegree[j] == 0]
    order: list[int] = []
    while eligible:
        i = rng.randrange(len(eligible))
        eligible[i], eligible[-1] = eligible[-1], eligible[i]
        j = eligible.pop()
        order.append(j)
        for s in succ[j]:
            indegree[s] -= 1
            if indegree[s] == 0:
                eligible.append(s)
    if len(order) != n:
        raise InstanceError("precedence graph contains a cycle")
    return Permutation(tuple(order))


def is_precedence_feasible(instance: Instance, permutation: Permutation) -> bool:
    position = {j: i for i, j in enumerate(permutation.order)}
    if len(position) != instance.num_jobs:
        return False
    for j, job in enumerate(instance.jobs):
        if j not in position:
            return False
        for p in job.predecessors:
            if position[p] > position[j]:
                return False
    return True


def _occupancy(instance: Instance, starts: Sequence[int]) -> np.ndarray:
    """Per-(resource, slot) usage grid; column 0 stays zero."""
    m = 0
    for t, job in zip(starts, instance.jobs):
        m = max(m, t + job.duration - 1)
    usage = np.zeros((instance.num_resources, m + 1), np.int64)
    for t, job in zip(starts, instance.jobs):
        for r, v in enumerate(job.demands):
            if v:
                usage[r, t : t + job.duration] += v
    return usage


def validate_schedule(instance: Instance, schedule: Schedule) -> ValidationReport:
    """Check precedence and per-slot resource feasibility.

    Returns a report listing every violation rather than stopping at the
    first, so tests can assert on the full set.
    """
    violations: list[Violation] = []
    starts = schedule.starts
    if len(starts) != instance.num_jobs:
        raise InstanceError("schedule length does not match the job count")
    for j, job in enumerate(instance.jobs):
        for p in job.predecessors:
            finish = starts[p] + instance.jobs[p].duration - 1
            if starts[j] <= finish:
                violations.append(
                    Violation("precedence", f"job {j} starts at {starts[j]} before job {p} finishes at {finish}")
                )
    usage = _occupancy(instance, starts)
    caps = np.asarray(instance.capacities, np.int64)
    for r, t in np.argwhere(usage > caps[:, None]):
        violations.append(
            Violation("resource", f"slot {t}: resource {r} uses {usage[r, t]} of {instance.capacities[r]}")
        )
    return ValidationReport(tuple(violations))


@njit(cache=True)
def _left_shiftable(durs, dems, preds_flat, preds_ptr, caps, starts, usage):  # pragma: no cover
    n = durs.shape[0]
    nres = caps.shape[0]
    for j in range(n):
        d = durs[j]
        earliest = 1
        for i in range(preds_ptr[j], preds_ptr[j + 1]):
            p = preds_flat[i]
            f = starts[p] + durs[p]
            if f > earliest:
                earliest = f
        for s in range(earliest, starts[j]):
            ok = True
            for t in range(s, s + d):
                for r in range(nres):
                    v = dems[j, r]
                    if v == 0:
                        continue
                    used = usage[r, t]
                    if starts[j] <= t < starts[j] + d:
                        used -= v  # j's own load does not block its shifted copy
                    if used + v > caps[r]:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                return j
    return -1


def is_active(instance: Instance, schedule: Schedule) -> bool:
    """True iff no single job can be left-shifted while everything else stays put.

    The input must be feasible; an infeasible schedule raises InstanceError.
    """
    report = validate_schedule(instance, schedule)
    if not report.ok:
        raise InstanceError(f"schedule is infeasible: {report.violations[0].detail}")
    arr = instance_arrays(instance)
    starts = np.asarray(schedule.starts, np.int32)
    usage = _occupancy(instance, schedule.starts)
    j = _left_shiftable(
        arr.durations, arr.demands, arr.preds_flat, arr.preds_ptr, arr.capacities, starts, usage
    )
    return j < 0


# ---------------------------------------------------------------------------
# native text format
#
# Line 1:  <num_jobs> <num_resources>
# Line 2:  capacities, one integer per resource
# Then one line per job:  <duration> <k_pred> <pred...> <k_res> <r v>...
# Indices are 0-based. '#' starts a comment; blank lines are skipped.
# ---------------------------------------------------------------------------


def serialize_native(instance: Instance) -> str:
    lines = [f"{instance.num_jobs} {instance.num_resources}"]
    lines.append(" ".join(str(c) for c in instance.capacities))
    for job in instance.jobs:
        preds = sorted(job.predecessors)
        consumed = [(r, v) for r, v in enumerate(job.demands) if v > 0]
        parts = [str(job.duration), str(len(preds))]
        parts += [str(p) for p in preds]
        parts.append(str(len(consumed)))
        for r, v in consumed:
            parts += [str(r), str(v)]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_native(text: str) -> Instance:
    rows: list[tuple[int, list[int]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            rows.append((lineno, [int(tok) for tok in body.split()]))
        except ValueError:
            raise ParseError("expected integers", lineno) from None
    if not rows:
        raise ParseError("empty instance text")
    lineno, header = rows[0]
    if len(header) != 2:
        raise ParseError("header must be '<jobs> <resources>'", lineno)
    n, r = header
    if n < 1 or r < 1:
        raise ParseError("job and resource counts must be positive", lineno)
    if len(rows) < 2:
        raise ParseError("missing capacities line", lineno)
    lineno, caps = rows[1]
    if len(caps) != r:
        raise ParseError(f"expected {r} capacities, got {len(caps)}", lineno)
    if len(rows) - 2 != n:
        raise ParseError(f"expected {n} job lines, found {len(rows) - 2}")
    jobs: list[Job] = []
    for lineno, toks in rows[2:]:
        it = iter(toks)
        try:
            duration = next(it)
            k_pred = next(it)
            preds = [next(it) for _ in range(k_pred)]
            k_res = next(it)
            demands = [0] * r
            for _ in range(k_res):
                res = next(it)
                val = next(it)
                if not 0 <= res < r:
                    raise ParseError(f"resource index {res} out of range", lineno)
                demands[res] = val
        except StopIteration:
            raise ParseError("truncated job line", lineno) from None
        if list(it):
            raise ParseError("trailing fields on job line", lineno)
        jobs.append(Job(duration, tuple(demands), frozenset(preds)))
    instance = Instance(tuple(jobs), tuple(caps))
    instance.validate()
    return instance


# ---------------------------------------------------------------------------
# PSPLIB single-mode (.sm) reader
# ---------------------------------------------------------------------------


def parse_psplib(text: str) -> Instance:
    """Read a PSPLIB single-mode instance.

    Supports the standard .sm layout only: renewable resources, one mode per
    job. The dummy source and sink (zero duration, zero demand, at the first
    and last positions) are stripped when present and job indices are shifted
    to 0-based accordingly.
    """
    lines = text.splitlines()

    def find_line(pattern: str) -> tuple[int, str]:
        rx = re.compile(pattern)
        for i, line in enumerate(lines):
            if rx.search(line):
                return i, line
        raise ParseError(f"missing section {pattern!r}")

    def int_after_colon(idx: int, line: str) -> int:
        try:
            return int(line.split(":")[1].split()[0])
        except (IndexError, ValueError):
            raise ParseError("expected an integer after ':'", idx + 1) from None

    i, line = find_line(r"^jobs\b")
    total_jobs = int_after_colon(i, line)
    i, line = find_line(r"renewable")
    num_renewable = int_after_colon(i, line)
    for label in ("nonrenewable", "doubly"):
        try:
            i, line = find_line(label)
        except ParseError:
            continue
        if int_after_colon(i, line) != 0:
            raise ParseError(f"{label} resources are not supported", i + 1)
    if total_jobs < 1:
        raise ParseError("job count must be positive")
    if num_renewable < 1:
        raise ParseError("instance declares no renewable resources")

    prec_at, _ = find_line(r"PRECEDENCE RELATIONS")
    succ_of: dict[int, list[int]] = {}
    i = prec_at + 2  # skip the column header line
    while i < len(lines) and len(succ_of) < total_jobs:
        toks = lines[i].split()
        i += 1
        if not toks or toks[0].startswith("*"):
            continue
        try:
            nums = [int(t) for t in toks]
        except ValueError:
            raise ParseError("expected integers in precedence row", i) from None
        if len(nums) < 3:
            raise ParseError("short precedence row", i)
        jobnr, modes, count = nums[0], nums[1], nums[2]
        if modes != 1:
            raise ParseError(f"job {jobnr} has {modes} modes; only single-mode is supported", i)
        if len(nums) != 3 + count:
            raise ParseError(f"job {jobnr} declares {count} successors but lists {len(nums) - 3}", i)
        succ_of[jobnr] = nums[3:]
    if len(succ_of) != total_jobs:
        raise ParseError(f"expected {total_jobs} precedence rows, found {len(succ_of)}", prec_at + 1)

    req_at, _ = find_line(r"REQUESTS/DURATIONS")
    durations: dict[int, int] = {}
    demands: dict[int, list[int]] = {}
    request_line: dict[int, int] = {}
    i = req_at + 1
    while i < len(lines) and len(durations) < total_jobs:
        toks = lines[i].split()
        i += 1
        if not toks or toks[0].startswith(("*", "-")) or not toks[0].isdigit():
            continue
        try:
            nums = [int(t) for t in toks]
        except ValueError:
            raise ParseError("expected integers in requests row", i) from None
        if len(nums) != 3 + num_renewable:
            raise ParseError("requests row has the wrong number of columns", i)
        jobnr, mode, dur = nums[0], nums[1], nums[2]
        if mode != 1:
            raise ParseError(f"job {jobnr}: mode {mode} unsupported", i)
        durations[jobnr] = dur
        demands[jobnr] = nums[3:]
        request_line[jobnr] = i
    if len(durations) != total_jobs:
        raise ParseError(f"expected {total_jobs} request rows, found {len(durations)}", req_at + 1)

    avail_at, _ = find_line(r"RESOURCEAVAILABILITIES")
    caps: list[int] | None = None
    i = avail_at + 1
    while i < len(lines):
        toks = lines[i].split()
        i += 1
        if not toks or toks[0].startswith("*"):
            continue
        if all(re.fullmatch(r"-?\d+", t) for t in toks):
            caps = [int(t) for t in toks]
            break
    if caps is None or len(caps) != num_renewable:
        raise ParseError("missing or malformed capacity row", avail_at + 1)

    job_ids = sorted(succ_of)
    if job_ids != list(range(1, total_jobs + 1)):
        raise ParseError("precedence rows do not cover jobs 1..n")

    def looks_dummy(jid: int) -> bool:
        return durations[jid] == 0 and not any(demands[jid])

    kept = list(job_ids)
    if len(kept) > 2 and looks_dummy(kept[0]) and looks_dummy(kept[-1]):
        dropped = {kept[0], kept[-1]}
        kept = kept[1:-1]
    else:
        dropped = set()

    index_of = {jid: k for k, jid in enumerate(kept)}
    preds: dict[int, set[int]] = {jid: set() for jid in kept}
    for jid, succs in succ_of.items():
        for s in succs:
            if s not in succ_of:
                raise ParseError(f"job {jid} lists unknown successor {s}")
            if jid in dropped or s in dropped:
                continue
            preds[s].add(jid)

    jobs = []
    for jid in kept:
        if durations[jid] < 1:
            raise ParseError(f"job {jid}: zero duration on a non-dummy job", request_line[jid])
        for r, v in enumerate(demands[jid]):
            if v > caps[r]:
                raise ParseError(
                    f"job {jid}: demand {v} exceeds capacity {caps[r]} of resource {r + 1}",
                    request_line[jid],
                )
        jobs.append(
            Job(durations[jid], tuple(demands[jid]), frozenset(index_of[p] for p in preds[jid]))
        )
    instance = Instance(tuple(jobs), tuple(caps))
    try:
        instance.validate()
    except InstanceError as exc:
        raise ParseError(str(exc)) from None
    return instance


def load_instance(path: str | Path) -> Instance:
    """Read an instance file, dispatching on the .sm suffix."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".sm":
        return parse_psplib(text)
    return parse_native(text)


# ---------------------------------------------------------------------------
# parameterized random generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorParams:
    """Knobs for the random instance generator.

    network_complexity controls the expected number of outgoing precedence
    arcs per job, resource_factor the fraction of resources each job
    consumes, and resource_strength interpolates capacities between the
    tightest value that admits any schedule and the peak concurrent demand
    of the precedence-only earliest-start schedule.
    """

    num_jobs: int = 120
    num_resources: int = 4
    max_duration: int = 10
    network_complexity: float = 1.0
    resource_factor: float = 0.75
    resource_strength: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_jobs < 1:
            raise InstanceError("num_jobs must be positive")
        if self.num_resources < 1:
            raise InstanceError("num_resources must be positive")
        if self.max_duration < 1:
            raise InstanceError("max_duration must be positive")
        if self.network_complexity < 0:
            raise InstanceError("network_complexity must be non-negative")
        if not 0 <= self.resource_factor <= 1:
            raise InstanceError("resource_factor must lie in [0, 1]")
        if not 0 <= self.resource_strength <= 1:
            raise InstanceError("resource_strength must lie in [0, 1]")


MAX_DEMAND = 10


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def generate_instance(params: GeneratorParams) -> Instance:
    """Draw a random instance. Identical params give identical instances."""
    rng = random.Random(params.seed)
    n = params.num_jobs
    nres = params.num_resources

    durations = [rng.randint(1, params.max_duration) for _ in range(n)]

    per_job = min(nres, _round_half_up(params.resource_factor * nres))
    demand_rows: list[list[int]] = []
    for _ in range(n):
        row = [0] * nres
        for r in rng.sample(range(nres), per_job):
            row[r] = rng.randint(1, MAX_DEMAND)
        demand_rows.append(row)

    # Arcs go from earlier to later positions; each position i emits an arc to
    # a later position with probability nc / (n - 1 - i), capped at 1, which
    # keeps the expected out-degree near nc without forcing connectivity.
    preds_of_pos: list[set[int]] = [set() for _ in range(n)]
    for i in range(n - 1):
        p = min(1.0, params.network_complexity / (n - 1 - i))
        for j in range(i + 1, n):
            if rng.random() < p:
                preds_of_pos[j].add(i)

    # Earliest-start schedule ignoring resources, used to size capacities.
    est = [1] * n
    for i in range(n):
        for p in preds_of_pos[i]:
            est[i] = max(est[i], est[p] + durations[p])
    span = max(est[i] + durations[i] for i in range(n))
    peak = [0] * nres
    for r in range(nres):
        per_slot = [0] * span
        for i in range(n):
            if demand_rows[i][r] == 0:
                continue
            for t in range(est[i], est[i] + durations[i]):
                per_slot[t - 1] += demand_rows[i][r]
        peak[r] = max(per_slot) if per_slot else 0

    caps = []
    for r in range(nres):
        k_min = max((demand_rows[i][r] for i in range(n)), default=0)
        k_max = peak[r]
        c = k_min + _round_half_up(params.resource_strength * (k_max - k_min))
        caps.append(max(1, c))  # an unconsumed resource still needs capacity

    labels = list(range(n))
    rng.shuffle(labels)
    jobs: list[Job | None] = [None] * n
    for i in range(n):
        jobs[labels[i]] = Job(
            durations[i],
            tuple(demand_rows[i]),
            frozenset(labels[p] for p in preds_of_pos[i]),
        )
    instance = Instance(tuple(jobs), tuple(caps))  # type: ignore[arg-type]
    instance.validate()
    return instance
