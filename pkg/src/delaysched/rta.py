"""Worst-case response-time analysis under job-level release delays.

Classic fixed-priority RTA, carry-in interference for delayed victim jobs,
jitter-extended analysis for tasks below the victim, and the peak-delay
search.  Everything here is exact integer arithmetic; fixed points either
converge, exceed their deadline (infeasible), or hit the iteration cap.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import CONTROL, DelaySequence, TaskSet, TaskSpec


@dataclass
class RtaResult:
    """Per-job response-time bounds for one task.

    ``per_job_wcrt`` holds (job index k, bound in ms or None when the job is
    infeasible).  ``iterations`` counts fixed-point steps across all jobs.
    """

    task_id: int
    per_job_wcrt: list[tuple[int, int | None]]
    feasible: bool
    iterations: int


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _fixpoint(base: int, hp_terms: list[tuple[int, int]], limit: int, cap: int,
              victim_term: tuple[int, int, int] | None = None) -> tuple[int | None, int]:
    """Least fixed point of R = base + sum(ceil(R/T)*C) [+ victim term].

    ``victim_term`` is (T_v, C_v, delta) contributing
    max(0, ceil((R - delta)/T_v)) * C_v.  Returns (R or None, iterations);
    None when the iterate exceeds ``limit`` or the cap is reached.
    """
    r = base
    iters = 0
    while True:
        iters += 1
        nxt = base
        for t, c in hp_terms:
            nxt += _ceil_div(r, t) * c
        if victim_term is not None:
            tv, cv, delta = victim_term
            nxt += max(0, _ceil_div(r - delta, tv)) * cv
        if nxt > limit:
            return None, iters
        if nxt == r:
            return r, iters
        r = nxt
        if iters >= cap:
            return None, iters


def _iteration_cap(taskset: TaskSet) -> int:
    return 10 * taskset.hyperperiod_ms


def wcrt_classic(task: TaskSpec, taskset: TaskSet) -> int | None:
    """Classic synchronous-release WCRT: R = C + sum_hp ceil(R/T_j)*C_j.

    Starts from R = C and iterates to the least fixed point; returns None
    when the iterate exceeds the task's deadline.
    """
    hp_terms = [(t.period_ms, t.wcet_ms) for t in taskset.hp(task)]
    r, _ = _fixpoint(task.wcet_ms, hp_terms, task.deadline_ms, _iteration_cap(taskset))
    return r


def carry_in_interference(victim: TaskSpec, taskset: TaskSet, release: int) -> int:
    """Interference from higher-priority jobs released before ``release`` and
    still executing at it, counted from the release pattern:

        sum_hp max(0, ceil(r'/T_j) - floor((r' - C_j)/T_j) - 1) * C_j

    This is a release-pattern bound (it does not model preemption of the
    carry-in job itself), so it upper-bounds the work actually carried in.
    """
    if release < 0:
        raise ValueError("release must be nonnegative")
    total = 0
    for t in taskset.hp(victim):
        count = _ceil_div(release, t.period_ms) - (release - t.wcet_ms) // t.period_ms - 1
        if count > 0:
            total += count * t.wcet_ms
    return total


def victim_job_wcrt(victim: TaskSpec, taskset: TaskSet, k: int, delta: int) -> int | None:
    """WCRT bound for the k-th (1-based) victim job released at (k-1)*T + delta.

    Fixed point of R = C + I(k) + sum_hp ceil(R/T_j)*C_j checked against the
    effective deadline D - delta.  Delays at or beyond D - C leave no room
    for the job to run, so they come back infeasible rather than erroring.
    """
    if k < 1:
        raise ValueError("job indices are 1-based")
    if delta < 0:
        raise ValueError("delay must be nonnegative")
    release = (k - 1) * victim.period_ms + delta
    effective_deadline = victim.deadline_ms - delta
    if effective_deadline < victim.wcet_ms:
        return None
    interference = carry_in_interference(victim, taskset, release)
    hp_terms = [(t.period_ms, t.wcet_ms) for t in taskset.hp(victim)]
    r, _ = _fixpoint(victim.wcet_ms + interference, hp_terms, effective_deadline,
                     _iteration_cap(taskset))
    return r


def victim_rta(victim: TaskSpec, taskset: TaskSet,
               delays: DelaySequence | int) -> RtaResult:
    """Per-job analysis of the victim over one hyperperiod.

    ``delays`` is either a DelaySequence or a single uniform delay.
    """
    n_jobs = taskset.jobs_in_hyperperiod(victim)
    per_job: list[tuple[int, int | None]] = []
    iterations = 0
    feasible = True
    # distinct carry-in values repeat across jobs; cache their fixed points
    cache: dict[tuple[int, int], int | None] = {}
    for k in range(1, n_jobs + 1):
        delta = delays if isinstance(delays, int) else delays.delay_for_job(k)
        release = (k - 1) * victim.period_ms + delta
        eff_deadline = victim.deadline_ms - delta
        if eff_deadline < victim.wcet_ms:
            per_job.append((k, None))
            feasible = False
            continue
        interference = carry_in_interference(victim, taskset, release)
        key = (interference, delta)
        if key not in cache:
            hp_terms = [(t.period_ms, t.wcet_ms) for t in taskset.hp(victim)]
            r, iters = _fixpoint(victim.wcet_ms + interference, hp_terms,
                                 eff_deadline, _iteration_cap(taskset))
            iterations += iters
            cache[key] = r
        r = cache[key]
        per_job.append((k, r))
        if r is None:
            feasible = False
    return RtaResult(victim.id, per_job, feasible, iterations)


def lp_task_wcrt_under_delay(task: TaskSpec, victim: TaskSpec,
                             delays: DelaySequence | int,
                             taskset: TaskSet) -> int | None:
    """WCRT bound for a task below the victim when the victim's releases are
    delayed: the victim's interference window shrinks by the minimum delay,

        R = C_i + sum_{hp \\ victim} ceil(R/T_j)*C_j
                + max(0, ceil((R - min_delta)/T_v))*C_v
    """
    if task.priority <= victim.priority:
        raise ValueError(f"task {task.id} is not lower-priority than victim {victim.id}")
    delta = delays if isinstance(delays, int) else delays.min_delay()
    hp_terms = [
        (t.period_ms, t.wcet_ms)
        for t in taskset.hp(task)
        if t.id != victim.id
    ]
    r, _ = _fixpoint(task.wcet_ms, hp_terms, task.deadline_ms, _iteration_cap(taskset),
                     victim_term=(victim.period_ms, victim.wcet_ms, delta))
    return r


def _victim_feasible_at(victim: TaskSpec, taskset: TaskSet, delta: int) -> bool:
    """Uniform-delay victim test.

    All jobs share the same fixed-point structure and differ only in their
    carry-in term, and the bound grows with carry-in, so testing the job
    with maximal carry-in is exact.
    """
    eff_deadline = victim.deadline_ms - delta
    if eff_deadline < victim.wcet_ms:
        return False
    n_jobs = taskset.jobs_in_hyperperiod(victim)
    worst = 0
    for k in range(1, n_jobs + 1):
        release = (k - 1) * victim.period_ms + delta
        i_k = carry_in_interference(victim, taskset, release)
        if i_k > worst:
            worst = i_k
    hp_terms = [(t.period_ms, t.wcet_ms) for t in taskset.hp(victim)]
    r, _ = _fixpoint(victim.wcet_ms + worst, hp_terms, eff_deadline,
                     _iteration_cap(taskset))
    return r is not None


def peak_delay(victim: TaskSpec, taskset: TaskSet) -> int | None:
    """Largest uniform delay in [0, T_v - C_v] keeping the victim and every
    lower-priority task schedulable; None when no delay (including 0) works.

    Descending linear scan over the integer grid: the feasible set need not
    be contiguous, so no binary search.  Two exact prunings keep it cheap:
    the victim bound never drops below its classic WCRT (capping useful
    delays at D_v - R_classic), and the lower-priority bounds are
    nonincreasing in the delay, so one failed check below the victim's best
    delay settles the answer.
    """
    if victim.kind != CONTROL:
        raise ValueError(f"task {victim.id} is not a control task")
    r_classic = wcrt_classic(victim, taskset)
    if r_classic is None:
        return None
    hi = min(victim.period_ms - victim.wcet_ms,
             victim.deadline_ms - r_classic)
    lp_tasks = taskset.lp(victim)
    for delta in range(hi, -1, -1):
        if not _victim_feasible_at(victim, taskset, delta):
            continue
        for t in lp_tasks:
            r = lp_task_wcrt_under_delay(t, victim, delta, taskset)
            if r is None:
                # these bounds only grow as the delay shrinks
                return None
        return delta
    return None
