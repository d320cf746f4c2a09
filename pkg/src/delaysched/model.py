"""Task-set data model: periodic tasks, hyperperiods, priorities, delay sequences.

All scheduling-side time is kept on an integer millisecond grid; there is no
floating-point time anywhere in this module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

TRUSTED = "trusted"
UNTRUSTED = "untrusted"
CONTROL = "control"
NON_CONTROL = "non_control"

# Largest representable instant on the millisecond grid.  Chosen so that
# timestamps survive a round-trip through IEEE doubles (trace consumers).
MAX_TIME_MS = 2**53


class TaskSetError(ValueError):
    """Malformed task-set input (bad file, bad field, unrepresentable time)."""


@dataclass(frozen=True)
class TaskSpec:
    """One periodic task: (period, wcet, deadline) plus security metadata.

    ``priority`` is a unique integer, lower number = higher priority.
    ``aew_ms`` is the width of the attack-effective window that opens after
    each job of a control task completes; it is an input parameter, never
    computed.
    """

    id: int
    period_ms: int
    wcet_ms: int
    deadline_ms: int
    priority: int
    trust: str = TRUSTED
    kind: str = NON_CONTROL
    aew_ms: int = 0

    def utilization(self) -> float:
        return self.wcet_ms / self.period_ms


@dataclass(frozen=True)
class TaskSet:
    """Immutable ordered collection of tasks sharing one processor."""

    tasks: tuple[TaskSpec, ...]

    def __init__(self, tasks: Iterable[TaskSpec]):
        object.__setattr__(self, "tasks", tuple(tasks))

    @cached_property
    def hyperperiod_ms(self) -> int:
        return hyperperiod(self)

    def __iter__(self):
        return iter(self.tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    def by_id(self, task_id: int) -> TaskSpec:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(f"no task with id {task_id}")

    def hp(self, task: TaskSpec) -> tuple[TaskSpec, ...]:
        """Tasks with strictly higher priority (smaller priority number)."""
        return tuple(t for t in self.tasks if t.priority < task.priority)

    def lp(self, task: TaskSpec) -> tuple[TaskSpec, ...]:
        """Tasks with strictly lower priority."""
        return tuple(t for t in self.tasks if t.priority > task.priority)

    @property
    def control_tasks(self) -> tuple[TaskSpec, ...]:
        return tuple(t for t in self.tasks if t.kind == CONTROL)

    @property
    def untrusted_tasks(self) -> tuple[TaskSpec, ...]:
        return tuple(t for t in self.tasks if t.trust == UNTRUSTED)

    def replace_task(self, task_id: int, **changes) -> "TaskSet":
        """New task set with one task's fields replaced."""
        return TaskSet(
            replace(t, **changes) if t.id == task_id else t for t in self.tasks
        )

    def jobs_in_hyperperiod(self, task: TaskSpec) -> int:
        return self.hyperperiod_ms // task.period_ms


def hyperperiod(taskset: TaskSet) -> int:
    """Least common multiple of all task periods, in ms.

    Raises TaskSetError on an empty set or if the LCM leaves the
    representable time range (overflow is an error, not a wrap).
    """
    if not taskset.tasks:
        raise TaskSetError("hyperperiod of an empty task set is undefined")
    h = 1
    for t in taskset.tasks:
        if t.period_ms <= 0:
            raise TaskSetError(f"task {t.id}: period must be positive")
        h = math.lcm(h, t.period_ms)
        if h > MAX_TIME_MS:
            raise TaskSetError(f"hyperperiod exceeds representable range ({h} ms)")
    return h


def assign_rm_priorities(taskset: TaskSet) -> TaskSet:
    """Rate-monotonic priorities: smaller period wins, ties broken by task id.

    Output is keyed by id, so it is stable under permutation of the task
    list, and idempotent.
    """
    order = sorted(taskset.tasks, key=lambda t: (t.period_ms, t.id))
    prio = {t.id: i + 1 for i, t in enumerate(order)}
    return TaskSet(replace(t, priority=prio[t.id]) for t in taskset.tasks)


def validate(taskset: TaskSet) -> list[str]:
    """Check every task-set invariant; returns a list of violations (empty = ok).

    Violations are data, not exceptions: generators and CLIs decide what to
    do with them.
    """
    violations: list[str] = []
    seen_ids: set[int] = set()
    seen_prios: set[int] = set()
    for t in taskset.tasks:
        tag = f"task {t.id}"
        if t.id in seen_ids:
            violations.append(f"{tag}: duplicate id")
        seen_ids.add(t.id)
        if t.wcet_ms <= 0:
            violations.append(f"{tag}: C must be positive (C={t.wcet_ms})")
        if t.wcet_ms > t.deadline_ms:
            violations.append(f"{tag}: C <= D violated (C={t.wcet_ms}, D={t.deadline_ms})")
        if t.deadline_ms > t.period_ms:
            violations.append(f"{tag}: D <= T violated (D={t.deadline_ms}, T={t.period_ms})")
        if t.period_ms <= 0:
            violations.append(f"{tag}: T must be positive (T={t.period_ms})")
        if t.priority in seen_prios:
            violations.append(f"{tag}: unique priorities violated (priority={t.priority})")
        seen_prios.add(t.priority)
        if t.trust not in (TRUSTED, UNTRUSTED):
            violations.append(f"{tag}: unknown trust {t.trust!r}")
        if t.kind not in (CONTROL, NON_CONTROL):
            violations.append(f"{tag}: unknown kind {t.kind!r}")
        if t.aew_ms < 0:
            violations.append(f"{tag}: AEW width must be nonnegative")
        if t.aew_ms > 0 and t.kind != CONTROL:
            violations.append(f"{tag}: AEW width on a non-control task")
        if t.trust == UNTRUSTED and t.kind == CONTROL:
            violations.append(f"{tag}: untrusted tasks must be non-control")
    return violations


@dataclass(frozen=True)
class DelaySequence:
    """Per-job release offsets for one victim task over a hyperperiod.

    Entry j (0-based) applies to job j+1; the sequence repeats cyclically, so
    job k (1-based) receives ``delays_ms[(k - 1) % len(delays_ms)]``.
    """

    victim_id: int
    delays_ms: tuple[int, ...]

    def __init__(self, victim_id: int, delays_ms: Sequence[int]):
        object.__setattr__(self, "victim_id", victim_id)
        object.__setattr__(self, "delays_ms", tuple(int(d) for d in delays_ms))

    def __len__(self) -> int:
        return len(self.delays_ms)

    def delay_for_job(self, k: int) -> int:
        """Delay applied to 1-based job index k (cyclic)."""
        if k < 1:
            raise ValueError("job indices are 1-based")
        return self.delays_ms[(k - 1) % len(self.delays_ms)]

    def min_delay(self) -> int:
        return min(self.delays_ms)

    def violations(self, taskset: TaskSet) -> list[str]:
        """Invariant check against a task set (length, strict delay bound)."""
        out: list[str] = []
        try:
            victim = taskset.by_id(self.victim_id)
        except KeyError:
            return [f"victim id {self.victim_id} not in task set"]
        expected = taskset.jobs_in_hyperperiod(victim)
        if len(self.delays_ms) != expected:
            out.append(
                f"sequence length {len(self.delays_ms)} != H/T_v = {expected}"
            )
        bound = victim.deadline_ms - victim.wcet_ms
        for j, d in enumerate(self.delays_ms, start=1):
            if not 0 <= d < bound:
                out.append(f"entry {j}: delay {d} outside [0, {bound})")
        return out


# --- file format -----------------------------------------------------------

_TASK_FIELDS = {
    "id", "period_ms", "wcet_ms", "deadline_ms", "priority", "trust", "kind", "aew_ms",
}
_REQUIRED_FIELDS = {"id", "period_ms", "wcet_ms", "deadline_ms", "trust", "kind"}


def parse_taskset(doc: dict) -> TaskSet:
    """Build a TaskSet from a parsed task-set document.

    Unknown fields are rejected.  Explicit priorities win when present; if
    any task omits its priority, rate-monotonic priorities are derived for
    the whole set.
    """
    if not isinstance(doc, dict) or "tasks" not in doc:
        raise TaskSetError("task-set document must be an object with a 'tasks' list")
    extra_top = set(doc) - {"tasks", "name"}
    if extra_top:
        raise TaskSetError(f"unknown top-level fields: {sorted(extra_top)}")
    tasks = []
    explicit = True
    for entry in doc["tasks"]:
        unknown = set(entry) - _TASK_FIELDS
        if unknown:
            raise TaskSetError(f"unknown task fields: {sorted(unknown)}")
        missing = _REQUIRED_FIELDS - set(entry)
        if missing:
            raise TaskSetError(f"missing task fields: {sorted(missing)}")
        if "priority" not in entry:
            explicit = False
        tasks.append(
            TaskSpec(
                id=int(entry["id"]),
                period_ms=int(entry["period_ms"]),
                wcet_ms=int(entry["wcet_ms"]),
                deadline_ms=int(entry["deadline_ms"]),
                priority=int(entry.get("priority", 0)),
                trust=entry["trust"],
                kind=entry["kind"],
                aew_ms=int(entry.get("aew_ms", 0)),
            )
        )
    ts = TaskSet(tasks)
    if not explicit:
        ts = assign_rm_priorities(ts)
    return ts


def taskset_to_doc(taskset: TaskSet, name: str | None = None) -> dict:
    doc: dict = {}
    if name:
        doc["name"] = name
    doc["tasks"] = [
        {
            "id": t.id,
            "period_ms": t.period_ms,
            "wcet_ms": t.wcet_ms,
            "deadline_ms": t.deadline_ms,
            "priority": t.priority,
            "trust": t.trust,
            "kind": t.kind,
            "aew_ms": t.aew_ms,
        }
        for t in taskset.tasks
    ]
    return doc


def load_taskset(path: str | Path) -> TaskSet:
    with open(path) as fh:
        return parse_taskset(json.load(fh))


def save_taskset(taskset: TaskSet, path: str | Path, name: str | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(taskset_to_doc(taskset, name), fh, indent=2)
        fh.write("\n")


def load_delay_sequence(path: str | Path) -> DelaySequence:
    with open(path) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"victim_id", "delays_ms"}
    if unknown:
        raise TaskSetError(f"unknown delay-sequence fields: {sorted(unknown)}")
    return DelaySequence(int(doc["victim_id"]), doc["delays_ms"])


def save_delay_sequence(seq: DelaySequence, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump({"victim_id": seq.victim_id, "delays_ms": list(seq.delays_ms)}, fh, indent=2)
        fh.write("\n")
