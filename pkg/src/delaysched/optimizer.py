"""Attack-window overlap objective, Big-M MILP construction, exact solvers.

The objective counts, over one hyperperiod, how much of each untrusted job's
execution window can fall inside the victim's post-completion attack window
when the victim's k-th job is shifted by delta_k.  All response-time inputs
are frozen worst-case bounds (constants of the problem), which makes every
summand depend on its own delta_k only; the exact optimum therefore
decomposes per victim job.  A branch-and-bound solve of the full MILP is
kept as a cross-check route.

Two window anchorings are supported.  The attack window always ends at
r_ik + delta_k + R_i + Omega; its start is bounded either by the victim's
earliest possible completion r_ik + C_i + delta_k ("wcet", the pessimistic
linear form) or by its worst-case completion r_ik + R_i + delta_k
("finish").  The shipped automotive scenario uses "finish", which is the
convention the baseline overlap figures in this repo are quoted under.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .model import CONTROL, UNTRUSTED, DelaySequence, TaskSet
from .rta import lp_task_wcrt_under_delay, victim_rta, wcrt_classic

ANCHOR_FINISH = "finish"
ANCHOR_WCET = "wcet"


@dataclass(frozen=True)
class UntrustedGrid:
    task_id: int
    releases: tuple[int, ...]
    response_bound: int


@dataclass(frozen=True)
class OverlapProblem:
    """Frozen inputs of one victim's overlap-minimization instance."""

    victim_id: int
    hyperperiod: int
    victim_releases: tuple[int, ...]
    victim_wcet: int
    victim_response_bound: int
    aew_width: int
    max_delay: int
    delay_cap: int
    untrusted: tuple[UntrustedGrid, ...]
    anchor: str = ANCHOR_FINISH

    @property
    def n_victim_jobs(self) -> int:
        return len(self.victim_releases)

    @property
    def start_offset(self) -> int:
        if self.anchor == ANCHOR_FINISH:
            return self.victim_response_bound
        if self.anchor == ANCHOR_WCET:
            return self.victim_wcet
        raise ValueError(f"unknown anchor {self.anchor!r}")

    @property
    def big_m(self) -> int:
        worst_untrusted = max((g.response_bound for g in self.untrusted), default=0)
        return (self.hyperperiod + worst_untrusted
                + self.victim_response_bound + self.aew_width)


def build_overlap_problem(taskset: TaskSet, victim_id: int, max_delay: int,
                          anchor: str = ANCHOR_FINISH) -> OverlapProblem:
    """Assemble the overlap instance from a task set.

    Response bounds: the victim's is its worst per-job bound under a uniform
    delay of ``max_delay``; each untrusted task below the victim gets the
    jitter-extended bound at that same delay, untrusted tasks above it the
    classic bound.  Job grids are the synchronous releases over one
    hyperperiod.  The delay grid is clamped to the strict per-job delay
    bound so emitted sequences always validate.
    """
    victim = taskset.by_id(victim_id)
    if victim.kind != CONTROL:
        raise ValueError(f"victim {victim_id} is not a control task")
    if max_delay < 0:
        raise ValueError("max delay must be nonnegative")
    h = taskset.hyperperiod_ms
    result = victim_rta(victim, taskset, max_delay)
    if not result.feasible:
        raise ValueError(f"victim {victim_id} is unschedulable at delay {max_delay}")
    r_victim = max(r for _, r in result.per_job_wcrt)
    grids = []
    for t in taskset.untrusted_tasks:
        if t.priority > victim.priority:
            bound = lp_task_wcrt_under_delay(t, victim, max_delay, taskset)
        else:
            bound = wcrt_classic(t, taskset)
        if bound is None:
            raise ValueError(f"untrusted task {t.id} has no finite response bound")
        releases = tuple(range(0, h, t.period_ms))
        grids.append(UntrustedGrid(t.id, releases, bound))
    cap = min(max_delay, victim.deadline_ms - victim.wcet_ms - 1)
    return OverlapProblem(
        victim_id=victim_id,
        hyperperiod=h,
        victim_releases=tuple(range(0, h, victim.period_ms)),
        victim_wcet=victim.wcet_ms,
        victim_response_bound=r_victim,
        aew_width=victim.aew_ms,
        max_delay=max_delay,
        delay_cap=max(0, cap),
        untrusted=tuple(grids),
        anchor=anchor,
    )


def overlap_term(problem: OverlapProblem, k: int, delta: int, j: int, m: int) -> int:
    """Worst-case overlap of victim job k (1-based, shifted by ``delta``)
    with the m-th job (1-based) of the j-th untrusted grid:

        max(0, min(r_ik + delta + R_i + Omega, r_jm + R_j)
             - max(r_ik + start_offset + delta, r_jm))
    """
    r_ik = problem.victim_releases[k - 1]
    grid = problem.untrusted[j]
    r_jm = grid.releases[m - 1]
    end = min(r_ik + delta + problem.victim_response_bound + problem.aew_width,
              r_jm + grid.response_bound)
    start = max(r_ik + problem.start_offset + delta, r_jm)
    return max(0, end - start)


def job_overlap(problem: OverlapProblem, k: int, delta: int) -> int:
    """Total overlap of victim job k against every untrusted job."""
    total = 0
    for j, grid in enumerate(problem.untrusted):
        for m in range(1, len(grid.releases) + 1):
            total += overlap_term(problem, k, delta, j, m)
    return total


def total_overlap(problem: OverlapProblem, delays: DelaySequence | list[int]) -> int:
    """Triple sum of overlap terms over victim jobs and untrusted jobs."""
    seq = delays.delays_ms if isinstance(delays, DelaySequence) else list(delays)
    if len(seq) != problem.n_victim_jobs:
        raise ValueError(f"delay sequence length {len(seq)} != {problem.n_victim_jobs}")
    return sum(job_overlap(problem, k, seq[k - 1])
               for k in range(1, problem.n_victim_jobs + 1))


def solve_delays(problem: OverlapProblem) -> tuple[DelaySequence, int]:
    """Exact minimizer of the total overlap.

    Each victim job's summand depends only on its own delay, so each job is
    scanned independently over the integer delay grid; ties break toward the
    smallest delay (least control-performance perturbation).
    """
    best: list[int] = []
    objective = 0
    for k in range(1, problem.n_victim_jobs + 1):
        best_delta, best_val = 0, None
        for delta in range(0, problem.delay_cap + 1):
            val = job_overlap(problem, k, delta)
            if best_val is None or val < best_val:
                best_delta, best_val = delta, val
        best.append(best_delta)
        objective += best_val or 0
    return DelaySequence(problem.victim_id, best), objective


# --- Big-M linearization -----------------------------------------------------

SENSE_LE = "<="


@dataclass
class MilpInstance:
    """The linearized instance: per victim-job/untrusted-job pair, three
    continuous auxiliaries (a = window start, b = window end, z = clamped
    overlap), three binaries selecting the active max/min branches and the
    positive-overlap region, plus one delay variable per victim job.

    Rows are stored in <= normal form as sparse coefficient dicts.
    """

    problem: OverlapProblem
    big_m: int
    var_names: list[str]
    lower: list[float]
    upper: list[float]
    is_binary: list[bool]
    rows: list[dict[int, float]]
    rhs: list[float]
    objective: dict[int, float]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {n: i for i, n in enumerate(self.var_names)}

    @property
    def n_variables(self) -> int:
        return len(self.var_names)

    @property
    def n_continuous(self) -> int:
        return sum(not b for b in self.is_binary)

    @property
    def n_binaries(self) -> int:
        return sum(self.is_binary)

    @property
    def n_constraints(self) -> int:
        return len(self.rows)

    def triples(self):
        for k in range(1, self.problem.n_victim_jobs + 1):
            for j, grid in enumerate(self.problem.untrusted):
                for m in range(1, len(grid.releases) + 1):
                    yield k, j, m


def build_milp(problem: OverlapProblem) -> MilpInstance:
    """Emit the full constraint system of the linearized objective.

    Per (k, j, m): four rows pin a to the max of the two window starts, four
    pin b to the min of the two window ends, four clamp z to
    max(0, b - a); the binary y^a/y^b/o pick the active branch.  Delay
    bounds are variable bounds (the C1 family).
    """
    m_const = problem.big_m
    var_names: list[str] = []
    lower: list[float] = []
    upper: list[float] = []
    is_binary: list[bool] = []

    def add_var(name, lo, hi, binary=False) -> int:
        var_names.append(name)
        lower.append(lo)
        upper.append(hi)
        is_binary.append(binary)
        return len(var_names) - 1

    delta_idx = {
        k: add_var(f"delta[{k}]", 0, problem.delay_cap)
        for k in range(1, problem.n_victim_jobs + 1)
    }
    triple_vars: dict[tuple[int, int, int], dict[str, int]] = {}
    for k in range(1, problem.n_victim_jobs + 1):
        for j, grid in enumerate(problem.untrusted):
            for m in range(1, len(grid.releases) + 1):
                tag = f"[{k},{grid.task_id},{m}]"
                triple_vars[(k, j, m)] = {
                    "a": add_var("a" + tag, 0, m_const),
                    "b": add_var("b" + tag, 0, m_const),
                    "z": add_var("z" + tag, 0, m_const),
                    "ya": add_var("ya" + tag, 0, 1, binary=True),
                    "yb": add_var("yb" + tag, 0, 1, binary=True),
                    "o": add_var("o" + tag, 0, 1, binary=True),
                }

    rows: list[dict[int, float]] = []
    rhs: list[float] = []

    def add_row(coeffs: dict[int, float], bound: float) -> None:
        rows.append(coeffs)
        rhs.append(bound)

    for (k, j, m), v in triple_vars.items():
        r_ik = problem.victim_releases[k - 1]
        grid = problem.untrusted[j]
        r_jm = grid.releases[m - 1]
        start_victim = r_ik + problem.start_offset          # + delta_k
        end_victim = r_ik + problem.victim_response_bound + problem.aew_width  # + delta_k
        end_untrusted = r_jm + grid.response_bound
        d = delta_idx[k]
        a, b, z = v["a"], v["b"], v["z"]
        ya, yb, o = v["ya"], v["yb"], v["o"]
        # a >= start_victim + delta ; a >= r_jm
        add_row({a: -1, d: 1}, -start_victim)
        add_row({a: -1}, -r_jm)
        # a <= start_victim + delta + M(1 - ya) ; a <= r_jm + M ya
        add_row({a: 1, d: -1, ya: m_const}, start_victim + m_const)
        add_row({a: 1, ya: -m_const}, r_jm)
        # b <= end_victim + delta ; b <= end_untrusted
        add_row({b: 1, d: -1}, end_victim)
        add_row({b: 1}, end_untrusted)
        # b >= end_victim + delta - M(1 - yb) ; b >= end_untrusted - M yb
        add_row({b: -1, d: 1, yb: m_const}, -end_victim + m_const)
        add_row({b: -1, yb: -m_const}, -end_untrusted)
        # z >= 0 ; z >= b - a ; z <= b - a + M(1 - o) ; z <= M o
        add_row({z: -1}, 0)
        add_row({z: -1, b: 1, a: -1}, 0)
        add_row({z: 1, b: -1, a: 1, o: m_const}, m_const)
        add_row({z: 1, o: -m_const}, 0)

    objective = {v["z"]: 1.0 for v in triple_vars.values()}
    return MilpInstance(problem, m_const, var_names, lower, upper, is_binary,
                        rows, rhs, objective)


def solve_milp(instance: MilpInstance) -> tuple[dict[int, int], int]:
    """Branch-and-bound solve of the instance (HiGHS via scipy); returns the
    optimal delays keyed by 1-based victim job and the integer objective."""
    import numpy as np
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import csr_matrix

    n = instance.n_variables
    c = np.zeros(n)
    for idx, coef in instance.objective.items():
        c[idx] = coef
    data, indices, indptr = [], [], [0]
    for row in instance.rows:
        for idx, coef in row.items():
            indices.append(idx)
            data.append(coef)
        indptr.append(len(indices))
    a_mat = csr_matrix((data, indices, indptr), shape=(len(instance.rows), n))
    constraint = LinearConstraint(a_mat, -np.inf, np.array(instance.rhs))
    integrality = np.array([1 if b else 0 for b in instance.is_binary])
    bounds = Bounds(np.array(instance.lower, dtype=float),
                    np.array(instance.upper, dtype=float))
    res = milp(c=c, constraints=constraint, integrality=integrality, bounds=bounds)
    if not res.success:
        raise RuntimeError(f"MILP solve failed: {res.message}")
    delays = {}
    for k in range(1, instance.problem.n_victim_jobs + 1):
        delays[k] = int(round(res.x[instance.index[f"delta[{k}]"]]))
    return delays, int(round(res.fun))


def verify_linearization(instance: MilpInstance, delays: dict[int, int] | list[int]) -> bool:
    """True iff, for the given feasible delays, the binaries and auxiliaries
    admit a completion satisfying every row with each z equal to the direct
    nonlinear overlap value.  A Big-M chosen too small shows up here as an
    unsatisfiable row."""
    problem = instance.problem
    if isinstance(delays, list):
        delays = {k + 1: d for k, d in enumerate(delays)}
    values = [0.0] * instance.n_variables
    for k in range(1, problem.n_victim_jobs + 1):
        d = delays[k]
        if not 0 <= d <= problem.delay_cap:
            return False
        values[instance.index[f"delta[{k}]"]] = d
    for k, j, m in instance.triples():
        grid = problem.untrusted[j]
        tag = f"[{k},{grid.task_id},{m}]"
        r_ik = problem.victim_releases[k - 1]
        r_jm = grid.releases[m - 1]
        d = delays[k]
        start_v = r_ik + problem.start_offset + d
        end_v = r_ik + d + problem.victim_response_bound + problem.aew_width
        end_u = r_jm + grid.response_bound
        a = max(start_v, r_jm)
        b = min(end_v, end_u)
        z = max(0, b - a)
        if z != overlap_term(problem, k, d, j, m):
            return False
        values[instance.index["a" + tag]] = a
        values[instance.index["b" + tag]] = b
        values[instance.index["z" + tag]] = z
        values[instance.index["ya" + tag]] = 1 if start_v >= r_jm else 0
        values[instance.index["yb" + tag]] = 1 if end_v <= end_u else 0
        values[instance.index["o" + tag]] = 1 if z > 0 else 0
    for idx, (lo, hi) in enumerate(zip(instance.lower, instance.upper)):
        if not lo <= values[idx] <= hi:
            return False
    for row, bound in zip(instance.rows, instance.rhs):
        if sum(coef * values[idx] for idx, coef in row.items()) > bound + 1e-9:
            return False
    return True


def write_lp(instance: MilpInstance, path: str | Path) -> None:
    """Dump the instance in CPLEX LP text format."""
    lines = ["Minimize", " obj: " + " + ".join(
        f"{instance.var_names[i]}" for i in sorted(instance.objective))]
    lines.append("Subject To")
    for i, (row, bound) in enumerate(zip(instance.rows, instance.rhs)):
        terms = []
        for idx in sorted(row):
            coef = row[idx]
            sign = "+" if coef >= 0 else "-"
            mag = abs(coef)
            mag_str = f"{mag:g} " if mag != 1 else ""
            terms.append(f"{sign} {mag_str}{instance.var_names[idx]}")
        expr = " ".join(terms).lstrip("+ ")
        lines.append(f" c{i}: {expr} <= {bound:g}")
    lines.append("Bounds")
    for idx, name in enumerate(instance.var_names):
        if not instance.is_binary[idx]:
            lines.append(f" {instance.lower[idx]:g} <= {name} <= {instance.upper[idx]:g}")
    binaries = [n for n, b in zip(instance.var_names, instance.is_binary) if b]
    if binaries:
        lines.append("Binary")
        for name in binaries:
            lines.append(f" {name}")
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")
