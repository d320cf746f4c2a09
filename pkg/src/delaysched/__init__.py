"""Delay-based mitigation of schedule side-channel attacks on real-time control tasks."""

from .model import (
    CONTROL,
    NON_CONTROL,
    TRUSTED,
    UNTRUSTED,
    DelaySequence,
    TaskSet,
    TaskSetError,
    TaskSpec,
    assign_rm_priorities,
    hyperperiod,
    load_taskset,
    save_taskset,
    validate,
)
from .rta import (
    RtaResult,
    carry_in_interference,
    lp_task_wcrt_under_delay,
    peak_delay,
    victim_job_wcrt,
    victim_rta,
    wcrt_classic,
)

__all__ = [
    "CONTROL",
    "NON_CONTROL",
    "TRUSTED",
    "UNTRUSTED",
    "DelaySequence",
    "TaskSet",
    "TaskSetError",
    "TaskSpec",
    "assign_rm_priorities",
    "hyperperiod",
    "load_taskset",
    "save_taskset",
    "validate",
    "RtaResult",
    "carry_in_interference",
    "lp_task_wcrt_under_delay",
    "peak_delay",
    "victim_job_wcrt",
    "victim_rta",
    "wcrt_classic",
]
