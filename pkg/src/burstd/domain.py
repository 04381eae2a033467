"""Core value types: jobs, cloud VMs, the loop clock and the decision log.

All records are frozen dataclasses; state changes go through the helper
functions here, which return updated copies and enforce the lifecycle
tables.  Timestamps are integer epoch seconds (UTC).
"""

from __future__ import annotations

import dataclasses
import enum
import time
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, TextIO

from burstd.errors import IllegalTransition, ParseError


class JobState(str, enum.Enum):
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    FINISHED = "FINISHED"


class VmState(str, enum.Enum):
    REQUESTED = "REQUESTED"
    STARTING = "STARTING"
    UP = "UP"
    DRAINING = "DRAINING"
    STOPPED = "STOPPED"
    FAILED = "FAILED"


VM_TRANSITIONS = {
    VmState.REQUESTED: frozenset({VmState.STARTING, VmState.FAILED}),
    VmState.STARTING: frozenset({VmState.UP, VmState.FAILED}),
    VmState.UP: frozenset({VmState.DRAINING}),
    VmState.DRAINING: frozenset({VmState.STOPPED}),
    VmState.STOPPED: frozenset(),
    VmState.FAILED: frozenset(),
}

JOB_TRANSITIONS = {
    JobState.PENDING: frozenset({JobState.RUNNING}),
    JobState.RUNNING: frozenset({JobState.FINISHED}),
    JobState.FINISHED: frozenset(),
}

LIVE_VM_STATES = frozenset({VmState.REQUESTED, VmState.STARTING, VmState.UP, VmState.DRAINING})


@dataclass(frozen=True)
class Job:
    job_id: str
    submit_time: int
    queue: str
    duration: Optional[int] = None
    state: JobState = JobState.PENDING
    assigned_node: Optional[str] = None
    is_candidate: bool = False
    started_at: Optional[int] = None
    finished_at: Optional[int] = None


def start_job(job: Job, node: str, at: int) -> Job:
    if JobState.RUNNING not in JOB_TRANSITIONS[job.state]:
        raise IllegalTransition(job.state.value, JobState.RUNNING.value, job.job_id)
    if at < job.submit_time:
        raise ValueError(f"{job.job_id} cannot start at {at} before submission at {job.submit_time}")
    return dataclasses.replace(job, state=JobState.RUNNING, assigned_node=node, started_at=at)


def finish_job(job: Job, at: int) -> Job:
    if JobState.FINISHED not in JOB_TRANSITIONS[job.state]:
        raise IllegalTransition(job.state.value, JobState.FINISHED.value, job.job_id)
    if job.started_at is not None and at < job.started_at:
        raise ValueError(f"{job.job_id} cannot finish at {at} before its start at {job.started_at}")
    return dataclasses.replace(job, state=JobState.FINISHED, assigned_node=None, finished_at=at)


@dataclass(frozen=True)
class VmInstance:
    vm_id: str
    requested_at: int
    state: VmState = VmState.REQUESTED
    up_at: Optional[int] = None
    idle_since: Optional[int] = None
    running_jobs: int = 0
    billed_increments: int = 0
    provider_handle: str = ""

    @property
    def last_seen(self) -> int:
        return max(t for t in (self.requested_at, self.up_at, self.idle_since) if t is not None)


def transition_vm(vm: VmInstance, to: VmState, at: int) -> VmInstance:
    """Move `vm` along one legal lifecycle edge.

    Entering UP stamps ``up_at`` and starts the idle clock (a freshly booted
    VM runs nothing).  Leaving UP clears the idle clock.
    """
    to = VmState(to)
    if to not in VM_TRANSITIONS[vm.state]:
        raise IllegalTransition(vm.state.value, to.value, vm.vm_id)
    if at < vm.last_seen:
        raise ValueError(f"{vm.vm_id}: timestamp {at} precedes {vm.last_seen}")
    changes = {"state": to}
    if to is VmState.UP:
        changes["up_at"] = at
        changes["idle_since"] = at if vm.running_jobs == 0 else None
    elif to is VmState.DRAINING:
        if vm.running_jobs:
            raise IllegalTransition(vm.state.value, to.value, f"{vm.vm_id} busy")
        changes["idle_since"] = None
    return dataclasses.replace(vm, **changes)


def with_running_jobs(vm: VmInstance, count: int, at: int) -> VmInstance:
    """Set the number of jobs on an UP VM and keep the idle clock consistent."""
    if count < 0:
        raise ValueError("running job count must be nonnegative")
    if count and vm.state is not VmState.UP:
        raise IllegalTransition(vm.state.value, vm.state.value, f"{vm.vm_id} gets jobs while not UP")
    if count == vm.running_jobs:
        return vm
    if count == 0:
        idle_since = at if vm.state is VmState.UP else None
    else:
        idle_since = None
    return dataclasses.replace(vm, running_jobs=count, idle_since=idle_since)


def vm_idle_seconds(vm: VmInstance, now: int) -> int:
    if vm.idle_since is None:
        return 0
    return max(0, now - vm.idle_since)


class ClockMode(str, enum.Enum):
    REAL = "REAL"
    VIRTUAL = "VIRTUAL"


@dataclass(frozen=True)
class Clock:
    now: int
    mode: ClockMode = ClockMode.VIRTUAL
    step: int = 30

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("clock step must be positive")

    @classmethod
    def real(cls, step: int = 30) -> "Clock":
        return cls(now=int(time.time()), mode=ClockMode.REAL, step=step)

    def advance(self) -> "Clock":
        if self.mode is ClockMode.VIRTUAL:
            return dataclasses.replace(self, now=self.now + self.step)
        # wall clock may jump backwards (NTP); never let observers see that
        return dataclasses.replace(self, now=max(self.now, int(time.time())))


class EventKind(str, enum.Enum):
    VM_START_REQUESTED = "VM_START_REQUESTED"
    VM_UP = "VM_UP"
    VM_ATTACHED = "VM_ATTACHED"
    VM_DRAIN = "VM_DRAIN"
    VM_STOP = "VM_STOP"
    VM_FAILED = "VM_FAILED"
    JOB_DISPATCHED = "JOB_DISPATCHED"
    JOB_FINISHED = "JOB_FINISHED"


@dataclass(frozen=True)
class DecisionEvent:
    at: int
    seq: int
    kind: EventKind
    subject_id: str
    detail: str

    def format(self) -> str:
        return f"{self.at} {self.seq} {self.kind.value} {self.subject_id} {self.detail}"

    @classmethod
    def parse(cls, line: str, line_no: int = 0) -> "DecisionEvent":
        parts = line.rstrip("\n").split(" ", 4)
        if len(parts) != 5:
            raise ParseError(line_no, "expected 5 space-separated fields")
        at, seq, kind, subject, detail = parts
        try:
            return cls(int(at), int(seq), EventKind(kind), subject, detail)
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None


class DecisionLog:
    """Append-only event log with a global sequence counter.

    If `sink` is given, every event is also written there as it happens.
    """

    def __init__(self, sink: Optional[TextIO] = None):
        self.events: list[DecisionEvent] = []
        self.seq = 0
        self.sink = sink

    def append(self, at: int, kind: EventKind, subject_id: str, detail: str) -> DecisionEvent:
        if self.events and at < self.events[-1].at:
            raise ValueError(f"event at {at} precedes previous event at {self.events[-1].at}")
        self.seq += 1
        event = DecisionEvent(at, self.seq, kind, subject_id, detail)
        self.events.append(event)
        if self.sink is not None:
            self.sink.write(event.format() + "\n")
        return event

    def flush(self):
        if self.sink is not None:
            self.sink.flush()

    def __iter__(self) -> Iterator[DecisionEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def count(self, kind: EventKind) -> int:
        return sum(1 for e in self.events if e.kind is kind)


def format_log(events: Iterable[DecisionEvent]) -> str:
    return "".join(e.format() + "\n" for e in events)


def parse_log(text: str) -> list[DecisionEvent]:
    return [DecisionEvent.parse(line, i) for i, line in enumerate(text.splitlines(), 1) if line]


# Legal order of VM events for a single vm_id, as seen in a decision log.
_LOG_VM_NEXT = {
    None: {EventKind.VM_START_REQUESTED},
    EventKind.VM_START_REQUESTED: {EventKind.VM_UP, EventKind.VM_FAILED},
    EventKind.VM_UP: {EventKind.VM_ATTACHED},
    EventKind.VM_ATTACHED: {EventKind.VM_DRAIN},
    EventKind.VM_DRAIN: {EventKind.VM_STOP},
    EventKind.VM_STOP: set(),
    EventKind.VM_FAILED: set(),
}

VM_EVENT_KINDS = frozenset(k for k in EventKind if k.value.startswith("VM_"))


def check_log(events: Iterable[DecisionEvent]) -> list[str]:
    """Replay a log against the lifecycle tables; return a list of problems."""
    problems = []
    last_kind: dict[str, Optional[EventKind]] = {}
    prev = None
    for e in events:
        if prev is not None and (e.at < prev.at or e.seq <= prev.seq):
            problems.append(f"seq {e.seq}: out of order")
        prev = e
        if e.kind in VM_EVENT_KINDS:
            before = last_kind.get(e.subject_id)
            if e.kind not in _LOG_VM_NEXT[before]:
                problems.append(f"seq {e.seq}: {e.subject_id} {before and before.value} -> {e.kind.value}")
            last_kind[e.subject_id] = e.kind
    return problems


def live_vm_profile(events: Iterable[DecisionEvent]) -> list[int]:
    """Live VM count after each event, derived purely from the log."""
    live = 0
    counts = []
    for e in events:
        if e.kind is EventKind.VM_START_REQUESTED:
            live += 1
        elif e.kind in (EventKind.VM_STOP, EventKind.VM_FAILED):
            live -= 1
        counts.append(live)
    return counts
