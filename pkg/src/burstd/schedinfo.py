"""Job sources: accounting-file replay, synthetic workloads, external poll command.

Accounting CSV (one job per line)::

    job_id,submit_time,duration_s,queue
    j1,1229390030,3600,cloud.q

The header is optional and recognised by a non-numeric second field; lines
starting with ``#`` are comments.  Rows must be ordered by submit time.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from burstd.domain import Job, JobState, finish_job, start_job
from burstd.errors import OrderError, ParseError
from burstd.shell import run_command

HEADER = "job_id,submit_time,duration_s,queue"


@dataclass(frozen=True)
class AccountingRecord:
    job_id: str
    submit_time: int
    duration: int
    queue: str

    def to_job(self) -> Job:
        return Job(self.job_id, self.submit_time, self.queue, duration=self.duration)


def _parse_int(text: str, line_no: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(line_no, f"{what} {text!r} is not an integer") from None


def parse_accounting(data: bytes | str) -> list[AccountingRecord]:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(0, f"not UTF-8: {exc}") from None
    records: list[AccountingRecord] = []
    seen: set[str] = set()
    first_content = True
    for line_no, raw in enumerate(data.splitlines(), 1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split(",")
        if first_content:
            first_content = False
            if len(fields) > 1 and not fields[1].strip().lstrip("-").isdigit():
                continue  # header
        if len(fields) != 4:
            raise ParseError(line_no, f"expected 4 fields, got {len(fields)}")
        job_id, submit, duration, queue = fields
        if not job_id:
            raise ParseError(line_no, "empty job_id")
        if "|" in job_id:
            raise ParseError(line_no, "job_id must not contain '|'")
        if not queue:
            raise ParseError(line_no, "empty queue")
        submit_time = _parse_int(submit, line_no, "submit_time")
        duration_s = _parse_int(duration, line_no, "duration_s")
        if duration_s < 0:
            raise ParseError(line_no, "negative duration")
        if job_id in seen:
            raise ParseError(line_no, f"duplicate job_id {job_id!r}")
        if records and submit_time < records[-1].submit_time:
            raise OrderError(line_no)
        seen.add(job_id)
        records.append(AccountingRecord(job_id, submit_time, duration_s, queue))
    return records


def format_accounting(records: Iterable[AccountingRecord]) -> str:
    lines = [HEADER]
    lines += [f"{r.job_id},{r.submit_time},{r.duration},{r.queue}" for r in records]
    return "\n".join(lines) + "\n"


def read_accounting(path) -> list[AccountingRecord]:
    with open(path, "rb") as fh:
        return parse_accounting(fh.read())


@dataclass(frozen=True)
class SyntheticWorkloadSpec:
    seed: int = 0
    n_jobs: int = 100
    burst_count: int = 1
    burst_spacing: int = 3600
    duration_min: int = 60
    duration_max: int = 3600
    candidate_fraction: float = 0.5
    start_time: int = 0
    burst_jitter: int = 0
    candidate_queue: str = "cloud.q"
    other_queue: str = "all.q"

    def __post_init__(self):
        if self.n_jobs < 0:
            raise ValueError("n_jobs must be nonnegative")
        if self.burst_count < 1:
            raise ValueError("burst_count must be at least 1")
        if self.burst_spacing < 0 or self.burst_jitter < 0:
            raise ValueError("burst_spacing and burst_jitter must be nonnegative")
        if not 0 <= self.duration_min <= self.duration_max:
            raise ValueError("need 0 <= duration_min <= duration_max")
        if not 0.0 <= self.candidate_fraction <= 1.0:
            raise ValueError("candidate_fraction must lie in [0, 1]")


def generate_workload(spec: SyntheticWorkloadSpec) -> list[AccountingRecord]:
    """Bursty random workload: each job joins one of `burst_count` bursts.

    Bursts start `burst_spacing` apart; within a burst, submit times are
    spread uniformly over `burst_jitter` seconds.
    """
    rng = random.Random(spec.seed)
    raw = []
    for i in range(spec.n_jobs):
        burst = rng.randrange(spec.burst_count)
        submit = spec.start_time + burst * spec.burst_spacing + rng.randint(0, spec.burst_jitter)
        duration = rng.randint(spec.duration_min, spec.duration_max)
        queue = spec.candidate_queue if rng.random() < spec.candidate_fraction else spec.other_queue
        raw.append((submit, i, duration, queue))
    raw.sort()
    width = max(6, len(str(spec.n_jobs)))
    return [
        AccountingRecord(f"job-{k:0{width}d}", submit, duration, queue)
        for k, (submit, _, duration, queue) in enumerate(raw, 1)
    ]


@dataclass(frozen=True)
class QueueSnapshot:
    at: int
    jobs: Sequence[Job]


class JobSource:
    """Where the orchestrator learns about queued and running jobs."""

    def poll_snapshot(self, now: int) -> QueueSnapshot:
        raise NotImplementedError


class ReplaySource(JobSource):
    """Replays accounting records against a virtual clock.

    The simulated cluster reports dispatch and completion back through
    `mark_running` / `mark_finished`, so snapshots reflect the replayed
    batch system.
    """

    def __init__(self, records: Sequence[AccountingRecord]):
        self.records = list(records)
        self._next = 0
        self._active: dict[str, Job] = {}
        self.finished = 0

    @property
    def exhausted(self) -> bool:
        return self._next >= len(self.records)

    @property
    def done(self) -> bool:
        return self.exhausted and not self._active

    def poll_snapshot(self, now: int) -> QueueSnapshot:
        records = self.records
        while self._next < len(records) and records[self._next].submit_time <= now:
            rec = records[self._next]
            self._active[rec.job_id] = rec.to_job()
            self._next += 1
        return QueueSnapshot(now, tuple(self._active.values()))

    def mark_running(self, job_id: str, node: str, at: int):
        self._active[job_id] = start_job(self._active[job_id], node, at)

    def mark_finished(self, job_id: str, at: int):
        finish_job(self._active.pop(job_id), at)
        self.finished += 1


def parse_poll_output(text: str, at: int) -> QueueSnapshot:
    """Parse ``job_id|STATE|queue|submit_epoch[|node]`` lines."""
    jobs = []
    seen = set()
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split("|")
        if len(fields) not in (4, 5):
            raise ParseError(line_no, f"expected 4 or 5 '|'-separated fields, got {len(fields)}")
        job_id, state, queue, submit = fields[:4]
        node = fields[4] if len(fields) == 5 and fields[4] else None
        if not job_id:
            raise ParseError(line_no, "empty job_id")
        if job_id in seen:
            raise ParseError(line_no, f"duplicate job_id {job_id!r}")
        if state not in ("PENDING", "RUNNING"):
            raise ParseError(line_no, f"bad state {state!r}")
        submit_time = _parse_int(submit, line_no, "submit_epoch")
        seen.add(job_id)
        job = Job(job_id, submit_time, queue, state=JobState(state))
        if job.state is JobState.RUNNING:
            job = dataclasses.replace(job, assigned_node=node or "external")
        jobs.append(job)
    return QueueSnapshot(at, tuple(jobs))


class ExternalCommandSource(JobSource):
    """Live source: runs a site-specific poll command each tick."""

    def __init__(self, poll_cmd: str, timeout: Optional[float] = None):
        self.poll_cmd = poll_cmd
        self.timeout = timeout

    def poll_snapshot(self, now: int) -> QueueSnapshot:
        return parse_poll_output(run_command(self.poll_cmd, timeout=self.timeout), now)


def poll_snapshot(source: JobSource, now: int) -> QueueSnapshot:
    return source.poll_snapshot(now)
