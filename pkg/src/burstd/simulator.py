"""Trace-driven simulation in virtual time.

The orchestrator runs unchanged against a `ReplaySource` and a
`SimulatedProvider`; a small FIFO cluster model stands in for the batch
scheduler.  Completions are checked at tick start, so finish times are
rounded up to the next tick boundary.
"""

from __future__ import annotations

import csv
import dataclasses
import heapq
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from burstd.domain import Clock, ClockMode, DecisionEvent, Job, VmInstance, format_log
from burstd.errors import NonTermination
from burstd.orchestrator import LOCAL_NODE, Orchestrator
from burstd.policy import Policy, PolicyConfig
from burstd.provider import BillingSummary, ProviderConfig, SimulatedProvider, format_amount
from burstd.schedinfo import AccountingRecord, ReplaySource


@dataclass(frozen=True)
class SimulationConfig:
    trace: Sequence[AccountingRecord]
    time_interval: int = 30
    start_time: Optional[int] = None  # default: first submit time
    max_vms: int = 0
    cluster_size: int = 0
    provider_cfg: ProviderConfig = field(default_factory=ProviderConfig)
    policy_cfg: PolicyConfig = field(default_factory=PolicyConfig)
    seed: int = 0
    max_ticks: Optional[int] = None

    def __post_init__(self):
        if self.time_interval < 1:
            raise ValueError("time_interval must be at least 1 s")
        if self.cluster_size < 0 or self.max_vms < 0:
            raise ValueError("cluster_size and max_vms must be nonnegative")

    @property
    def effective_start(self) -> int:
        if self.start_time is not None:
            return self.start_time
        return self.trace[0].submit_time if self.trace else 0


@dataclass(frozen=True)
class TimeSeriesPoint:
    at: int
    pending: int
    running: int
    nodes_available: int
    vms_idle: int


@dataclass(frozen=True)
class UtilizationRecord:
    job_id: str
    started_at: int
    finished_at: int
    node_kind: str  # LOCAL or CLOUD


@dataclass
class SimulationResult:
    decisions: list[DecisionEvent]
    timeseries: list[TimeSeriesPoint]
    utilization: list[UtilizationRecord]
    billing: list[BillingSummary]
    makespan: int
    start_time: int

    @property
    def vm_starts(self) -> int:
        return sum(1 for e in self.decisions if e.kind.value == "VM_START_REQUESTED")

    @property
    def total_cost(self) -> float:
        return sum(b.cost for b in self.billing)


def dispatch_fifo(pending: Iterable[Job], free_local: int, free_cloud_nodes: Sequence[VmInstance],
                  now: int) -> list[tuple[Job, str]]:
    """FIFO placement with per-node-kind eligibility.

    Non-candidates only take local slots.  Candidates take a local slot if
    one is free, else a cloud node, oldest-idle first.  A job that does not
    fit is skipped without blocking later jobs.  Zero-length jobs complete
    immediately and leave their slot free.
    """
    cloud = sorted(free_cloud_nodes,
                   key=lambda vm: (vm.idle_since if vm.idle_since is not None else now, vm.vm_id))
    next_cloud = 0
    out = []
    for job in pending:
        if free_local <= 0 and next_cloud >= len(cloud):
            break
        instant = job.duration == 0
        if free_local > 0:
            out.append((job, LOCAL_NODE))
            if not instant:
                free_local -= 1
        elif job.is_candidate and next_cloud < len(cloud):
            out.append((job, cloud[next_cloud].vm_id))
            if not instant:
                next_cloud += 1
    return out


class FifoCluster:
    """Local slots plus attached cloud nodes (one job per VM)."""

    def __init__(self, source: ReplaySource, local_nodes: int):
        self.source = source
        self.free_local = local_nodes
        self._finishing: list[tuple[int, int, str]] = []
        self._order = 0
        self.utilization: list[UtilizationRecord] = []

    def complete(self, orch: Orchestrator, now: int):
        heap = self._finishing
        while heap and heap[0][0] <= now:
            _, _, job_id = heapq.heappop(heap)
            self._finish(orch, job_id, now)

    def _finish(self, orch: Orchestrator, job_id: str, now: int):
        node = orch.state.running[job_id].assigned_node
        job = orch.record_finish(job_id, now)
        self.source.mark_finished(job_id, now)
        if node == LOCAL_NODE:
            self.free_local += 1
        kind = "LOCAL" if node == LOCAL_NODE else "CLOUD"
        self.utilization.append(UtilizationRecord(job_id, job.started_at, now, kind))

    def dispatch(self, orch: Orchestrator, now: int):
        st = orch.state
        free_cloud = [vm for vm in st.up_vms() if vm.running_jobs == 0 and vm.vm_id in st.nodes]
        for job, node in dispatch_fifo(st.pending.values(), self.free_local, free_cloud, now):
            orch.record_start(job.job_id, node, now)
            self.source.mark_running(job.job_id, node, now)
            if node == LOCAL_NODE:
                self.free_local -= 1
            if job.duration == 0:
                self._finish(orch, job.job_id, now)
            else:
                self._order += 1
                heapq.heappush(self._finishing, (now + job.duration, self._order, job.job_id))


def _check_termination(cfg: SimulationConfig, policy: Policy):
    if not cfg.trace or cfg.cluster_size > 0:
        return
    if cfg.max_vms == 0 or cfg.provider_cfg.failure_rate >= 1.0:
        raise NonTermination("jobs are queued but there are no local nodes and no usable VMs")
    stuck = [r.job_id for r in cfg.trace if not policy.is_cloud_candidate(r.to_job())]
    if stuck:
        raise NonTermination(
            f"{len(stuck)} job(s) (first: {stuck[0]}) are not cloud candidates and there are no local nodes")


def build(cfg: SimulationConfig, policy: Optional[Policy] = None):
    """Wire up orchestrator, replay source, simulated provider and cluster model."""
    policy = policy if policy is not None else Policy(cfg.policy_cfg)
    provider_cfg = cfg.provider_cfg
    if provider_cfg.max_vms != cfg.max_vms:
        provider_cfg = dataclasses.replace(provider_cfg, max_vms=cfg.max_vms)
    source = ReplaySource(cfg.trace)
    cluster = FifoCluster(source, cfg.cluster_size)
    orch = Orchestrator(source, SimulatedProvider(provider_cfg, seed=cfg.seed), policy,
                        clock=Clock(cfg.effective_start, ClockMode.VIRTUAL, cfg.time_interval),
                        local_nodes=cfg.cluster_size, dispatcher=cluster)
    return orch, source, cluster


def simulate(cfg: SimulationConfig, policy: Optional[Policy] = None) -> SimulationResult:
    policy = policy if policy is not None else Policy(cfg.policy_cfg)
    _check_termination(cfg, policy)
    orch, source, cluster = build(cfg, policy)
    series: list[TimeSeriesPoint] = []

    def record(o: Orchestrator, now: int):
        up = o.state.up_vms()
        series.append(TimeSeriesPoint(now, len(o.state.pending), len(o.state.running),
                                      cfg.cluster_size + len(up),
                                      sum(1 for vm in up if vm.running_jobs == 0)))

    orch.observers.append(record)
    stall_limit = math.ceil(orch.provider.cfg.launch_stagger / cfg.time_interval) + 2
    stalled = 0

    def finished(o: Orchestrator) -> bool:
        nonlocal stalled
        st = o.state
        if source.done and not st.vms:
            return True
        if cfg.max_ticks is not None and st.ticks >= cfg.max_ticks:
            raise NonTermination(f"no quiescence after {cfg.max_ticks} ticks")
        if source.exhausted and st.pending and not st.running and not st.vms:
            stalled += 1
            if stalled > stall_limit:
                raise NonTermination(f"{len(st.pending)} job(s) pending but nothing can run them")
        else:
            stalled = 0
        return False

    orch.run(until=finished)
    start = cfg.effective_start
    makespan = max((u.finished_at for u in cluster.utilization), default=start) - start
    return SimulationResult(list(orch.state.decision_log), series, cluster.utilization,
                            orch.state.billing, makespan, start)


# -- output files ----------------------------------------------------------

TIMESERIES_HEADER = ["at", "pending", "running", "nodes_available", "vms_idle"]
UTILIZATION_HEADER = ["job_id", "started_at", "finished_at", "node_kind"]
BILLING_HEADER = ["vm_id", "requested_at", "stopped_at", "increments", "cost"]


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def timeseries_csv(series: Iterable[TimeSeriesPoint]) -> str:
    return _csv_text(TIMESERIES_HEADER,
                     ((p.at, p.pending, p.running, p.nodes_available, p.vms_idle) for p in series))


def emit_timeseries(series: Iterable[TimeSeriesPoint], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(timeseries_csv(series))


def read_timeseries(path) -> list[TimeSeriesPoint]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TIMESERIES_HEADER:
        raise ValueError(f"{path}: missing timeseries header")
    return [TimeSeriesPoint(*map(int, row)) for row in rows[1:]]


def utilization_csv(records: Iterable[UtilizationRecord]) -> str:
    return _csv_text(UTILIZATION_HEADER,
                     ((u.job_id, u.started_at, u.finished_at, u.node_kind) for u in records))


def billing_csv(bills: Iterable[BillingSummary]) -> str:
    return _csv_text(BILLING_HEADER, ((b.vm_id, b.first_billed_at, b.last_billed_at, b.increments,
                                       format_amount(b.cost)) for b in bills))


def write_outputs(result: SimulationResult, out_dir) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    files = {
        "decisions.log": format_log(result.decisions),
        "timeseries.csv": timeseries_csv(result.timeseries),
        "utilization.csv": utilization_csv(result.utilization),
        "billing.csv": billing_csv(result.billing),
    }
    paths = {}
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths[name] = path
    return paths
