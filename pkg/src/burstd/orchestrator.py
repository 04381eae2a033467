"""The orchestrator control loop.

Each tick runs these phases, always in this order:

0. (simulation) complete jobs whose finish time has been reached
1. poll the job source and register newly seen jobs
2. ask the policy which new pending jobs are cloud candidates
3. poll the provider; attach every freshly booted VM as a node
4. dispatch (simulation) or observe job starts/ends (live)
5. drain and stop idle VMs the policy lets go
6. request at most one new VM if the policy asks for it

Stopping is evaluated before starting so that a tick never retires a VM and
requests a replacement for the same demand.
"""

from __future__ import annotations

import contextlib
import dataclasses
import fcntl
import logging
import os
import signal
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from burstd.domain import (
    Clock, ClockMode, DecisionLog, EventKind, Job, JobState, VmInstance, VmState,
    finish_job, start_job, transition_vm, vm_idle_seconds, with_running_jobs,
)
from burstd.errors import (
    AdapterError, BusyNode, CapReached, IllegalTransition, LockError, ParseError, StaggerViolation,
)
from burstd.policy import Policy, PolicyContext
from burstd.provider import BillingSummary, NodeProvider, format_amount
from burstd.schedinfo import JobSource, QueueSnapshot
from burstd.shell import run_command

log = logging.getLogger(__name__)

LOCAL_NODE = "local"


@dataclass
class OrchestratorState:
    clock: Clock
    jobs: dict[str, Job] = field(default_factory=dict)
    vms: dict[str, VmInstance] = field(default_factory=dict)  # non-terminal VMs only
    candidates: dict[str, Job] = field(default_factory=dict)  # insertion-ordered
    pending: dict[str, Job] = field(default_factory=dict)
    running: dict[str, Job] = field(default_factory=dict)
    nodes: set[str] = field(default_factory=set)
    decision_log: DecisionLog = field(default_factory=DecisionLog)
    retired: dict[str, VmInstance] = field(default_factory=dict)
    billing: list[BillingSummary] = field(default_factory=list)
    errors: list[tuple[int, Exception]] = field(default_factory=list)
    ticks: int = 0

    @property
    def seq(self) -> int:
        return self.decision_log.seq

    def up_vms(self) -> list[VmInstance]:
        return [vm for vm in self.vms.values() if vm.state is VmState.UP]


class Dispatcher(Protocol):
    """In-process cluster model used in simulation mode."""

    free_local: int

    def complete(self, orch: "Orchestrator", now: int) -> None: ...

    def dispatch(self, orch: "Orchestrator", now: int) -> None: ...


@dataclass
class NodeHooks:
    """Optional commands telling the batch system about added/removed nodes."""

    attach_cmd: Optional[str] = None
    detach_cmd: Optional[str] = None
    timeout: Optional[float] = None

    def attach(self, vm: VmInstance):
        if self.attach_cmd:
            run_command(self.attach_cmd, vm.provider_handle, timeout=self.timeout)

    def detach(self, vm: VmInstance):
        if self.detach_cmd:
            run_command(self.detach_cmd, vm.provider_handle, timeout=self.timeout)


class Orchestrator:
    def __init__(self, source: JobSource, provider: NodeProvider, policy: Optional[Policy] = None,
                 clock: Optional[Clock] = None, local_nodes: int = 0,
                 dispatcher: Optional[Dispatcher] = None, decision_log: Optional[DecisionLog] = None,
                 hooks: Optional[NodeHooks] = None):
        self.source = source
        self.provider = provider
        self.policy = policy if policy is not None else Policy()
        self.dispatcher = dispatcher
        self.hooks = hooks or NodeHooks()
        self.local_nodes = local_nodes
        self.state = OrchestratorState(clock=clock or Clock.real(),
                                       decision_log=decision_log if decision_log is not None else DecisionLog())
        self.state.nodes.update(f"{LOCAL_NODE}-{i}" for i in range(local_nodes))
        # called as fn(orchestrator, now) after the phases, before the clock moves
        self.observers: list[Callable[["Orchestrator", int], None]] = []

    @property
    def now(self) -> int:
        return self.state.clock.now

    def _log(self, at, kind, subject, detail):
        return self.state.decision_log.append(at, kind, subject, detail)

    # -- tick ---------------------------------------------------------------

    def tick(self) -> OrchestratorState:
        st = self.state
        now = st.clock.now
        if self.dispatcher is not None:
            self.dispatcher.complete(self, now)
        try:
            snapshot = self.source.poll_snapshot(now)
            changes = self.provider.poll_provider(now)
        except (AdapterError, ParseError) as exc:
            log.error("tick at %d aborted: %s", now, exc)
            st.errors.append((now, exc))
            self._end_tick(now)
            return st
        log.debug("tick %d: polled %d jobs", now, len(snapshot.jobs))
        fresh = self._register_jobs(snapshot)
        self._mark_candidates(fresh)
        self._apply_provider_changes(changes, now)
        if self.dispatcher is not None:
            self.dispatcher.dispatch(self, now)
        else:
            self._observe(snapshot, now)
        self._stop_idle_vms(now)
        self._maybe_start_vm(now)
        self._end_tick(now)
        return st

    def _end_tick(self, now):
        for fn in self.observers:
            fn(self, now)
        self.state.decision_log.flush()
        self.state.ticks += 1
        self.state.clock = self.state.clock.advance()

    def _register_jobs(self, snapshot: QueueSnapshot) -> list[Job]:
        jobs = self.state.jobs
        fresh = [j for j in snapshot.jobs if j.job_id not in jobs]
        fresh.sort(key=lambda j: (j.submit_time, j.job_id))
        registered = []
        for j in fresh:
            # every job enters as PENDING; starts are observed in phase 4
            job = Job(j.job_id, j.submit_time, j.queue, duration=j.duration)
            jobs[job.job_id] = job
            self.state.pending[job.job_id] = job
            registered.append(job)
        return registered

    def _mark_candidates(self, fresh: list[Job]):
        st = self.state
        for job in fresh:
            if self.policy.is_cloud_candidate(job):
                job = dataclasses.replace(job, is_candidate=True)
                st.jobs[job.job_id] = st.pending[job.job_id] = st.candidates[job.job_id] = job

    def _apply_provider_changes(self, changes: list[VmInstance], now: int):
        st = self.state
        for vm in changes:
            if vm.vm_id not in st.vms:
                log.warning("provider reported unknown VM %s", vm.vm_id)
                continue
            st.vms[vm.vm_id] = vm
            if vm.state is VmState.UP:
                self._log(now, EventKind.VM_UP, vm.vm_id, f"boot_s={now - vm.requested_at}")
                self.attach_node(vm)
            elif vm.state is VmState.FAILED:
                self._log(now, EventKind.VM_FAILED, vm.vm_id, f"after_s={now - vm.requested_at}")
                st.retired[vm.vm_id] = st.vms.pop(vm.vm_id)

    def attach_node(self, vm: VmInstance) -> OrchestratorState:
        st = self.state
        if vm.state is not VmState.UP:
            raise IllegalTransition(vm.state.value, "ATTACHED", vm.vm_id)
        if vm.vm_id in st.nodes:
            raise IllegalTransition("ATTACHED", "ATTACHED", vm.vm_id)
        self.hooks.attach(vm)
        st.nodes.add(vm.vm_id)
        self._log(self.now, EventKind.VM_ATTACHED, vm.vm_id, f"nodes={len(st.nodes)}")
        return st

    def detach_node(self, vm: VmInstance) -> OrchestratorState:
        st = self.state
        if vm.vm_id not in st.nodes:
            raise IllegalTransition(vm.state.value, "DETACHED", f"{vm.vm_id} not attached")
        if vm.running_jobs > 0:
            raise BusyNode(vm.vm_id, vm.running_jobs)
        self.hooks.detach(vm)
        st.nodes.discard(vm.vm_id)
        idle = vm_idle_seconds(vm, self.now)
        st.vms[vm.vm_id] = transition_vm(vm, VmState.DRAINING, self.now)
        self._log(self.now, EventKind.VM_DRAIN, vm.vm_id, f"idle_s={idle}")
        return st

    # -- job bookkeeping, shared by the simulator and live observation ------

    def record_start(self, job_id: str, node: str, now: int) -> Job:
        st = self.state
        job = start_job(st.pending.pop(job_id), node, now)
        st.candidates.pop(job_id, None)
        st.jobs[job_id] = st.running[job_id] = job
        vm = st.vms.get(node)
        if vm is not None:
            st.vms[node] = with_running_jobs(vm, vm.running_jobs + 1, now)
        self._log(now, EventKind.JOB_DISPATCHED, job_id, f"node={node}")
        return job

    def record_finish(self, job_id: str, now: int) -> Job:
        st = self.state
        running = st.running.pop(job_id)
        node = running.assigned_node
        job = finish_job(running, now)
        st.jobs[job_id] = job
        vm = st.vms.get(node)
        if vm is not None:
            st.vms[node] = with_running_jobs(vm, vm.running_jobs - 1, now)
        self._log(now, EventKind.JOB_FINISHED, job_id, f"node={node}")
        return job

    def _observe(self, snapshot: QueueSnapshot, now: int):
        st = self.state
        seen = {}
        for j in snapshot.jobs:
            seen[j.job_id] = j
            if j.state is JobState.RUNNING and j.job_id in st.pending:
                self.record_start(j.job_id, j.assigned_node, now)
            elif j.state is JobState.PENDING and j.job_id in st.running:
                log.warning("job %s reported PENDING again; keeping it RUNNING", j.job_id)
        for job_id in [k for k in st.running if k not in seen]:
            self.record_finish(job_id, now)
        for job_id in [k for k in st.pending if k not in seen]:
            # removed from the queue without running (e.g. deleted by its owner)
            st.pending.pop(job_id)
            st.candidates.pop(job_id, None)
        by_handle = {vm.provider_handle: vm.vm_id for vm in st.vms.values()}
        counts = dict.fromkeys(st.vms, 0)
        for job in st.running.values():
            vm_id = job.assigned_node if job.assigned_node in counts else by_handle.get(job.assigned_node)
            if vm_id is not None:
                counts[vm_id] += 1
        for vm_id, n in counts.items():
            vm = st.vms[vm_id]
            if vm.state is VmState.UP or n == 0:
                st.vms[vm_id] = with_running_jobs(vm, n, now)
            else:
                log.warning("%s runs %d job(s) while %s", vm_id, n, vm.state.value)

    def _stop_idle_vms(self, now: int):
        st = self.state
        for vm in sorted(st.vms.values(), key=lambda v: v.vm_id):
            if vm.state is VmState.UP:
                if vm.running_jobs or not self.policy.can_vm_be_stopped(vm, now):
                    continue
                try:
                    self.detach_node(vm)
                except AdapterError as exc:
                    log.error("detaching %s failed: %s", vm.vm_id, exc)
                    st.errors.append((now, exc))
                    continue
            if st.vms[vm.vm_id].state is VmState.DRAINING:
                self._stop(st.vms[vm.vm_id], now)

    def _stop(self, vm: VmInstance, now: int):
        st = self.state
        try:
            stopped, bill = self.provider.stop_vm(vm, now)
        except AdapterError as exc:
            # stays DRAINING; retried next tick
            log.error("stopping %s failed: %s", vm.vm_id, exc)
            st.errors.append((now, exc))
            return
        del st.vms[vm.vm_id]
        st.retired[vm.vm_id] = stopped
        st.billing.append(bill)
        self._log(now, EventKind.VM_STOP, vm.vm_id,
                  f"increments={bill.increments} cost={format_amount(bill.cost)}")

    def policy_context(self, now: int) -> PolicyContext:
        st = self.state
        free = self.dispatcher.free_local if self.dispatcher is not None else 0
        return PolicyContext(now=now, candidates=tuple(st.candidates.values()),
                             vms=tuple(st.vms.values()), pending_total=len(st.pending),
                             local_nodes_free=free)

    def _maybe_start_vm(self, now: int):
        st = self.state
        ctx = self.policy_context(now)
        if not self.policy.is_new_vm_needed(ctx):
            return
        try:
            vm = self.provider.request_vm(now)
        except (CapReached, StaggerViolation) as exc:
            log.debug("start deferred: %s", exc)
            return
        except AdapterError as exc:
            log.error("VM start failed: %s", exc)
            st.errors.append((now, exc))
            return
        st.vms[vm.vm_id] = vm
        self._log(now, EventKind.VM_START_REQUESTED, vm.vm_id,
                  f"candidates={len(ctx.candidates)} vms={len(ctx.vms)}")

    # -- loop ---------------------------------------------------------------

    def run(self, until: Optional[Callable[["Orchestrator"], bool]] = None,
            max_ticks: Optional[int] = None, poll_interval: Optional[float] = None,
            stop: Optional[threading.Event] = None) -> int:
        """Tick until `until(self)` holds, `max_ticks` is reached or `stop` is set.

        In REAL mode the loop waits `poll_interval` seconds (default: the
        clock step) between ticks.  Returns the number of ticks run.
        """
        stop = stop or threading.Event()
        if poll_interval is None:
            poll_interval = self.state.clock.step
        n = 0
        while not stop.is_set():
            self.tick()
            n += 1
            if until is not None and until(self):
                break
            if max_ticks is not None and n >= max_ticks:
                break
            if self.state.clock.mode is ClockMode.REAL and stop.wait(poll_interval):
                break
        self.state.decision_log.flush()
        return n


class WorkdirLock:
    """Exclusive, non-blocking lock on ``<workdir>/lock``: one orchestrator per workdir."""

    def __init__(self, workdir):
        self.path = os.path.join(workdir, "lock")
        self._fh = None

    def acquire(self):
        fh = open(self.path, "a+")
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            fh.close()
            raise LockError(f"{self.path} is held by another orchestrator") from None
        fh.seek(0)
        fh.truncate()
        fh.write(f"{os.getpid()}\n")
        fh.flush()
        self._fh = fh
        return self

    def release(self):
        if self._fh is not None:
            fcntl.flock(self._fh, fcntl.LOCK_UN)
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self.acquire()

    def __exit__(self, *exc):
        self.release()


@contextlib.contextmanager
def shutdown_on_signals(stop: threading.Event, signals=(signal.SIGINT, signal.SIGTERM)):
    """Set `stop` on SIGINT/SIGTERM for the duration of the block (main thread only)."""
    if threading.current_thread() is not threading.main_thread():
        yield stop
        return
    previous = {s: signal.signal(s, lambda *_: stop.set()) for s in signals}
    try:
        yield stop
    finally:
        for s, handler in previous.items():
            signal.signal(s, handler)
