"""Node providers: where cloud VMs come from.

`NodeProvider` enforces the VM cap and the launch stagger and does the
billing arithmetic; subclasses decide how a VM actually boots.
`SimulatedProvider` is deterministic and used by the simulator;
`ExternalCommandProvider` drives real infrastructure through three
site-supplied commands.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass
from typing import Optional

from burstd.domain import LIVE_VM_STATES, VmInstance, VmState, transition_vm
from burstd.errors import AdapterError, CapReached, IllegalTransition, ParseError, StaggerViolation
from burstd.shell import run_command

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProviderConfig:
    boot_latency: int = 120
    launch_stagger: int = 60
    billing_increment: int = 3600
    price_per_increment: float = 1.0
    failure_rate: float = 0.0
    max_vms: int = 0

    def __post_init__(self):
        if self.boot_latency < 0:
            raise ValueError("boot_latency must be nonnegative")
        if self.launch_stagger < 0:
            raise ValueError("launch_stagger must be nonnegative")
        if self.billing_increment <= 0:
            raise ValueError("billing_increment must be positive")
        if self.price_per_increment < 0:
            raise ValueError("price_per_increment must be nonnegative")
        if not 0.0 <= self.failure_rate <= 1.0:
            raise ValueError("failure_rate must lie in [0, 1]")
        if self.max_vms < 0:
            raise ValueError("max_vms must be nonnegative")


@dataclass(frozen=True)
class BillingSummary:
    vm_id: str
    increments: int
    cost: float
    first_billed_at: int
    last_billed_at: int


def billing_increments(lifetime: int, increment: int) -> int:
    if lifetime < 0:
        raise ValueError("negative lifetime")
    return -(-lifetime // increment)


def format_amount(x: float) -> str:
    """Stable text for money amounts: integers without a trailing '.0'."""
    x = float(x)
    if x.is_integer():
        return str(int(x))
    return repr(x)


class NodeProvider:
    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg
        self._live: set[str] = set()
        self._last_request: Optional[int] = None
        self._counter = 0

    @property
    def live_count(self) -> int:
        return len(self._live)

    def _admit(self, now: int):
        if len(self._live) >= self.cfg.max_vms:
            raise CapReached(self.cfg.max_vms)
        if self._last_request is not None:
            elapsed = now - self._last_request
            if elapsed < self.cfg.launch_stagger:
                raise StaggerViolation(self.cfg.launch_stagger - elapsed)

    def _new_id(self) -> str:
        self._counter += 1
        return f"vm-{self._counter:04d}"

    def request_vm(self, now: int) -> VmInstance:
        self._admit(now)
        vm = self._launch(self._new_id(), now)
        self._last_request = now
        self._live.add(vm.vm_id)
        return vm

    def stop_vm(self, vm: VmInstance, now: int) -> tuple[VmInstance, BillingSummary]:
        if vm.state is not VmState.DRAINING:
            raise IllegalTransition(vm.state.value, VmState.STOPPED.value, vm.vm_id)
        self._terminate(vm)
        stopped = transition_vm(vm, VmState.STOPPED, now)
        increments = billing_increments(now - vm.requested_at, self.cfg.billing_increment)
        stopped = dataclasses.replace(stopped, billed_increments=increments)
        self._live.discard(vm.vm_id)
        bill = BillingSummary(vm.vm_id, increments, increments * self.cfg.price_per_increment,
                              vm.requested_at, now)
        return stopped, bill

    def poll_provider(self, now: int) -> list[VmInstance]:
        changed = self._poll(now)
        for vm in changed:
            if vm.state not in LIVE_VM_STATES:
                self._live.discard(vm.vm_id)
        return changed

    def _launch(self, vm_id: str, now: int) -> VmInstance:
        raise NotImplementedError

    def _terminate(self, vm: VmInstance):
        raise NotImplementedError

    def _poll(self, now: int) -> list[VmInstance]:
        raise NotImplementedError


def _unit_hash(seed: int, vm_id: str) -> float:
    digest = hashlib.blake2b(f"{seed}:{vm_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


class SimulatedProvider(NodeProvider):
    """Cloud model with fixed boot latency and seeded boot failures.

    A request is picked up (STARTING) on the first poll and completes, UP or
    FAILED, on the first poll at or after ``requested_at + boot_latency``.
    """

    def __init__(self, cfg: ProviderConfig, seed: int = 0):
        super().__init__(cfg)
        self.seed = seed
        self._booting: dict[str, VmInstance] = {}

    def _launch(self, vm_id, now):
        vm = VmInstance(vm_id, requested_at=now, provider_handle=f"sim-{vm_id}")
        self._booting[vm_id] = vm
        return vm

    def _terminate(self, vm):
        pass

    def will_fail(self, vm_id: str) -> bool:
        return _unit_hash(self.seed, vm_id) < self.cfg.failure_rate

    def _poll(self, now):
        changed = []
        for vm_id, vm in list(self._booting.items()):
            new = vm
            if new.state is VmState.REQUESTED:
                new = transition_vm(new, VmState.STARTING, now)
            if now >= vm.requested_at + self.cfg.boot_latency:
                target = VmState.FAILED if self.will_fail(vm_id) else VmState.UP
                new = transition_vm(new, target, now)
                del self._booting[vm_id]
            else:
                self._booting[vm_id] = new
            if new is not vm:
                changed.append(new)
        return changed


def parse_status_output(text: str) -> dict[str, VmState]:
    states = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split("|")
        if len(fields) != 2 or fields[1] not in ("STARTING", "UP", "FAILED"):
            raise ParseError(line_no, f"expected '<handle>|<STARTING|UP|FAILED>', got {line!r}")
        states[fields[0]] = VmState(fields[1])
    return states


class ExternalCommandProvider(NodeProvider):
    """Start/stop/status via external commands.

    `start_cmd` gets the new vm_id appended and must print a provider handle;
    `stop_cmd` gets the handle appended; `status_cmd` prints one
    ``<handle>|<STARTING|UP|FAILED>`` line per VM it knows.
    """

    def __init__(self, cfg: ProviderConfig, start_cmd: str, stop_cmd: str, status_cmd: str,
                 timeout: Optional[float] = None):
        super().__init__(cfg)
        self.start_cmd = start_cmd
        self.stop_cmd = stop_cmd
        self.status_cmd = status_cmd
        self.timeout = timeout
        self._booting: dict[str, VmInstance] = {}

    def _launch(self, vm_id, now):
        handle = run_command(self.start_cmd, vm_id, timeout=self.timeout).strip()
        if not handle or "|" in handle or "\n" in handle:
            raise AdapterError(0, f"start command printed an unusable handle {handle!r}")
        vm = VmInstance(vm_id, requested_at=now, provider_handle=handle)
        self._booting[vm_id] = vm
        return vm

    def _terminate(self, vm):
        run_command(self.stop_cmd, vm.provider_handle, timeout=self.timeout)

    def _poll(self, now):
        if not self._booting:
            return []
        states = parse_status_output(run_command(self.status_cmd, timeout=self.timeout))
        changed = []
        for vm_id, vm in list(self._booting.items()):
            reported = states.get(vm.provider_handle)
            if reported is None:
                continue
            new = vm
            if reported is VmState.FAILED:
                new = transition_vm(new, VmState.FAILED, now)
            else:
                if new.state is VmState.REQUESTED:
                    new = transition_vm(new, VmState.STARTING, now)
                if reported is VmState.UP:
                    new = transition_vm(new, VmState.UP, now)
            if new.state in (VmState.UP, VmState.FAILED):
                del self._booting[vm_id]
            else:
                self._booting[vm_id] = new
            if new is not vm:
                changed.append(new)
        return changed
