"""Cloudbursting policy hooks.

Three decisions are delegated to a policy: whether a pending job may run in
the cloud, whether another VM should be started, and whether an idle VM may
be stopped.  `Policy` is the extension point; subclass it and override any
hook.  Out of the box it is configured from a `PolicyConfig` and refuses to
start anything unless ``enabled`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from burstd.domain import Job, JobState, VmInstance, VmState, vm_idle_seconds


@dataclass(frozen=True)
class PolicyConfig:
    candidate_queue: Optional[str] = "cloud.q"
    scaleup_ratio: Fraction = Fraction(2)
    idle_timeout: int = 600
    enabled: bool = False

    def __post_init__(self):
        ratio = Fraction(str(self.scaleup_ratio)) if isinstance(self.scaleup_ratio, float) else Fraction(self.scaleup_ratio)
        object.__setattr__(self, "scaleup_ratio", ratio)
        if ratio <= 0:
            raise ValueError("scaleup_ratio must be positive")
        if self.idle_timeout < 0:
            raise ValueError("idle_timeout must be nonnegative")


@dataclass(frozen=True)
class PolicyContext:
    now: int
    candidates: Sequence[Job] = field(default_factory=tuple)
    vms: Sequence[VmInstance] = field(default_factory=tuple)
    pending_total: int = 0
    local_nodes_free: int = 0


def is_cloud_candidate(job: Job, cfg: PolicyConfig) -> bool:
    if not cfg.enabled:
        return False
    return job.state is JobState.PENDING and job.queue == cfg.candidate_queue


def is_new_vm_needed(ctx: PolicyContext, cfg: PolicyConfig) -> bool:
    if not cfg.enabled:
        return False
    return len(ctx.candidates) > cfg.scaleup_ratio * len(ctx.vms)


def can_vm_be_stopped(vm: VmInstance, now: int, cfg: PolicyConfig) -> bool:
    # not gated by `enabled`: stopping must always be possible
    if vm.state is not VmState.UP:
        return False
    return vm_idle_seconds(vm, now) > cfg.idle_timeout


class Policy:
    """Configurable policy; override methods for custom behaviour.

    Hooks are called from the orchestrator tick only and must not keep
    state between calls.
    """

    def __init__(self, cfg: Optional[PolicyConfig] = None):
        self.cfg = cfg if cfg is not None else PolicyConfig()

    def is_cloud_candidate(self, job: Job) -> bool:
        return is_cloud_candidate(job, self.cfg)

    def is_new_vm_needed(self, ctx: PolicyContext) -> bool:
        return is_new_vm_needed(ctx, self.cfg)

    def can_vm_be_stopped(self, vm: VmInstance, now: int) -> bool:
        return can_vm_be_stopped(vm, now, self.cfg)

    def __repr__(self):
        return f"{type(self).__name__}({self.cfg!r})"
