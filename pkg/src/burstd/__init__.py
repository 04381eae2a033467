"""burstd: policy-driven cloudbursting for batch clusters, with trace replay."""

from burstd.domain import (
    Clock, ClockMode, DecisionEvent, DecisionLog, EventKind, Job, JobState, VmInstance, VmState,
    transition_vm, vm_idle_seconds,
)
from burstd.orchestrator import Orchestrator, OrchestratorState
from burstd.policy import Policy, PolicyConfig, PolicyContext
from burstd.provider import ExternalCommandProvider, NodeProvider, ProviderConfig, SimulatedProvider
from burstd.schedinfo import (
    AccountingRecord, ExternalCommandSource, ReplaySource, SyntheticWorkloadSpec, generate_workload,
    parse_accounting, read_accounting,
)
from burstd.simulator import SimulationConfig, SimulationResult, simulate

__version__ = "0.1.0"
