from burstd.domain import EventKind
from burstd.policy import PolicyConfig
from burstd.provider import ProviderConfig
from burstd.schedinfo import AccountingRecord
from burstd.simulator import SimulationConfig


def sim_config(trace, **kw):
    policy = kw.pop("policy", {})
    provider = kw.pop("provider", {})
    kw.setdefault("time_interval", 30)
    return SimulationConfig(trace=trace, policy_cfg=PolicyConfig(**policy),
                            provider_cfg=ProviderConfig(**provider), **kw)


def jobs(n, submit=0, duration=600, queue="cloud.q", prefix="j"):
    return [AccountingRecord(f"{prefix}{i:05d}", submit, duration, queue) for i in range(n)]


def kinds(events, kind):
    return [e for e in events if e.kind is kind]


def starts(events):
    return kinds(events, EventKind.VM_START_REQUESTED)
