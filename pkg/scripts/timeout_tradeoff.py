#!/usr/bin/env python3
"""Idle-timeout sweep on a wave-shaped workload: VM starts against billed cost."""

import argparse

from burstd.policy import PolicyConfig
from burstd.provider import ProviderConfig, format_amount
from burstd.schedinfo import AccountingRecord
from burstd.simulator import SimulationConfig, simulate


def waves(n_waves, per_wave, spacing, duration):
    return [AccountingRecord(f"w{w:03d}-{i:03d}", w * spacing, duration, "cloud.q")
            for w in range(n_waves) for i in range(per_wave)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--waves", type=int, default=8)
    ap.add_argument("--per-wave", type=int, default=6)
    ap.add_argument("--spacing", type=int, default=1500)
    ap.add_argument("--duration", type=int, default=600)
    ap.add_argument("--max-vms", type=int, default=6)
    ap.add_argument("--timeouts", type=int, nargs="+", default=[0, 300, 600, 1800, 3600])
    args = ap.parse_args()

    trace = waves(args.waves, args.per_wave, args.spacing, args.duration)
    print("idle_timeout_s,vm_starts,cost,makespan_s")
    for timeout in args.timeouts:
        res = simulate(SimulationConfig(trace=trace, max_vms=args.max_vms, cluster_size=0,
                                        policy_cfg=PolicyConfig(enabled=True, idle_timeout=timeout),
                                        provider_cfg=ProviderConfig(launch_stagger=0)))
        print(f"{timeout},{res.vm_starts},{format_amount(res.total_cost)},{res.makespan}")


if __name__ == "__main__":
    main()
