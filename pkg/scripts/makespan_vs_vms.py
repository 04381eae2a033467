#!/usr/bin/env python3
"""Sweep the VM cap on one trace and print makespan, VM starts and cost.

Example:
    python scripts/makespan_vs_vms.py --csv-file data/accounting.csv \\
        --cluster-size 100 --policy-config data/policy.conf --caps 0 8 40 128 512
"""

import argparse

from burstd import config
from burstd.provider import format_amount
from burstd.schedinfo import read_accounting
from burstd.simulator import SimulationConfig, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--csv-file", required=True)
    ap.add_argument("--cluster-size", type=int, default=100)
    ap.add_argument("--time-interval", type=int, default=30)
    ap.add_argument("--policy-config", required=True)
    ap.add_argument("--caps", type=int, nargs="+", default=[0, 8, 64, 512])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    values = config.load_config(args.policy_config)
    trace = read_accounting(args.csv_file)
    print("max_vms,makespan_s,makespan_h,vm_starts,cost")
    for cap in args.caps:
        res = simulate(SimulationConfig(trace=trace, time_interval=args.time_interval, max_vms=cap,
                                        cluster_size=args.cluster_size, seed=args.seed,
                                        policy_cfg=config.policy_config(values),
                                        provider_cfg=config.provider_config(values)))
        print(f"{cap},{res.makespan},{res.makespan / 3600:.1f},{res.vm_starts},{format_amount(res.total_cost)}")


if __name__ == "__main__":
    main()
