"""Command-line entry point: ``burstd {simulate,generate,run,report}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
3 another orchestrator holds the working directory.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import threading
from typing import Optional, Sequence

from burstd import config as cfgmod
from burstd.domain import Clock, DecisionLog, EventKind, check_log, live_vm_profile, parse_log
from burstd.errors import AdapterError, BurstError, ConfigError, LockError, NonTermination, ParseError
from burstd.orchestrator import NodeHooks, Orchestrator, WorkdirLock, shutdown_on_signals
from burstd.policy import Policy, PolicyConfig
from burstd.provider import ExternalCommandProvider, format_amount
from burstd.schedinfo import (
    ExternalCommandSource, SyntheticWorkloadSpec, format_accounting, generate_workload, read_accounting,
)
from burstd.simulator import SimulationConfig, TIMESERIES_HEADER, simulate, write_outputs

log = logging.getLogger("burstd")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_LOCK = 0, 1, 2, 3


def _start_time(text: str) -> int:
    try:
        return cfgmod.parse_start_time(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _nonneg(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"{text} is negative")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"{text} is not positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="burstd", description="Cloudbursting orchestrator and simulator.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="replay an accounting trace in virtual time")
    p.add_argument("--time-interval", type=_positive, default=30, metavar="S")
    p.add_argument("--start-time", type=_start_time, default=None,
                   help="epoch seconds or 'YYYY-MM-DD HH:MM:SS TZ' (default: first submit time)")
    p.add_argument("--max-vms", type=_nonneg, default=None)
    p.add_argument("--cluster-size", type=_nonneg, default=0)
    p.add_argument("--csv-file", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--policy-config", default=None, help="file with policy.* and provider.* keys")

    g = sub.add_parser("generate", help="write a synthetic accounting CSV")
    d = SyntheticWorkloadSpec()
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--n-jobs", type=int, default=d.n_jobs)
    g.add_argument("--burst-count", type=int, default=d.burst_count)
    g.add_argument("--burst-spacing", type=int, default=d.burst_spacing)
    g.add_argument("--burst-jitter", type=int, default=d.burst_jitter)
    g.add_argument("--duration-min", type=int, default=d.duration_min)
    g.add_argument("--duration-max", type=int, default=d.duration_max)
    g.add_argument("--candidate-fraction", type=float, default=d.candidate_fraction)
    g.add_argument("--candidate-queue", default=d.candidate_queue)
    g.add_argument("--other-queue", default=d.other_queue)
    g.add_argument("--start-time", type=_start_time, default=d.start_time)
    g.add_argument("--out", default=None, help="output path (default: stdout)")

    r = sub.add_parser("run", help="run the live orchestrator daemon")
    r.add_argument("--config", required=True)

    rep = sub.add_parser("report", help="summarise the files of a run directory")
    rep.add_argument("--out-dir", default=".")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def cmd_simulate(args) -> int:
    values = cfgmod.load_config(args.policy_config) if args.policy_config else {}
    policy_cfg = cfgmod.policy_config(values)
    provider_cfg = cfgmod.provider_config(values)
    max_vms = args.max_vms if args.max_vms is not None else provider_cfg.max_vms
    try:
        trace = read_accounting(args.csv_file)
    except OSError as exc:
        print(f"error: cannot read {args.csv_file}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    except ParseError as exc:
        print(f"error: {args.csv_file}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sim = SimulationConfig(trace=trace, time_interval=args.time_interval, start_time=args.start_time,
                           max_vms=max_vms, cluster_size=args.cluster_size,
                           provider_cfg=provider_cfg, policy_cfg=policy_cfg, seed=args.seed)
    try:
        result = simulate(sim)
    except NonTermination as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_outputs(result, args.out_dir)
    print(f"makespan_s={result.makespan} cost={format_amount(result.total_cost)} vm_starts={result.vm_starts}")
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        spec = SyntheticWorkloadSpec(
            seed=args.seed, n_jobs=args.n_jobs, burst_count=args.burst_count,
            burst_spacing=args.burst_spacing, burst_jitter=args.burst_jitter,
            duration_min=args.duration_min, duration_max=args.duration_max,
            candidate_fraction=args.candidate_fraction, start_time=args.start_time,
            candidate_queue=args.candidate_queue, other_queue=args.other_queue)
    except ValueError as exc:
        print(f"burstd generate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = format_accounting(generate_workload(spec))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _require(values, key):
    if not values.get(key):
        raise ConfigError(f"missing required key {key!r}")
    return values[key]


def build_live_orchestrator(values: dict[str, str], decision_log: DecisionLog) -> Orchestrator:
    poll_interval = cfgmod.get_float(values, "orchestrator.poll_interval_s", 30.0)
    provider = ExternalCommandProvider(
        cfgmod.provider_config(values),
        start_cmd=_require(values, "provider.start_cmd"),
        stop_cmd=_require(values, "provider.stop_cmd"),
        status_cmd=_require(values, "provider.status_cmd"))
    source = ExternalCommandSource(_require(values, "scheduler.poll_cmd"))
    hooks = NodeHooks(values.get("scheduler.attach_cmd"), values.get("scheduler.detach_cmd"))
    return Orchestrator(source, provider, Policy(cfgmod.policy_config(values)),
                        clock=Clock.real(step=max(1, math.ceil(poll_interval))),
                        local_nodes=cfgmod.get_int(values, "orchestrator.local_nodes", 0),
                        decision_log=decision_log, hooks=hooks)


def cmd_run(args) -> int:
    values = cfgmod.load_config(args.config)
    workdir = values.get("orchestrator.workdir") or os.path.dirname(os.path.abspath(args.config))
    poll_interval = cfgmod.get_float(values, "orchestrator.poll_interval_s", 30.0)
    max_ticks = cfgmod.get_int(values, "orchestrator.max_ticks", None)
    os.makedirs(workdir, exist_ok=True)
    lock = WorkdirLock(workdir).acquire()
    try:
        ts_path = os.path.join(workdir, "timeseries.csv")
        new_ts = not os.path.exists(ts_path) or os.path.getsize(ts_path) == 0
        with open(os.path.join(workdir, "decisions.log"), "a", encoding="utf-8") as log_fh, \
                open(ts_path, "a", encoding="utf-8", newline="") as ts_fh, \
                open(os.path.join(workdir, "billing.csv"), "a", encoding="utf-8", newline="") as bill_fh:
            orch = build_live_orchestrator(values, DecisionLog(sink=log_fh))
            ts = csv.writer(ts_fh, lineterminator="\n")
            if new_ts:
                ts.writerow(TIMESERIES_HEADER)
            bills = csv.writer(bill_fh, lineterminator="\n")
            billed = 0

            def record(o: Orchestrator, now: int):
                nonlocal billed
                up = o.state.up_vms()
                ts.writerow([now, len(o.state.pending), len(o.state.running),
                             o.local_nodes + len(up), sum(1 for vm in up if vm.running_jobs == 0)])
                ts_fh.flush()
                for b in o.state.billing[billed:]:
                    bills.writerow([b.vm_id, b.first_billed_at, b.last_billed_at, b.increments,
                                    format_amount(b.cost)])
                billed = len(o.state.billing)
                bill_fh.flush()

            orch.observers.append(record)
            stop = threading.Event()
            with shutdown_on_signals(stop):
                ticks = orch.run(max_ticks=max_ticks, poll_interval=poll_interval, stop=stop)
            log.info("orchestrator stopped after %d tick(s), %d adapter error(s)",
                     ticks, len(orch.state.errors))
    finally:
        lock.release()
    return EXIT_OK


def cmd_report(args) -> int:
    path = os.path.join(args.out_dir, "decisions.log")
    try:
        with open(path, encoding="utf-8") as fh:
            events = parse_log(fh.read())
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    except ParseError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    problems = check_log(events)
    profile = live_vm_profile(events)
    cost = 0.0
    bill_path = os.path.join(args.out_dir, "billing.csv")
    if os.path.exists(bill_path):
        with open(bill_path, encoding="utf-8", newline="") as fh:
            cost = sum(float(row["cost"]) for row in csv.DictReader(fh))
    fields = {
        "events": len(events),
        "vm_starts": sum(e.kind is EventKind.VM_START_REQUESTED for e in events),
        "vm_failures": sum(e.kind is EventKind.VM_FAILED for e in events),
        "peak_vms": max(profile, default=0),
        "jobs_finished": sum(e.kind is EventKind.JOB_FINISHED for e in events),
        "cost": format_amount(cost),
        "lifecycle": "ok" if not problems else f"{len(problems)}_violations",
    }
    print(" ".join(f"{k}={v}" for k, v in fields.items()))
    for p in problems:
        print(f"violation: {p}", file=sys.stderr)
    return EXIT_OK if not problems else EXIT_RUNTIME


COMMANDS = {"simulate": cmd_simulate, "generate": cmd_generate, "run": cmd_run, "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.subcommand](args)
    except ConfigError as exc:
        print(f"burstd {args.subcommand}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LockError as exc:
        print(f"burstd {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_LOCK
    except (AdapterError, BurstError) as exc:
        print(f"burstd {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
