"""Acceptance criteria, one test per criterion (``test_cNN_*``).

Run ``pytest tests/test_acceptance.py`` and the terminal summary ends with
one PASS/FAIL line per criterion (see ``conftest.py``).
"""

import filecmp
import os
import random
import shutil
import subprocess
import sys
import time
from pathlib import Path

import pytest

from burstd.cli import main
from burstd.domain import Job, VmInstance, VmState, check_log, live_vm_profile
from burstd.policy import PolicyConfig, PolicyContext, can_vm_be_stopped, is_new_vm_needed
from burstd.provider import billing_increments
from burstd.schedinfo import (
    AccountingRecord, SyntheticWorkloadSpec, format_accounting, generate_workload,
)
from burstd.simulator import SimulationConfig, read_timeseries, simulate

from helpers import jobs, sim_config, starts

ROOT = Path(__file__).resolve().parent.parent
OUTPUT_FILES = ("decisions.log", "timeseries.csv", "utilization.csv", "billing.csv")


def test_c01_policy_table_exact():
    """C01 scale-up rule c > 2v over [0,50]^2, (4,2) no, (5,2) yes, < 1 s"""
    cfg = PolicyConfig(enabled=True)
    pool = [Job(f"j{i}", 0, "cloud.q", 60, is_candidate=True) for i in range(50)]
    fleet = [VmInstance(f"vm-{i + 1:04d}", 0, VmState.UP, up_at=0, idle_since=0) for i in range(50)]
    t0 = time.perf_counter()
    table = {(c, v): is_new_vm_needed(PolicyContext(0, pool[:c], fleet[:v]), cfg)
             for c in range(51) for v in range(51)}
    elapsed = time.perf_counter() - t0
    assert all(table[c, v] == (c > 2 * v) for c, v in table)
    assert table[4, 2] is False and table[5, 2] is True
    assert elapsed < 1.0


def test_c02_idle_timeout_boundary():
    """C02 idle timeout 600 s: idle 600 keeps the VM, idle 601 stops it"""
    cfg = PolicyConfig(idle_timeout=600)
    vm = VmInstance("vm-0001", 0, VmState.UP, up_at=0, idle_since=1000)
    assert can_vm_be_stopped(vm, 1600, cfg) is False
    assert can_vm_be_stopped(vm, 1601, cfg) is True


def test_c03_default_deny():
    """C03 100 seeded 1000-job workloads with policy off start no VM, < 10 s"""
    t0 = time.perf_counter()
    total = 0
    for seed in range(100):
        trace = generate_workload(SyntheticWorkloadSpec(seed=seed, n_jobs=1000, burst_count=4,
                                                        burst_spacing=3600, burst_jitter=600,
                                                        duration_min=60, duration_max=1800))
        res = simulate(sim_config(trace, cluster_size=100, max_vms=64, seed=seed))
        total += res.vm_starts
    elapsed = time.perf_counter() - t0
    print(f"total VM_START_REQUESTED={total} in {elapsed:.1f}s")
    assert total == 0
    assert elapsed < 10.0


def test_c04_replay_oracle(replay5, tmp_path, capsys):
    """C04 bundled 5-job trace matches hand-derived decisions.log and timeseries.csv"""
    assert main(["simulate", "--csv-file", str(replay5 / "accounting.csv"), "--start-time", "1000",
                 "--time-interval", "30", "--max-vms", "2", "--cluster-size", "1",
                 "--policy-config", str(replay5 / "policy.conf"), "--out-dir", str(tmp_path)]) == 0
    for name in ("decisions.log", "timeseries.csv"):
        assert (tmp_path / name).read_bytes() == (replay5 / name).read_bytes(), name


def _random_config(rng, workdir):
    trace = workdir / "trace.csv"
    spec = SyntheticWorkloadSpec(seed=rng.randrange(10**6), n_jobs=rng.randrange(50, 400),
                                 burst_count=rng.randrange(1, 5), burst_spacing=rng.randrange(600, 7200),
                                 burst_jitter=rng.randrange(0, 600), duration_min=0,
                                 duration_max=rng.randrange(60, 3600),
                                 candidate_fraction=rng.random())
    trace.write_text(format_accounting(generate_workload(spec)))
    conf = workdir / "policy.conf"
    conf.write_text(f"policy.enabled = true\n"
                    f"policy.idle_timeout_s = {rng.choice([0, 300, 600])}\n"
                    f"provider.boot_latency_s = {rng.randrange(0, 300)}\n"
                    f"provider.failure_rate = {rng.choice([0.0, 0.1, 0.5])}\n")
    return ["simulate", "--csv-file", str(trace), "--policy-config", str(conf),
            "--time-interval", str(rng.choice([10, 30, 60])), "--max-vms", str(rng.randrange(0, 40)),
            "--cluster-size", str(rng.randrange(1, 20)), "--seed", str(rng.randrange(1000))]


def test_c05_determinism(tmp_path, capsys):
    """C05 20 random configs, two simulate runs each, byte-identical outputs, < 30 s"""
    rng = random.Random(5)
    t0 = time.perf_counter()
    for i in range(20):
        work = tmp_path / f"cfg{i}"
        work.mkdir()
        argv = _random_config(rng, work)
        for run in ("a", "b"):
            assert main(argv + ["--out-dir", str(work / run)]) == 0
        for name in OUTPUT_FILES:
            assert filecmp.cmp(work / "a" / name, work / "b" / name, shallow=False), (i, name)
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    assert elapsed < 30.0


def test_c06_cap_enforcement():
    """C06 10000 simultaneous candidates with --max-vms 512: peak live VMs is exactly 512"""
    res = simulate(sim_config(jobs(10_000, duration=3600), policy={"enabled": True},
                              max_vms=512, cluster_size=0))
    profile = live_vm_profile(res.decisions)
    print(f"peak live VMs={max(profile)} starts={res.vm_starts} makespan={res.makespan}")
    assert max(profile) == 512
    assert max(p.nodes_available for p in res.timeseries) <= 512
    assert check_log(res.decisions) == []


@pytest.fixture(scope="module")
def bursty_runs():
    """Criterion 7 trace: 5 bursts of 200 candidate jobs, 600 s each, an hour apart."""
    trace = [AccountingRecord(f"b{b}-{i:03d}", b * 3600, 600, "cloud.q")
             for b in range(5) for i in range(200)]
    t0 = time.perf_counter()
    runs = {m: simulate(sim_config(trace, policy={"enabled": True}, max_vms=m, cluster_size=10))
            for m in (0, 8, 64)}
    return runs, time.perf_counter() - t0


def test_c07_makespan_reduction(bursty_runs):
    """C07 bursty 1000x600 s trace, cluster 10: makespan nonincreasing over max_vms 0/8/64, m(64) < 0.5 m(0)"""
    runs, elapsed = bursty_runs
    m = {k: r.makespan for k, r in runs.items()}
    print(f"makespan {m} in {elapsed:.1f}s")
    assert m[0] >= m[8] >= m[64]
    assert m[64] < 0.5 * m[0]
    assert elapsed < 60.0


def test_c08_launch_stagger(bursty_runs):
    """C08 consecutive VM start requests at least 60 s apart (criterion 7, max_vms=64)"""
    runs, _ = bursty_runs
    times = [e.at for e in starts(runs[64].decisions)]
    assert len(times) > 1
    assert min(b - a for a, b in zip(times, times[1:])) >= 60


def _wave_run(tmp_path, timeout):
    trace = tmp_path / "waves.csv"
    trace.write_text(format_accounting(
        AccountingRecord(f"w{w}-{i}", w * 1500, 600, "cloud.q") for w in range(8) for i in range(6)))
    conf = tmp_path / f"policy-{timeout}.conf"
    conf.write_text(f"policy.enabled = true\npolicy.idle_timeout_s = {timeout}\n")
    out = tmp_path / f"timeout-{timeout}"
    assert main(["simulate", "--csv-file", str(trace), "--policy-config", str(conf), "--max-vms", "6",
                 "--cluster-size", "0", "--out-dir", str(out)]) == 0
    log = (out / "decisions.log").read_text().splitlines()
    n_starts = sum(" VM_START_REQUESTED " in line for line in log)
    rows = (out / "billing.csv").read_text().splitlines()[1:]
    return n_starts, sum(float(r.split(",")[-1]) for r in rows)


def test_c09_billing(tmp_path, capsys):
    """C09 hourly increments {0,1,1,2,2}; idle timeout 600 needs no more starts than 0, cost delta reported"""
    assert [billing_increments(s, 3600) for s in (0, 1, 3600, 3601, 7200)] == [0, 1, 1, 2, 2]
    starts0, cost0 = _wave_run(tmp_path, 0)
    starts600, cost600 = _wave_run(tmp_path, 600)
    capsys.readouterr()
    with capsys.disabled():
        print(f"\n  wave trace: idle_timeout=0 starts={starts0} cost={cost0:g}; "
              f"idle_timeout=600 starts={starts600} cost={cost600:g}; cost delta={cost600 - cost0:+g}")
    assert starts600 <= starts0


def test_c10_cli_parity(tmp_path):
    """C10 reference simulate invocation on the bundled accounting.csv yields the four plotted series"""
    shutil.copy(ROOT / "data" / "accounting.csv", tmp_path / "accounting.csv")
    cmd = [sys.executable, str(ROOT / "scripts" / "simul.py"), "--time-interval", "30",
           "--start-time", "2008-12-16 02:13:50 CET", "--max-vms", "512", "--cluster-size", "100",
           "--csv-file", "accounting.csv"]
    out = subprocess.run(cmd, cwd=tmp_path, capture_output=True, text=True, timeout=300)
    assert out.returncode == 0, out.stderr
    assert out.stdout.startswith("makespan_s=")
    header = (tmp_path / "timeseries.csv").read_text().splitlines()[0]
    assert header == "at,pending,running,nodes_available,vms_idle"
    series = read_timeseries(tmp_path / "timeseries.csv")
    assert series[0].at == 1229390030
    assert all(p.nodes_available >= 100 and p.running <= p.nodes_available for p in series)
    assert max(p.pending for p in series) > 0
    assert sum(p.running for p in series) > 0
    assert set(os.listdir(tmp_path)) == {"accounting.csv", *OUTPUT_FILES}
