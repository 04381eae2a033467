import itertools

import pytest
from hypothesis import given, strategies as st

from burstd.domain import (
    Clock, ClockMode, DecisionEvent, DecisionLog, EventKind, Job, JobState, VmInstance, VmState,
    VM_TRANSITIONS, check_log, finish_job, format_log, live_vm_profile, parse_log, start_job,
    transition_vm, vm_idle_seconds, with_running_jobs,
)
from burstd.errors import IllegalTransition, ParseError

LEGAL = {
    (VmState.REQUESTED, VmState.STARTING), (VmState.STARTING, VmState.UP),
    (VmState.UP, VmState.DRAINING), (VmState.DRAINING, VmState.STOPPED),
    (VmState.REQUESTED, VmState.FAILED), (VmState.STARTING, VmState.FAILED),
}


def vm_in(state, **kw):
    return VmInstance("vm-1", requested_at=100, state=state, **kw)


@pytest.mark.parametrize("src,dst", list(itertools.product(VmState, VmState)))
def test_transition_table_is_exactly_the_lifecycle(src, dst):
    vm = vm_in(src)
    if (src, dst) in LEGAL:
        out = transition_vm(vm, dst, 200)
        assert out.state is dst
        # idle clock set iff UP with no jobs
        assert (out.idle_since is not None) == (out.state is VmState.UP and out.running_jobs == 0)
    else:
        with pytest.raises(IllegalTransition):
            transition_vm(vm, dst, 200)


def test_table_matches_legal_set():
    assert {(a, b) for a, nxt in VM_TRANSITIONS.items() for b in nxt} == LEGAL


def test_requested_to_starting_ok():
    assert transition_vm(vm_in(VmState.REQUESTED), VmState.STARTING, 100).state is VmState.STARTING


def test_backward_edge_rejected():
    with pytest.raises(IllegalTransition) as exc:
        transition_vm(vm_in(VmState.UP, up_at=150, idle_since=150), VmState.REQUESTED, 200)
    assert exc.value.from_state == "UP" and exc.value.to_state == "REQUESTED"


def test_entering_up_sets_up_at_and_idle_since():
    vm = transition_vm(vm_in(VmState.STARTING), VmState.UP, 160)
    assert vm.up_at == 160 and vm.idle_since == 160


def test_timestamps_cannot_go_back():
    with pytest.raises(ValueError):
        transition_vm(vm_in(VmState.REQUESTED), VmState.STARTING, 99)


def test_busy_vm_cannot_drain():
    vm = vm_in(VmState.UP, up_at=150, running_jobs=1)
    with pytest.raises(IllegalTransition):
        transition_vm(vm, VmState.DRAINING, 200)


def test_running_jobs_updates_idle_clock():
    vm = transition_vm(vm_in(VmState.STARTING), VmState.UP, 160)
    busy = with_running_jobs(vm, 2, 190)
    assert busy.idle_since is None
    idle = with_running_jobs(busy, 0, 250)
    assert idle.idle_since == 250


def test_jobs_only_on_up_vms():
    with pytest.raises(IllegalTransition):
        with_running_jobs(vm_in(VmState.STARTING), 1, 200)


@pytest.mark.parametrize("idle_since,now,expected", [(1000, 1601, 601), (None, 1601, 0), (1601, 1601, 0)])
def test_vm_idle_seconds(idle_since, now, expected):
    vm = vm_in(VmState.UP, up_at=900, idle_since=idle_since, running_jobs=0 if idle_since else 1)
    assert vm_idle_seconds(vm, now) == expected


def test_job_lifecycle_forward_only():
    job = Job("j1", 10, "q", duration=5)
    running = start_job(job, "local", 20)
    assert running.state is JobState.RUNNING and running.assigned_node == "local"
    done = finish_job(running, 25)
    assert done.state is JobState.FINISHED and done.assigned_node is None
    with pytest.raises(IllegalTransition):
        start_job(done, "local", 30)
    with pytest.raises(IllegalTransition):
        finish_job(job, 30)
    with pytest.raises(ValueError):
        start_job(job, "local", 5)


def test_virtual_clock_steps_exactly():
    clock = Clock(1000, ClockMode.VIRTUAL, 30)
    assert [clock.advance().now, clock.advance().advance().now] == [1030, 1060]
    with pytest.raises(ValueError):
        Clock(0, ClockMode.VIRTUAL, 0)


def test_real_clock_never_goes_back():
    clock = Clock(2**40, ClockMode.REAL, 5)  # far future: wall clock is "behind"
    assert clock.advance().now == 2**40


def test_decision_line_format():
    log = DecisionLog()
    log.append(1000, EventKind.VM_UP, "vm-0001", "boot_s=120")
    log.append(1000, EventKind.VM_ATTACHED, "vm-0001", "nodes=3")
    assert format_log(log) == "1000 1 VM_UP vm-0001 boot_s=120\n1000 2 VM_ATTACHED vm-0001 nodes=3\n"
    assert parse_log(format_log(log)) == list(log)


def test_log_rejects_time_travel():
    log = DecisionLog()
    log.append(100, EventKind.VM_UP, "a", "x")
    with pytest.raises(ValueError):
        log.append(99, EventKind.VM_UP, "a", "x")


def test_bad_log_line():
    with pytest.raises(ParseError):
        DecisionEvent.parse("1 2 VM_UP", 3)
    with pytest.raises(ParseError):
        DecisionEvent.parse("1 2 NOPE a b", 3)


def test_check_log_flags_illegal_order():
    good = parse_log("1 1 VM_START_REQUESTED v d\n2 2 VM_UP v d\n2 3 VM_ATTACHED v d\n"
                     "3 4 VM_DRAIN v d\n3 5 VM_STOP v d\n")
    assert check_log(good) == []
    assert live_vm_profile(good) == [1, 1, 1, 1, 0]
    bad = parse_log("1 1 VM_START_REQUESTED v d\n2 2 VM_STOP v d\n")
    assert check_log(bad)


@given(st.lists(st.tuples(st.integers(0, 5), st.sampled_from(list(EventKind)),
                          st.text("abc", min_size=1, max_size=3), st.text("xyz =", max_size=8)),
                max_size=20))
def test_log_round_trip(entries):
    log = DecisionLog()
    t = 0
    for dt, kind, subject, detail in entries:
        t += dt
        log.append(t, kind, subject, detail)
    assert parse_log(format_log(log)) == list(log)
