"""Exception types shared across burstd modules."""


class BurstError(Exception):
    """Base class for all burstd errors."""


class IllegalTransition(BurstError):
    def __init__(self, from_state, to_state, subject=""):
        self.from_state = from_state
        self.to_state = to_state
        self.subject = subject
        who = f" ({subject})" if subject else ""
        super().__init__(f"illegal transition {from_state} -> {to_state}{who}")


class ParseError(BurstError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class OrderError(ParseError):
    def __init__(self, line_no, reason="submit_time decreases"):
        super().__init__(line_no, reason)


class AdapterError(BurstError):
    def __init__(self, exit_code, stderr_excerpt=""):
        self.exit_code = exit_code
        self.stderr_excerpt = stderr_excerpt
        super().__init__(f"external command failed (exit {exit_code}): {stderr_excerpt}")


class CapReached(BurstError):
    def __init__(self, max_vms):
        self.max_vms = max_vms
        super().__init__(f"VM cap of {max_vms} reached")


class StaggerViolation(BurstError):
    def __init__(self, wait_s):
        self.wait_s = wait_s
        super().__init__(f"launch stagger not elapsed, retry in {wait_s} s")


class BusyNode(BurstError):
    def __init__(self, vm_id, running_jobs):
        self.vm_id = vm_id
        self.running_jobs = running_jobs
        super().__init__(f"{vm_id} still runs {running_jobs} job(s)")


class NonTermination(BurstError):
    pass


class ConfigError(BurstError):
    pass


class LockError(BurstError):
    pass
