"""Running the external adapter commands."""

import logging
import os
import shlex
import subprocess

from burstd.errors import AdapterError

log = logging.getLogger(__name__)

TIMEOUT_ENV = "BURSTD_POLL_TIMEOUT_S"
DEFAULT_TIMEOUT_S = 30.0


def poll_timeout() -> float:
    raw = os.environ.get(TIMEOUT_ENV)
    if not raw:
        return DEFAULT_TIMEOUT_S
    try:
        value = float(raw)
    except ValueError:
        raise AdapterError(-1, f"{TIMEOUT_ENV}={raw!r} is not a number") from None
    if value <= 0:
        raise AdapterError(-1, f"{TIMEOUT_ENV} must be positive")
    return value


def run_command(command: str, *extra_args: str, timeout: float | None = None) -> str:
    """Run `command` (shell-quoted string) with `extra_args` appended; return stdout."""
    argv = shlex.split(command) + list(extra_args)
    if not argv:
        raise AdapterError(-1, "empty command")
    if timeout is None:
        timeout = poll_timeout()
    log.debug("running %s", argv)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        raise AdapterError(-1, f"timed out after {timeout:g} s") from None
    except OSError as exc:
        raise AdapterError(-1, str(exc)) from None
    if proc.returncode != 0:
        raise AdapterError(proc.returncode, proc.stderr.strip()[:200])
    return proc.stdout
