"""Flat ``section.key = value`` configuration files and start-time parsing."""

from __future__ import annotations

import dataclasses
import re
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from typing import Optional

from burstd.errors import ConfigError
from burstd.policy import PolicyConfig
from burstd.provider import ProviderConfig

KNOWN_KEYS = {
    "policy.enabled", "policy.candidate_queue", "policy.scaleup_ratio", "policy.idle_timeout_s",
    "provider.start_cmd", "provider.stop_cmd", "provider.status_cmd",
    "provider.boot_latency_s", "provider.launch_stagger_s", "provider.billing_increment_s",
    "provider.price_per_increment", "provider.failure_rate", "provider.max_vms",
    "scheduler.poll_cmd", "scheduler.attach_cmd", "scheduler.detach_cmd",
    "orchestrator.workdir", "orchestrator.poll_interval_s", "orchestrator.local_nodes",
    "orchestrator.max_ticks",
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{line_no}: expected 'section.key = value'")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def _bool(values, key, default):
    if key not in values:
        return default
    v = values[key].lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ConfigError(f"{key}: expected a boolean, got {values[key]!r}")


def _num(values, key, default, kind=int):
    if key not in values:
        return default
    try:
        return kind(values[key])
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {values[key]!r}") from None


def policy_config(values: dict[str, str]) -> PolicyConfig:
    d = PolicyConfig()
    try:
        return PolicyConfig(
            candidate_queue=values.get("policy.candidate_queue", d.candidate_queue),
            scaleup_ratio=_num(values, "policy.scaleup_ratio", d.scaleup_ratio, Fraction),
            idle_timeout=_num(values, "policy.idle_timeout_s", d.idle_timeout),
            enabled=_bool(values, "policy.enabled", d.enabled),
        )
    except ValueError as exc:
        raise ConfigError(f"policy: {exc}") from None


def provider_config(values: dict[str, str], **overrides) -> ProviderConfig:
    d = ProviderConfig()
    try:
        cfg = ProviderConfig(
            boot_latency=_num(values, "provider.boot_latency_s", d.boot_latency),
            launch_stagger=_num(values, "provider.launch_stagger_s", d.launch_stagger),
            billing_increment=_num(values, "provider.billing_increment_s", d.billing_increment),
            price_per_increment=_num(values, "provider.price_per_increment", d.price_per_increment, float),
            failure_rate=_num(values, "provider.failure_rate", d.failure_rate, float),
            max_vms=_num(values, "provider.max_vms", d.max_vms),
        )
        return dataclasses.replace(cfg, **overrides)
    except ValueError as exc:
        raise ConfigError(f"provider: {exc}") from None


def get_int(values, key, default=None) -> Optional[int]:
    return _num(values, key, default)


def get_float(values, key, default=None) -> Optional[float]:
    return _num(values, key, default, float)


_ZONES = {"UTC": 0, "GMT": 0, "Z": 0, "CET": 60, "CEST": 120}
_OFFSET = re.compile(r"^([+-])(\d{2}):?(\d{2})$")


def parse_start_time(text: str) -> int:
    """Epoch seconds, or ``YYYY-MM-DD HH:MM:SS TZ`` with TZ one of UTC/CET/CEST or +HHMM."""
    text = text.strip()
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    parts = text.split()
    if len(parts) != 3:
        raise ValueError(f"unrecognised start time {text!r}")
    stamp, zone = " ".join(parts[:2]), parts[2]
    try:
        local = datetime.strptime(stamp, "%Y-%m-%d %H:%M:%S")
    except ValueError:
        raise ValueError(f"unrecognised start time {text!r}") from None
    if zone.upper() in _ZONES:
        minutes = _ZONES[zone.upper()]
    else:
        m = _OFFSET.match(zone)
        if not m:
            raise ValueError(f"unsupported time zone {zone!r}; use UTC, CET, CEST, +HHMM or epoch seconds")
        minutes = int(m.group(2)) * 60 + int(m.group(3))
        if m.group(1) == "-":
            minutes = -minutes
    aware = local.replace(tzinfo=timezone(timedelta(minutes=minutes)))
    return int(aware.timestamp())
