import os
import stat
import textwrap
from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("burstd", deadline=None, max_examples=60)
settings.load_profile("burstd")

DATA = Path(__file__).parent / "data"


@pytest.fixture
def replay5():
    return DATA / "replay5"


@pytest.fixture
def make_script(tmp_path):
    """Write an executable shell script and return its path."""

    def make(name, body):
        path = tmp_path / name
        path.write_text("#!/bin/sh\n" + textwrap.dedent(body))
        path.chmod(path.stat().st_mode | stat.S_IXUSR)
        return str(path)

    return make


# -- acceptance summary: one PASS/FAIL line per criterion ---------------------

_criteria = {}


def pytest_collection_modifyitems(items):
    for item in items:
        name = getattr(item, "originalname", item.name)
        if item.module.__name__.endswith("test_acceptance") and name.startswith("test_c"):
            doc = (item.function.__doc__ or name).strip().splitlines()[0]
            _criteria[item.nodeid] = [doc, "NOT RUN"]


def pytest_runtest_logreport(report):
    entry = _criteria.get(report.nodeid)
    if entry is None:
        return
    if report.failed:
        entry[1] = "FAIL"
    elif report.when == "call" and report.passed and entry[1] != "FAIL":
        entry[1] = "PASS"
    elif report.skipped:
        entry[1] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for doc, status in _criteria.values():
        code, _, text = doc.partition(" ")
        terminalreporter.write_line(f"{status:4} {code} {text}")
