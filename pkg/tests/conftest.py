"""Shared fixtures and the per-criterion acceptance summary."""

from __future__ import annotations

from dataclasses import replace

import pytest

from v2xcalib.config import builtin_mcs_table, make_scenario
from v2xcalib.engine import saturate_interval

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, {"title": title, "ok": True, "ran": False})
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["ok"] and e["ran"] else ("FAIL" if not e["ok"] else "SKIP")
        terminalreporter.write_line(f"criterion {n:>2} {status}  {e['title']}")


@pytest.fixture(scope="session")
def mcs_table():
    return builtin_mcs_table()


@pytest.fixture(scope="session")
def anechoic_hp():
    return make_scenario("anechoic", "HP", "BPSK-1/2")


@pytest.fixture(scope="session")
def tuned_intervals(anechoic_hp, mcs_table):
    """Saturating send interval per MCS in the anechoic HP setup (10 s runs)."""
    return {m.name: saturate_interval(replace(anechoic_hp, mcs=m)) for m in mcs_table}
