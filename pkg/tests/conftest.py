"""Shared pytest configuration.

The acceptance tests mark themselves with ``@pytest.mark.criterion(n, label)``;
this plugin collects their outcomes and prints one PASS/FAIL line per
criterion at the end of the run.
"""

from __future__ import annotations

import pytest

_CRITERION_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(number, label): a primary acceptance criterion; reported "
        "as a single PASS/FAIL summary line",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, label = marker.args
    verdict = "PASS" if report.passed else ("FAIL" if report.failed else "SKIP")
    _CRITERION_RESULTS[number] = (label, verdict)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERION_RESULTS):
        label, verdict = _CRITERION_RESULTS[number]
        terminalreporter.write_line(f"[PRIMARY criterion {number}] {verdict} — {label}")
