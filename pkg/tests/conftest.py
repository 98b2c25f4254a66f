from __future__ import annotations

import re

_RESULTS: dict[str, str] = {}
_NAME = re.compile(r"test_acceptance\.py::test_criterion_(\w+?)_")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _RESULTS[m.group(1)] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS):
        terminalreporter.write_line(f"criterion {key.lstrip('0')}: {_RESULTS[key]}")
