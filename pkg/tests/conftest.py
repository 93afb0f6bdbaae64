import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _criteria[number] = {"title": title, "nodeid": item.nodeid, "outcome": None}


def pytest_runtest_logreport(report):
    for entry in _criteria.values():
        if entry["nodeid"] != report.nodeid:
            continue
        if report.when == "call" or report.outcome != "passed":
            if entry["outcome"] in (None, "passed"):
                entry["outcome"] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = {"passed": "PASS", None: "NOT RUN"}.get(entry["outcome"], "FAIL")
        terminalreporter.write_line(f"criterion {number}: {status}  {entry['title']}")
