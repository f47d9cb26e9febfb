from pathlib import Path

import pytest

from systemp.spec import from_json

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

_criteria: dict[int, dict] = {}


@pytest.fixture
def skeleton_text() -> str:
    return (FIXTURES / "bikefork_skeleton.sysml").read_text(encoding="utf-8")


@pytest.fixture
def bikefork_spec():
    return from_json((FIXTURES / "bikefork_spec.json").read_text(encoding="utf-8"))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "passed": True, "ran": False})
    if report.when == "call" or report.failed:
        entry["ran"] = True
        entry["passed"] = entry["passed"] and not report.failed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ran"] and entry["passed"] else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {entry['title']}")
