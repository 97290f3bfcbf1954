import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_criteria: dict[str, str] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _criteria[name] = "FAIL" if call.excinfo is not None else "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _criteria.items():
        terminalreporter.write_line(f"{status}: {name}")
