"""Shared test plumbing: acceptance-criterion reporting.

Acceptance tests print one pass/fail line per criterion; the lines are also
collected and echoed in a terminal summary section so they are visible in a
plain ``pytest -v`` run regardless of output capturing.
"""

import pytest

_criterion_lines = []


@pytest.fixture(scope="session")
def criterion_report():
    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        print(line)
        _criterion_lines.append(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
