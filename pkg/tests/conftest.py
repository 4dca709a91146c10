"""Shared fixtures; collects acceptance verdicts for the terminal summary."""

import pytest

_VERDICTS = {}


@pytest.fixture
def record_criterion():
    """Record ``(number, passed, detail)`` and print a one-line verdict."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
