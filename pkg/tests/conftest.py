"""Shared pytest hooks.

The acceptance gate records one verdict line per criterion; printing them
from the terminal summary keeps them visible in the run output regardless
of capture mode (writes to stderr inside a passing test are swallowed by
fd-level capture).
"""

REPORT_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if REPORT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in REPORT_LINES:
            terminalreporter.line(line)
