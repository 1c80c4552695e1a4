"""Shared pytest plumbing: a criteria report printed after the run."""

CRITERIA_LINES = []


def record_criterion(line):
    """Queue a line for the end-of-run criteria summary."""
    CRITERIA_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERIA_LINES:
        terminalreporter.write_line(line)
