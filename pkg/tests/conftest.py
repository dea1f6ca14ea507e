"""Shared pytest hooks: collect acceptance-gate lines and echo them in the
terminal summary so the per-criterion verdicts survive output capture."""

ACCEPTANCE_LINES = []


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance gate")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
