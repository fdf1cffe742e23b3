"""Shared pytest plumbing: acceptance criteria report lines.

Acceptance tests register one line per criterion; the hook prints them
in the terminal summary so pass/fail status is visible regardless of
output capture.
"""

ACCEPTANCE_LINES: list = []


def record_criterion(number: int, name: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    line = f"[criterion {number:2d}] {status} {name}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append((number, line))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
