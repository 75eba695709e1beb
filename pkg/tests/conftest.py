"""Shared pytest plumbing for the test suite.

Collects the one-line acceptance-criterion verdicts emitted by
test_acceptance._report and replays them in a dedicated section of the
terminal summary, so the [PASS]/[FAIL] lines are visible even for passing
tests (whose stderr pytest captures and discards).
"""

_criterion_lines: list[str] = []


def record_criterion_line(line: str) -> None:
    _criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _criterion_lines:
        terminalreporter.line(line)
