import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the test still asserts on the outcome itself."""

    def record(criterion: int, passed: bool, detail: str) -> bool:
        _LINES.append((criterion, f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES, key=lambda t: t[0]):
        terminalreporter.write_line(line)
