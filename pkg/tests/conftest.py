import pytest

_LINES = []


@pytest.fixture
def report():
    """Record a summary line; all lines are repeated at the end of the run."""
    def add(line):
        _LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
