import pytest

from hybridloc.model import GridSpec


@pytest.fixture
def unit_grid():
    """4 x 4 grid of 1 m cells at the origin."""
    return GridSpec((0.0, 0.0), 1.0, 4, 4)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
