import numpy as np
import pytest

from hiergrid.config import load_operating_point
from hiergrid.grid import load_case


@pytest.fixture(scope="session")
def case6():
    return load_case("case6")


@pytest.fixture(scope="session")
def rts96():
    return load_case("rts96")


@pytest.fixture(scope="session")
def healthy6(case6):
    return load_operating_point(case6, "case6").state


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, repeated in the terminal summary so it
# survives output capture
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
