import numpy as np
import pytest

from rispose.scenario import paper_scenario

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str) -> None:
    """Register one acceptance line; printed in the terminal summary."""
    line = f"{criterion:<34} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small():
    """Reduced reference geometry: 8 x 8 RIS, 4 x 4 Rx grid (L = 16), B = 4 GHz."""
    return paper_scenario(bandwidth=4e9, rx_count=4, ris_count=8)


@pytest.fixture(scope="session")
def paper():
    """Full reference scenario, 10 cm RIS, B = 1 GHz."""
    return paper_scenario(side=0.10, bandwidth=1e9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
