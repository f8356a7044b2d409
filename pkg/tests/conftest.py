import numpy as np
import pytest

from lozenge_lab.exact import enumerate_states, generator
from lozenge_lab.height import forced_boundary
from lozenge_lab.lattice import DomainSpec, build_domain


def hexagon(a, b, c):
    return build_domain(DomainSpec.hexagon(a, b, c))


@pytest.fixture(scope="session")
def spaces():
    """Enumerated state spaces and generators of small hexagons."""
    out = {}
    for abc in [(1, 1, 1), (1, 1, 2), (2, 2, 2), (3, 3, 3)]:
        S = enumerate_states(forced_boundary(hexagon(*abc)))
        out[abc] = (S, generator(S))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = []


@pytest.fixture
def acceptance():
    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
