import pytest

from sdlab.forms import assemble
from sdlab.mesh import Mode, build_mesh, build_topology
from sdlab.weights import RadialProfile, WeightSpec

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def power1():
    return WeightSpec.two_quadrant(RadialProfile.power(1.0))


@pytest.fixture(scope="session")
def small_mesh(power1):
    return build_mesh(12, 16, 1e-2, 2.0, weight=power1)


@pytest.fixture(scope="session")
def small_forms(small_mesh, power1):
    return {mode: assemble(small_mesh, build_topology(small_mesh, power1, mode), power1) for mode in Mode}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""
    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"criterion {label:<4} {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record
