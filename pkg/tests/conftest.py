import numpy as np
import pytest

from nanofiber_qsim.atomic_structure import load_system
from nanofiber_qsim.fiber_modes import FiberSpec, solve_he11


@pytest.fixture(scope="session")
def fiber():
    return FiberSpec(radius_a=225.0, n1=1.4469, n2=1.0)


@pytest.fixture(scope="session")
def d1():
    return load_system("D1")


@pytest.fixture(scope="session")
def d2():
    return load_system("D2")


@pytest.fixture(scope="session")
def sol_d1(fiber, d1):
    return solve_he11(fiber, d1.wavelength_nm)


@pytest.fixture(scope="session")
def sol_d2(fiber, d2):
    return solve_he11(fiber, d2.wavelength_nm)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def emit(number, ok, detail):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
