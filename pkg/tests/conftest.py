import numpy as np
import pytest

from zonalhvac import mesh as meshmod
from zonalhvac.fem import Assembler
from zonalhvac.flow import FlowBCs, FlowSolver

MID_FAN = 0.55  # centre of the [0.1, 1.0] m/s fan box


@pytest.fixture(scope="session")
def canonical_mesh():
    return meshmod.generate(meshmod.canonical_apartment(), 0.5)


@pytest.fixture(scope="session")
def canonical_asm(canonical_mesh):
    return Assembler(canonical_mesh)


@pytest.fixture(scope="session")
def canonical_solver(canonical_asm):
    return FlowSolver(canonical_asm)


@pytest.fixture(scope="session")
def canonical_flow(canonical_solver):
    return canonical_solver.solve_navier_stokes(FlowBCs((MID_FAN, MID_FAN)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
