import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonalhvac import mesh as M
from zonalhvac.fem import Assembler, Coefficients
from zonalhvac.flow import FlowBCs
from zonalhvac.thermal import (DissipativityError, StabilityWarning, ThermalState, ThermalStepper,
                               write_trajectory_csv, zone_abs_error, zone_average)


@pytest.fixture(scope="module")
def stepper(canonical_asm, canonical_flow):
    return ThermalStepper(canonical_asm, canonical_flow, dt=10.0, theta=1.0)


def test_rest_state_is_fixed(stepper):
    s = stepper.step(ThermalState(np.zeros(stepper.n), 0.0))
    assert np.all(s.eta_T == 0.0) and s.t == 10.0
    traj = stepper.simulate(np.zeros(30), np.zeros(30))
    assert traj.states.shape == (31, stepper.n)
    assert np.all(traj.states == 0.0)
    np.testing.assert_allclose(traj.times, np.arange(31) * 10.0)


def test_heat_equation_eigenmode_decay():
    kappa, dt = 1e-2, 0.5
    asm = Assembler(M.generate(M.unit_square(), 1 / 32), Coefficients(kappa_air=kappa))
    T0 = asm.dofs.interpolate_scalar(lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]))
    traj = ThermalStepper(asm, None, dt, 1.0).simulate(np.zeros(10), initial=T0)
    ratios = traj.states[1:].max(axis=1) / traj.states[:-1].max(axis=1)
    expected = np.exp(-kappa * 2 * np.pi ** 2 * dt)
    np.testing.assert_allclose(ratios[3:], expected, rtol=0.05)


def test_heater_raises_zone_average_monotonically(canonical_asm, canonical_solver, stepper):
    slow = ThermalStepper(canonical_asm, canonical_solver.solve_navier_stokes(FlowBCs((0.1, 0.1))), 10.0)
    # heater 1 alone at the slowest fans; both heaters at mid-box fans
    for s, v2, zones in ((slow, 0.0, (0, 4)), (stepper, 2.0, (0, 4, 13))):
        traj = s.simulate(np.full(10, 2.0), np.full(10, v2))
        for z in zones:
            zone = canonical_asm.mesh.zone_elements(z)
            avg = [zone_average(canonical_asm, x, zone) for x in traj.states]
            assert np.all(np.diff(avg) > 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_superposition(stepper, seed, a, b):
    r = np.random.default_rng(seed)
    v1, w1, v2, w2 = (r.uniform(0, 5, 30) for _ in range(4))
    T0 = r.standard_normal(stepper.n)
    x = stepper.simulate(v1, w1, initial=T0).states
    y = stepper.simulate(v2, w2).states
    z = stepper.simulate(a * v1 + b * v2, a * w1 + b * w2, initial=a * T0).states
    assert np.abs(z - (a * x + b * y)).max() <= 1e-10 * max(1.0, np.abs(z).max())


def test_doubling_heaters_doubles_response(stepper):
    v = np.linspace(0, 5, 30)
    one, two = stepper.simulate(v, v[::-1]).states, stepper.simulate(2 * v, 2 * v[::-1]).states
    assert np.abs(two - 2 * one).max() <= 1e-10 * np.abs(two).max()


def test_boundary_pinned(canonical_asm, stepper):
    traj = stepper.simulate(np.full(30, 5.0), np.full(30, 5.0))
    assert np.all(traj.states[:, canonical_asm.mesh.boundary_vertices()] == 0.0)


def test_implicit_scheme_is_dissipative(stepper):
    traj = stepper.simulate(np.full(30, 5.0), np.full(30, 3.0), check_dissipative=True)
    assert traj.stability_warning is None
    rng = np.random.default_rng(7)
    for _ in range(5):
        x = rng.standard_normal(stepper.interior.size)
        assert stepper.energy(stepper.propagate(x)) <= stepper.energy(x)


def test_symmetric_part_is_positive_semidefinite(stepper):
    I = stepper.interior
    S = stepper.S.tocsr()[I][:, I].toarray()
    assert np.linalg.eigvalsh(0.5 * (S + S.T)).min() >= -1e-12


def test_dissipativity_check_fires_when_violated(canonical_asm, canonical_flow):
    s = ThermalStepper(canonical_asm, canonical_flow, dt=10.0, theta=1.0)
    s.rhs_matrix = 100.0 * s.rhs_matrix  # amplifying transition
    T0 = np.random.default_rng(0).standard_normal(s.n)
    with pytest.raises(DissipativityError):
        s.simulate(np.full(3, 1.0), initial=T0, check_dissipative=True)


def test_explicit_scheme_warns(canonical_asm, canonical_flow):
    with pytest.warns(StabilityWarning):
        s = ThermalStepper(canonical_asm, canonical_flow, dt=10.0, theta=0.0)
    assert s.spectral_radius() > 1.0
    traj = s.simulate(np.full(30, 1.0))
    assert traj.stability_warning is not None


def test_explicit_and_implicit_converge_together():
    asm = Assembler(M.generate(M.unit_square(), 1 / 8), Coefficients(kappa_air=1e-3))
    T0 = asm.dofs.interpolate_scalar(lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]))
    gaps, finals = [], []
    for k in range(5):
        dt = 1.25 / 2 ** k
        n = int(round(50 / dt))
        with warnings.catch_warnings():
            warnings.simplefilter("error", StabilityWarning)
            ends = [ThermalStepper(asm, None, dt, th).simulate(np.zeros(n), initial=T0).final.eta_T
                    for th in (0.0, 1.0)]
        gaps.append(np.abs(ends[0] - ends[1]).max())
        finals.append(ends[1])
    ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
    np.testing.assert_allclose(ratios, 2.0, rtol=0.1)
    implicit_steps = [np.abs(a - b).max() for a, b in zip(finals[:-1], finals[1:])]
    assert np.all(np.diff(implicit_steps) < 0)


def test_invalid_parameters(canonical_asm):
    with pytest.raises(ValueError):
        ThermalStepper(canonical_asm, None, dt=10.0, theta=1.5)
    with pytest.raises(ValueError):
        ThermalStepper(canonical_asm, None, dt=0.0)
    s = ThermalStepper(canonical_asm, None, dt=10.0)
    with pytest.raises(ValueError):
        s.simulate(np.zeros(3), np.zeros(4))


def test_zone_average_cases(canonical_asm):
    sq = Assembler(M.generate(M.unit_square(), 0.25))
    all_sq = sq.mesh.zone_elements("whole")
    assert zone_average(sq, np.full(sq.dofs.n_T, 2.5), all_sq) == pytest.approx(2.5)
    assert zone_average(sq, sq.mesh.vertices[:, 0], all_sq) == pytest.approx(0.5)
    assert zone_abs_error(sq, np.full(sq.dofs.n_T, 0.25), all_sq, 1.0) == pytest.approx(0.75)
    assert canonical_asm.area(canonical_asm.mesh.zone_elements(4)) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        zone_average(sq, np.zeros(sq.dofs.n_T), np.array([], dtype=int))


def test_trajectory_csv(tmp_path, canonical_asm, stepper):
    traj = stepper.simulate(np.full(3, 1.0))
    p = write_trajectory_csv(tmp_path / "t.csv", canonical_asm, traj, canonical_asm.mesh.zone_elements(0), nodes=True)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("t,zone_avg,T0,")
    assert len(lines) == 5
