import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonalhvac import mesh as M
from zonalhvac.control import (Bounds, ControlProblem, ControlVector, optimize, projected_gradient,
                               write_iteration_csv)
from zonalhvac.fem import Assembler, Coefficients
from zonalhvac.thermal import zone_abs_error

K = 30


@pytest.fixture(scope="module")
def whole_problem(canonical_asm):
    return ControlProblem(canonical_asm, canonical_asm.mesh.zone_elements("whole"))


def _random_controls(rng, bounds=Bounds()):
    return ControlVector(rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95),
                         rng.uniform(0.2, 4.8, K), rng.uniform(0.2, 4.8, K))


def test_cost_at_rest(canonical_asm):
    p = ControlProblem(canonical_asm, canonical_asm.mesh.zone_elements(3), target=0.0)
    cost = p.evaluate_cost(ControlVector.constant(0.1, 0.1, 0.0, 0.0, K))
    assert cost.tracking == 0.0 and cost.heater_penalty == 0.0
    assert cost.fan_penalty == pytest.approx(2e-5)
    assert (p.lam1, p.lam2) == (0.002, 0.001)


def test_heater_penalty_closed_form(whole_problem):
    one = whole_problem.evaluate_cost(ControlVector.constant(0.1, 0.1, 1.0, 0.0, K))
    both = whole_problem.evaluate_cost(ControlVector.constant(0.1, 0.1, 1.0, 1.0, K))
    assert one.heater_penalty == pytest.approx(0.6)
    assert both.heater_penalty == pytest.approx(1.2)
    assert both.total == pytest.approx(both.tracking + both.heater_penalty + both.fan_penalty)


def test_tracking_matches_quadrature(canonical_asm, whole_problem):
    c = ControlVector.constant(0.3, 0.7, 2.0, 1.0, K)
    flow, traj = whole_problem.simulate(c)
    zone = canonical_asm.mesh.zone_elements("whole")
    per_step = np.array([canonical_asm.integrate_p1(s, zone, fn=lambda t: (t - 1.0) ** 2) for s in traj.states])
    w = np.full(K + 1, 10.0)
    w[[0, -1]] = 5.0
    assert whole_problem.cost_of(c, traj).tracking == pytest.approx(w @ per_step, rel=1e-12)


@pytest.mark.parametrize("seed", range(2))
def test_adjoint_matches_finite_differences(whole_problem, seed):
    rng = np.random.default_rng(seed)
    c = _random_controls(rng)
    gv, gv2 = whole_problem.adjoint_gradient_heaters(c)
    x = c.to_array()
    h = 1e-4
    fd = np.zeros(2 * K)
    for i in range(2 * K):
        e = np.zeros_like(x)
        e[2 + i] = h
        fd[i] = (whole_problem.evaluate_cost(ControlVector.from_array(x + e)).total
                 - whole_problem.evaluate_cost(ControlVector.from_array(x - e)).total) / (2 * h)
    adj = np.concatenate([gv, gv2])
    assert np.linalg.norm(adj - fd) <= 1e-5 * np.linalg.norm(fd)


def test_penalty_dominated_heater_gradient(canonical_asm):
    p = ControlProblem(canonical_asm, canonical_asm.mesh.zone_elements(5), lam1=1e6)
    c = ControlVector.constant(0.3, 0.3, 1.5, 0.5, K)
    gv, gv2 = p.adjoint_gradient_heaters(c)
    np.testing.assert_allclose(gv, 2e6 * 1.5 * 10.0, rtol=1e-3)
    np.testing.assert_allclose(gv2, 2e6 * 0.5 * 10.0, rtol=1e-3)


def test_heating_gradients_negative_and_earliest_strongest(whole_problem):
    c = ControlVector.constant(0.1, 0.1, 0.0, 0.0, K)
    gv, gv2 = whole_problem.adjoint_gradient_heaters(c)
    assert np.all(gv < 0) and np.all(gv2 < 0)
    # zero controls: the gradient is purely the tracking part
    assert abs(gv[-1]) <= abs(gv[0]) and abs(gv2[-1]) <= abs(gv2[0])


def test_fan_gradient_penalty_limit():
    fp = M.canonical_apartment()
    asm = Assembler(M.generate(fp, 0.5), Coefficients(kappa_air=1e3, kappa_wall=1e3))
    p = ControlProblem(asm, asm.mesh.zone_elements("whole"))
    h = p.fd_step
    # one-sided differences at the box edges carry the exact O(h) term of a quadratic
    for u, expected in ((0.1, 0.001 * (2 * 0.1 + h)), (0.4, 0.001 * 0.8), (1.0, 0.001 * (2.0 - h))):
        g = p.fd_gradient_fans(ControlVector.constant(u, u, 0.0, 0.0, K))
        np.testing.assert_allclose(g, expected, rtol=1e-6)


@pytest.fixture(scope="module")
def mirror_problem():
    # reflection y -> 4 - y swaps the outlets and the heaters and fixes the inlet and zone
    fp = M.FloorPlan(4.0, 4.0, outlets=(M.Segment("bottom", 1.0, 1.5), M.Segment("top", 1.0, 1.5)),
                     inlet=M.Segment("left", 1.75, 2.25),
                     heaters=(M.Rect(1.0, 0.5, 2.0, 1.5), M.Rect(1.0, 2.5, 2.0, 3.5)),
                     zones=(M.Rect(0.5, 1.0, 3.5, 3.0),))
    asm = Assembler(M.generate(fp, 0.25, pattern="crossed"))
    return ControlProblem(asm, asm.mesh.zone_elements(0))


def test_fan_gradient_mirror_symmetry(mirror_problem):
    g = mirror_problem.fd_gradient_fans(ControlVector.constant(0.4, 0.4, 1.0, 1.0, K))
    assert abs(g[0] - g[1]) <= 1e-3 * max(abs(g[0]), 1.0)
    gv, gv2 = mirror_problem.adjoint_gradient_heaters(ControlVector.constant(0.4, 0.4, 1.0, 1.0, K))
    np.testing.assert_allclose(gv, gv2, rtol=1e-6)


def test_fan_difference_is_second_order(whole_problem):
    c = ControlVector.constant(0.5, 0.5, 2.0, 2.0, K)
    ref = whole_problem.fd_gradient_fans(c, h=0.0025)
    e1 = np.abs(whole_problem.fd_gradient_fans(c, h=0.04) - ref)
    e2 = np.abs(whole_problem.fd_gradient_fans(c, h=0.02) - ref)
    assert np.all((e1 / e2 > 2.5) & (e1 / e2 < 6.0))


def test_fan_difference_one_sided_at_box_edges(whole_problem):
    c = ControlVector.constant(0.1, 1.0, 1.0, 1.0, K)
    g = whole_problem.fd_gradient_fans(c)
    assert np.all(np.isfinite(g))
    h = whole_problem.fd_step
    base = whole_problem.evaluate_cost(c).total
    up = whole_problem.evaluate_cost(ControlVector(0.1 + h, 1.0, c.v, c.v2)).total
    down = whole_problem.evaluate_cost(ControlVector(0.1, 1.0 - h, c.v, c.v2)).total
    assert g[0] == pytest.approx((up - base) / h)
    assert g[1] == pytest.approx((base - down) / h)


@settings(max_examples=30)
@given(st.lists(st.floats(-10, 10), min_size=2 + 2 * 4, max_size=2 + 2 * 4))
def test_projection_is_feasible_and_idempotent(vals):
    b = Bounds()
    c = b.project(ControlVector.from_array(np.array(vals)))
    assert b.contains(c)
    np.testing.assert_array_equal(b.project(c).to_array(), c.to_array())
    lo, hi = b.arrays(4)
    pg = projected_gradient(c.to_array(), np.array(vals), lo, hi)
    assert np.all(c.to_array() + pg >= lo - 1e-15) and np.all(c.to_array() + pg <= hi + 1e-15)


def test_control_vector_round_trip(rng):
    c = _random_controls(rng)
    d = ControlVector.from_array(c.to_array())
    assert (d.u_o, d.u_o2) == (c.u_o, c.u_o2)
    np.testing.assert_array_equal(d.v, c.v)
    np.testing.assert_array_equal(d.v2, c.v2)
    with pytest.raises(ValueError):
        ControlVector(0.1, 0.1, np.zeros(3), np.zeros(4))


@pytest.fixture(scope="module")
def zone2_result(canonical_asm):
    p = ControlProblem(canonical_asm, canonical_asm.mesh.zone_elements(2))
    rows = []
    res = optimize(p, callback=rows.append)
    return p, res, rows


def test_optimizer_descends_and_stays_feasible(zone2_result):
    p, res, rows = zone2_result
    costs = [r["cost"] for r in rows]
    assert np.all(np.diff(costs) <= 1e-12 * np.abs(costs[:-1]))
    assert p.bounds.contains(res.controls)
    assert res.cost.total < costs[0]
    if res.converged:
        assert res.gradient_norm <= 1e-6 * (1 + res.cost.total) or "decrease" in res.message


def test_zone_error_after_optimization(canonical_asm, zone2_result):
    p, res, _ = zone2_result
    err = zone_abs_error(canonical_asm, res.trajectory.final.eta_T, p.zone, p.target)
    assert err < 0.6


def test_optimizer_is_deterministic(canonical_asm):
    runs = []
    for _ in range(2):
        p = ControlProblem(canonical_asm, canonical_asm.mesh.zone_elements(13))
        runs.append(optimize(p, max_iters=15))
    np.testing.assert_array_equal(runs[0].controls.to_array(), runs[1].controls.to_array())
    assert runs[0].cost == runs[1].cost


def test_huge_heater_penalty_switches_heaters_off(canonical_asm):
    p = ControlProblem(canonical_asm, canonical_asm.mesh.zone_elements(4), lam1=1e9)
    res = optimize(p, start=ControlVector.constant(0.1, 0.1, 2.0, 2.0, K), max_iters=30, tol=1e-12)
    assert np.abs(res.controls.v).max() < 1e-3 and np.abs(res.controls.v2).max() < 1e-3


def test_fans_alone_cannot_heat(canonical_asm):
    p = ControlProblem(canonical_asm, canonical_asm.mesh.zone_elements(4), bounds=Bounds(heater=(0.0, 0.0)))
    start = ControlVector.constant(0.1, 0.1, 0.0, 0.0, K)
    res = optimize(p, start=start, max_iters=20)
    before = p.evaluate_cost(start).tracking
    assert res.cost.tracking >= 0.99 * before


def test_far_heater_off_in_upper_room(canonical_asm):
    p = ControlProblem(canonical_asm, canonical_asm.mesh.zone_elements(16))
    c = optimize(p).controls
    assert c.v.sum() <= 0.25 * c.v2.sum()


@pytest.mark.xfail(strict=True, reason="upper-room heater sits upstream of the lower room and wins "
                                       "under this cost; see the decisions ledger")
def test_far_heater_off_in_lower_room(canonical_asm):
    p = ControlProblem(canonical_asm, canonical_asm.mesh.zone_elements(0))
    c = optimize(p).controls
    assert c.v2.sum() <= 0.25 * c.v.sum()


def test_iteration_csv(tmp_path, zone2_result):
    _, res, _ = zone2_result
    path = write_iteration_csv(tmp_path / "it.csv", res.history)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,cost,tracking,heater_penalty,fan_penalty,pg_norm,ls_steps"
    assert len(lines) == len(res.history) + 1
