"""Reduced-space optimal control of fan speeds and heater schedules.

The flow and temperature equations are solved exactly inside every cost
evaluation, leaving ``2 + 2K`` box-constrained variables ordered as
``[u_o, u_o2, v_0..v_{K-1}, v2_0..v2_{K-1}]``. Heater gradients come from a
discrete adjoint sweep, fan-speed gradients from central differences.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import Assembler
from .flow import FlowBCs, FlowField, FlowSolver, FlowSolverError
from .thermal import ThermalStepper, ThermalTrajectory, zone_abs_error, zone_average

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlVector:
    u_o: float
    u_o2: float
    v: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).copy())
        object.__setattr__(self, "v2", np.asarray(self.v2, dtype=float).copy())
        if self.v.shape != self.v2.shape or self.v.ndim != 1:
            raise ValueError("heater schedules must be 1-D arrays of equal length")

    @property
    def n_steps(self) -> int:
        return self.v.size

    def to_array(self) -> np.ndarray:
        return np.concatenate([[self.u_o, self.u_o2], self.v, self.v2])

    @classmethod
    def from_array(cls, x) -> ControlVector:
        x = np.asarray(x, dtype=float)
        K = (x.size - 2) // 2
        return cls(float(x[0]), float(x[1]), x[2:2 + K], x[2 + K:])

    @classmethod
    def constant(cls, u_o, u_o2, v, v2, n_steps) -> ControlVector:
        return cls(float(u_o), float(u_o2), np.full(n_steps, float(v)), np.full(n_steps, float(v2)))

    def to_dict(self) -> dict:
        return {"u_o": self.u_o, "u_o2": self.u_o2, "v": self.v.tolist(), "v2": self.v2.tolist()}


@dataclass(frozen=True)
class Bounds:
    fan: tuple[float, float] = (0.1, 1.0)
    heater: tuple[float, float] = (0.0, 5.0)

    def arrays(self, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate([[self.fan[0]] * 2, [self.heater[0]] * 2 * n_steps])
        hi = np.concatenate([[self.fan[1]] * 2, [self.heater[1]] * 2 * n_steps])
        return lo, hi

    def lower(self, n_steps: int) -> ControlVector:
        return ControlVector.from_array(self.arrays(n_steps)[0])

    def project(self, c: ControlVector) -> ControlVector:
        lo, hi = self.arrays(c.n_steps)
        return ControlVector.from_array(np.clip(c.to_array(), lo, hi))

    def contains(self, c: ControlVector) -> bool:
        lo, hi = self.arrays(c.n_steps)
        x = c.to_array()
        return bool(np.all(x >= lo) and np.all(x <= hi))


@dataclass(frozen=True)
class CostBreakdown:
    tracking: float
    heater_penalty: float
    fan_penalty: float

    @property
    def total(self) -> float:
        return self.tracking + self.heater_penalty + self.fan_penalty

    def to_dict(self) -> dict:
        return {"tracking": self.tracking, "heater_penalty": self.heater_penalty,
                "fan_penalty": self.fan_penalty, "total": self.total}


@dataclass(eq=False)
class OptimizationResult:
    controls: ControlVector
    cost: CostBreakdown
    gradient_norm: float
    iterations: int
    converged: bool
    trajectory: ThermalTrajectory
    flow: FlowField
    history: list = field(default_factory=list)
    message: str = ""


class ControlProblem:
    """Cost, gradients and model solves for one target zone.

    Parameters
    ----------
    asm : Assembler
    zone_elements : array of int
        Triangles of the target area.
    target : float
        Reference temperature relative to T_A (degC).
    """

    def __init__(self, asm: Assembler, zone_elements, target: float = 1.0, dt: float = 10.0,
                 n_steps: int = 30, lam1: float = 0.002, lam2: float = 0.001, theta: float = 1.0,
                 bounds: Bounds | None = None, fd_step: float = 1e-3, flow_tol: float = 1e-9,
                 flow_max_iters: int = 25, cache_size: int = 16):
        self.asm = asm
        self.zone = np.asarray(zone_elements)
        if self.zone.size == 0:
            raise ValueError("target zone contains no elements")
        self.target, self.dt, self.n_steps = float(target), float(dt), int(n_steps)
        self.lam1, self.lam2, self.theta = float(lam1), float(lam2), float(theta)
        self.bounds = bounds or Bounds()
        self.fd_step = fd_step
        self.flow_tol, self.flow_max_iters = flow_tol, flow_max_iters
        self.flow_solver = FlowSolver(asm)
        self.Mz = asm.p1_mass(self.zone).to_scipy()
        self.mz = self.Mz @ np.ones(asm.dofs.n_T)
        self.zone_area = asm.area(self.zone)
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        self.time_weights = w
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self.n_flow_solves = 0

    # ---- model ------------------------------------------------------------------------
    def model(self, u_o: float, u_o2: float) -> tuple[FlowField, ThermalStepper]:
        key = (float(u_o), float(u_o2))
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        try:
            flow = self.flow_solver.solve_navier_stokes(FlowBCs(key), tol=self.flow_tol,
                                                        max_iters=self.flow_max_iters)
        except FlowSolverError as exc:
            raise FlowSolverError(f"flow solve failed at fan speeds {key}: {exc}",
                                  residual=exc.residual, bcs=FlowBCs(key)) from exc
        self.n_flow_solves += 1
        stepper = ThermalStepper(self.asm, flow, self.dt, self.theta)
        self._cache[key] = (flow, stepper)
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return flow, stepper

    def simulate(self, c: ControlVector) -> tuple[FlowField, ThermalTrajectory]:
        if c.n_steps != self.n_steps:
            raise ValueError(f"controls have {c.n_steps} steps, problem has {self.n_steps}")
        flow, stepper = self.model(c.u_o, c.u_o2)
        return flow, stepper.simulate(c.v, c.v2)

    # ---- cost -------------------------------------------------------------------------
    def _tracking_terms(self, states):
        quad = np.einsum("ki,ki->k", states, (self.Mz @ states.T).T)
        lin = states @ self.mz
        return quad - 2 * self.target * lin + self.target ** 2 * self.zone_area

    def cost_of(self, c: ControlVector, traj: ThermalTrajectory) -> CostBreakdown:
        tracking = float(self.time_weights @ self._tracking_terms(traj.states))
        heater = self.lam1 * self.dt * float(c.v @ c.v + c.v2 @ c.v2)
        fan = self.lam2 * (c.u_o ** 2 + c.u_o2 ** 2)
        return CostBreakdown(tracking, heater, fan)

    def evaluate_cost(self, c: ControlVector) -> CostBreakdown:
        _, traj = self.simulate(c)
        return self.cost_of(c, traj)

    def evaluate(self, c: ControlVector):
        flow, traj = self.simulate(c)
        return self.cost_of(c, traj), flow, traj

    # ---- gradients --------------------------------------------------------------------
    def adjoint_gradient_heaters(self, c: ControlVector, traj: ThermalTrajectory | None = None):
        """Exact gradient of the discrete cost w.r.t. both heater schedules."""
        flow, stepper = self.model(c.u_o, c.u_o2)
        if traj is None:
            traj = stepper.simulate(c.v, c.v2)
        states = traj.states
        g = 2.0 * self.time_weights[:, None] * ((self.Mz @ states.T).T - self.target * self.mz[None, :])
        mu = stepper.adjoint_sweep(g)
        L1, L2 = stepper.loads
        gv = self.dt * (mu @ L1) + 2 * self.lam1 * self.dt * c.v
        gv2 = self.dt * (mu @ L2) + 2 * self.lam1 * self.dt * c.v2
        return gv, gv2

    def fd_gradient_fans(self, c: ControlVector, h: float | None = None) -> np.ndarray:
        """Central differences in the two fan speeds, one-sided at the box edges."""
        h = self.fd_step if h is None else h
        lo, hi = self.bounds.fan
        base = None
        grads = np.zeros(2)
        for i in range(2):
            x = c.to_array()

            def J(val):
                y = x.copy()
                y[i] = val
                return self.evaluate_cost(ControlVector.from_array(y)).total

            u = x[i]
            plus, minus = u + h <= hi + 1e-15, u - h >= lo - 1e-15
            try:
                if plus and minus:
                    grads[i] = (J(u + h) - J(u - h)) / (2 * h)
                    continue
            except FlowSolverError:
                log.warning("central difference failed for fan %d, trying one-sided", i + 1)
            if base is None:
                base = self.evaluate_cost(c).total
            try:
                grads[i] = (J(u + h) - base) / h if plus else (base - J(u - h)) / h
            except FlowSolverError:
                try:
                    grads[i] = (base - J(u - h)) / h if plus and minus else (J(u + h) - base) / h
                except FlowSolverError as exc:
                    raise FlowSolverError(f"fan {i + 1} sensitivity failed on both sides of {u}") from exc
        return grads

    def gradient(self, c: ControlVector, traj: ThermalTrajectory | None = None) -> np.ndarray:
        gv, gv2 = self.adjoint_gradient_heaters(c, traj)
        gf = self.fd_gradient_fans(c)
        return np.concatenate([gf, gv, gv2])


def projected_gradient(x, g, lo, hi) -> np.ndarray:
    return np.clip(x - g, lo, hi) - x


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for a, rho, s, y in reversed(alphas):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def optimize(problem: ControlProblem, start: ControlVector | None = None, max_iters: int = 200,
             tol: float | None = None, memory: int = 10, max_halvings: int = 30,
             callback=None) -> OptimizationResult:
    """Projected limited-memory BFGS with Armijo backtracking along the projection arc.

    Stops when the projected-gradient infinity norm is at most ``tol`` (default
    ``1e-6 (1 + |J|)``) or the relative cost decrease drops below 1e-10.
    Every evaluated point is feasible; the accepted costs never increase.
    """
    K = problem.n_steps
    lo, hi = problem.bounds.arrays(K)
    start = problem.bounds.lower(K) if start is None else start
    x = np.clip(start.to_array(), lo, hi)
    c = ControlVector.from_array(x)
    cost, flow, traj = problem.evaluate(c)
    f = cost.total
    g = problem.gradient(c, traj)
    S, Y = [], []
    history = []
    converged, message = False, "max_iters exhausted"
    it = 0
    pg_norm = float(np.abs(projected_gradient(x, g, lo, hi)).max())
    history.append(_log_row(0, cost, pg_norm, 0))
    if callback:
        callback(history[-1])
    while True:
        thresh = (1e-6 * (1 + abs(f))) if tol is None else tol
        if pg_norm <= thresh:
            converged, message = True, "projected gradient below tolerance"
            break
        if it >= max_iters:
            break
        # variables held at a bound by the gradient stay fixed for this direction
        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~active
        d = np.zeros_like(x)
        if S:
            d[free] = -_two_loop(g[free], [s[free] for s in S], [y[free] for y in Y])
        if not S or d @ g >= 0:
            d = np.where(free, -g, 0.0)
            S.clear()
            Y.clear()
        step = 1.0
        if not S:
            step = min(1.0, 1.0 / max(np.abs(d).max(), 1e-300))
        accepted = False
        for halving in range(max_halvings + 1):
            x_new = np.clip(x + step * d, lo, hi)
            c_new = ControlVector.from_array(x_new)
            cost_new, flow_new, traj_new = problem.evaluate(c_new)
            if cost_new.total <= f + 1e-4 * (g @ (x_new - x)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if S:
                S.clear()
                Y.clear()
                continue
            message = "line search failed"
            break
        g_new = problem.gradient(c_new, traj_new)
        s, yv = x_new - x, g_new - g
        if s @ yv > 1e-12 * (yv @ yv):
            S.append(s)
            Y.append(yv)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
        decrease = f - cost_new.total
        x, g, f, c, cost, flow, traj = x_new, g_new, cost_new.total, c_new, cost_new, flow_new, traj_new
        it += 1
        pg_norm = float(np.abs(projected_gradient(x, g, lo, hi)).max())
        history.append(_log_row(it, cost, pg_norm, halving))
        if callback:
            callback(history[-1])
        log.info("iter %d cost %.6g pg %.3e ls %d", it, f, pg_norm, halving)
        if decrease < 1e-10 * max(abs(f), 1e-300):
            converged, message = True, "relative cost decrease below 1e-10"
            break
    return OptimizationResult(c, cost, pg_norm, it, converged, traj, flow, history, message)


def _log_row(it, cost: CostBreakdown, pg, ls) -> dict:
    return {"iter": it, "cost": cost.total, "tracking": cost.tracking,
            "heater_penalty": cost.heater_penalty, "fan_penalty": cost.fan_penalty,
            "pg_norm": pg, "ls_steps": ls}


def write_iteration_csv(path, history) -> Path:
    path = Path(path)
    cols = ["iter", "cost", "tracking", "heater_penalty", "fan_penalty", "pg_norm", "ls_steps"]
    rows = [",".join(cols)]
    for h in history:
        rows.append(",".join(repr(h[k]) if isinstance(h[k], float) else str(h[k]) for k in cols))
    path.write_text("\n".join(rows) + "\n")
    return path


def summarize(problem: ControlProblem, c: ControlVector, traj: ThermalTrajectory) -> dict:
    """Final-time zone statistics used in reports."""
    final = traj.states[-1]
    return {"zone_avg_tf": zone_average(problem.asm, final, problem.zone),
            "avg_abs_error_tf": zone_abs_error(problem.asm, final, problem.zone, problem.target)}


__all__ = ["Bounds", "ControlProblem", "ControlVector", "CostBreakdown", "OptimizationResult",
           "optimize", "projected_gradient", "write_iteration_csv"]
