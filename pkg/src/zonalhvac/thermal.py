"""Time stepping of the semi-discrete heat equation with a frozen stationary flow.

The theta-scheme step on interior dofs is::

    (M + theta dt S) T_{k+1} = (M - (1 - theta) dt S) T_k + dt (v_k L1 + v2_k L2),   S = K + C(u)

Boundary temperature is pinned to the atmospheric value (0 in relative units).
``theta = 0`` is Forward Euler, ``theta = 1`` (default) Backward Euler.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fem import Assembler
from .flow import FlowField
from .sparse_linalg import LUFactor


class StabilityWarning(RuntimeWarning):
    pass


class DissipativityError(AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class ThermalState:
    eta_T: np.ndarray   # temperature relative to T_A at every vertex, degC
    t: float = 0.0


@dataclass(eq=False)
class ThermalTrajectory:
    states: np.ndarray  # (K + 1, N_T)
    dt: float
    theta: float = 1.0
    stability_warning: str | None = None

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.states.shape[0])

    @property
    def final(self) -> ThermalState:
        return ThermalState(self.states[-1], self.times[-1])

    def __getitem__(self, k) -> ThermalState:
        return ThermalState(self.states[k], k * self.dt)


class ThermalStepper:
    """Factorizes the step matrix once for a given (flow, dt, theta) and reuses it.

    Parameters
    ----------
    asm : Assembler
    flow : FlowField or None
        Stationary velocity; ``None`` means pure diffusion.
    dt : float
        Time step in seconds.
    theta : float
        Implicitness in [0, 1].
    """

    def __init__(self, asm: Assembler, flow: FlowField | None, dt: float, theta: float = 1.0,
                 skew: bool = False):
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.asm, self.flow, self.dt, self.theta = asm, flow, float(dt), float(theta)
        ops = asm.temperature(None if flow is None else flow.eta_u, skew=skew)
        self.M = ops.M_T.to_scipy()
        S = ops.K_T.to_scipy()
        if ops.C_T is not None:
            S = S + ops.C_T.to_scipy()
        self.S = S
        n = asm.dofs.n_T
        self.n = n
        self.interior = np.setdiff1d(np.arange(n), asm.mesh.boundary_vertices())
        I = self.interior
        A = (self.M + theta * dt * S).tocsr()[I][:, I]
        self.rhs_matrix = (self.M - (1.0 - theta) * dt * S).tocsr()[I][:, I]
        self.step_matrix = A
        self.lu = LUFactor(A)
        self.M_II = self.M.tocsr()[I][:, I]
        self.loads = []
        for which in (1, 2):
            try:
                self.loads.append(asm.heater_load(which)[I])
            except (KeyError, ValueError):
                self.loads.append(np.zeros(I.size))
        self.stability_warning = None
        if theta < 1.0:
            rho = self.spectral_radius()
            if rho > 1.0 + 1e-9:
                self.stability_warning = (f"theta={theta:g}, dt={dt:g}: transition spectral radius "
                                          f"estimate {rho:.3g} > 1, the scheme is unstable")
                warnings.warn(self.stability_warning, StabilityWarning, stacklevel=2)

    def spectral_radius(self, iters: int = 200, seed: int = 0) -> float:
        """Power-iteration estimate of the spectral radius of the homogeneous transition."""
        x = np.random.default_rng(seed).standard_normal(self.interior.size)
        est = 0.0
        for _ in range(iters):
            y = self.propagate(x)
            nrm = np.linalg.norm(y)
            if nrm == 0:
                return 0.0
            est = nrm / np.linalg.norm(x)
            x = y / nrm
        return float(est)

    def propagate(self, x_int) -> np.ndarray:
        """Homogeneous transition (no sources) on interior dofs."""
        return self.lu.solve(self.rhs_matrix @ x_int)

    def energy(self, x_int) -> float:
        return float(np.sqrt(x_int @ (self.M_II @ x_int)))

    def _source(self, v, v2):
        return self.dt * (v * self.loads[0] + v2 * self.loads[1])

    def step(self, state: ThermalState, v: float = 0.0, v2: float = 0.0,
             check_dissipative: bool = False) -> ThermalState:
        x = state.eta_T[self.interior]
        rhs = self.rhs_matrix @ x + self._source(v, v2)
        y = self.lu.solve(rhs)
        if check_dissipative:
            self._check(x)
        out = np.zeros(self.n)
        out[self.interior] = y
        return ThermalState(out, state.t + self.dt)

    def _check(self, x):
        hom = self.propagate(x)
        e0, e1 = self.energy(x), self.energy(hom)
        if e1 > e0 * (1 + 1e-12) + 1e-300:
            raise DissipativityError(f"homogeneous step increased the M-norm: {e0:.6e} -> {e1:.6e}")

    def simulate(self, v, v2=None, initial=None, check_dissipative: bool = False) -> ThermalTrajectory:
        """Run ``len(v)`` steps from ``initial`` (default: the room at T_A)."""
        v = np.asarray(v, dtype=float)
        v2 = np.zeros_like(v) if v2 is None else np.asarray(v2, dtype=float)
        if v.shape != v2.shape or v.ndim != 1:
            raise ValueError("heater schedules must be 1-D arrays of equal length")
        K = v.size
        states = np.zeros((K + 1, self.n))
        x = np.zeros(self.interior.size) if initial is None else np.asarray(initial, float)[self.interior]
        states[0, self.interior] = x
        for k in range(K):
            if check_dissipative:
                self._check(x)
            x = self.lu.solve(self.rhs_matrix @ x + self._source(v[k], v2[k]))
            states[k + 1, self.interior] = x
        return ThermalTrajectory(states, self.dt, self.theta, self.stability_warning)

    def adjoint_sweep(self, state_gradients) -> np.ndarray:
        """Backward sweep for a cost whose gradient w.r.t. ``T_k`` is ``state_gradients[k]``.

        Returns ``mu`` of shape ``(K, n_interior)`` with ``mu[k] = A^{-T} dJ/dT_{k+1}``
        (total derivatives), so ``dJ/dv_k = dt * L1 . mu[k]``.
        """
        g = np.asarray(state_gradients)[:, self.interior]
        K = g.shape[0] - 1
        mu = np.zeros((K, self.interior.size))
        lam = g[K]
        RT = self.rhs_matrix.T.tocsr()
        for k in range(K - 1, -1, -1):
            mu[k] = self.lu.solve(lam, transpose=True)
            lam = g[k] + RT @ mu[k]
        return mu


def zone_average(asm: Assembler, eta_T, elements) -> float:
    """Area average of a P1 temperature field over ``elements``."""
    elements = np.asarray(elements)
    if elements.size == 0:
        raise ValueError("empty zone")
    return asm.integrate_p1(eta_T, elements) / asm.area(elements)


def zone_abs_error(asm: Assembler, eta_T, elements, target: float) -> float:
    """Area average of ``|T - target|`` over ``elements`` (quadrature-point evaluation)."""
    elements = np.asarray(elements)
    if elements.size == 0:
        raise ValueError("empty zone")
    return asm.integrate_p1(eta_T, elements, fn=lambda t: np.abs(t - target)) / asm.area(elements)


def write_trajectory_csv(path, asm: Assembler, traj: ThermalTrajectory, elements,
                         nodes: bool = False) -> Path:
    path = Path(path)
    header = ["t", "zone_avg"]
    if nodes:
        header += [f"T{i}" for i in range(traj.states.shape[1])]
    rows = [",".join(header)]
    for k, t in enumerate(traj.times.tolist()):
        vals = [repr(float(t)), repr(zone_average(asm, traj.states[k], elements))]
        if nodes:
            vals += [repr(x) for x in traj.states[k].tolist()]
        rows.append(",".join(vals))
    path.write_text("\n".join(rows) + "\n")
    return path


def write_temperature_vtk(path, asm: Assembler, state: ThermalState) -> Path:
    from .mesh import write_vtk

    return write_vtk(path, asm.mesh, point_data={"temperature": state.eta_T},
                     title=f"temperature relative to T_A at t={state.t:g} s")
