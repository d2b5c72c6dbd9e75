"""Stationary penalized Navier-Stokes solver (Taylor-Hood P2/P1, Newton from Stokes).

Weak form, with ``p`` the kinematic gauge pressure ``(p - p_A) / rho``::

    (1/Re)(grad u, grad phi) + ((u.grad)u, phi) - (p, div phi) + (alpha u, phi) = (g, phi)
    (div u, psi) = 0

The pressure term is integrated by parts, so on the return inlet the natural
(do-nothing) condition ``(1/Re) du/dn - p n = 0`` holds and fixes the gauge
``p = p_A`` there; every continuity row is kept, so discrete mass is conserved
exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import mesh as meshmod
from .fem import Assembler
from .sparse_linalg import LUFactor, SingularMatrixError

log = logging.getLogger(__name__)


class FlowSolverError(RuntimeError):
    def __init__(self, msg, residual=None, bcs=None):
        super().__init__(msg)
        self.residual = residual
        self.bcs = bcs


@dataclass(frozen=True)
class FlowBCs:
    """Fan speeds (m/s, along the inward normal) for each outlet of the floor plan."""

    fan_speeds: tuple[float, ...] = (0.5, 0.5)
    inlet_pressure: float = 101.3e3  # Pa; enters only as the gauge reference

    @property
    def fan_speed_1(self) -> float:
        return self.fan_speeds[0]

    @property
    def fan_speed_2(self) -> float:
        return self.fan_speeds[1]


@dataclass(eq=False)
class FlowField:
    eta_u: np.ndarray        # interleaved velocity coefficients, m/s
    eta_p: np.ndarray        # gauge pressure p - p_A at vertices, Pa
    residual_norm: float = 0.0
    newton_iters: int = 0
    residual_history: list = field(default_factory=list)
    rho: float = 1.2

    @property
    def velocity_nodes(self) -> np.ndarray:
        return self.eta_u.reshape(-1, 2)

    @property
    def kinematic_pressure(self) -> np.ndarray:
        return self.eta_p / self.rho


def wall_dirichlet(asm: Assembler):
    """Velocity dofs fixed to zero by the no-penetration condition on wall edges.

    Nodes touching an outlet or the inlet are left to those conditions.
    """
    m, d = asm.mesh, asm.dofs
    fp = m.floorplan
    wall_nodes = d.boundary_p2_nodes(meshmod.WALL_EDGE)
    vent_nodes = d.boundary_p2_nodes([meshmod.OUTLET1, meshmod.OUTLET2, meshmod.INLET])
    nodes = np.setdiff1d(wall_nodes, vent_nodes)
    pts = d.p2_points[nodes]
    tol = 1e-9
    on_x = (np.abs(pts[:, 0]) < tol) | (np.abs(pts[:, 0] - fp.width) < tol)
    on_y = (np.abs(pts[:, 1]) < tol) | (np.abs(pts[:, 1] - fp.height) < tol)
    dofs = np.concatenate([2 * nodes[on_x], 2 * nodes[on_y] + 1])
    return dofs, np.zeros(dofs.size)


def outlet_dirichlet(asm: Assembler, bcs: FlowBCs):
    """``u = u_o n`` on every P2 node of each outlet, end nodes included."""
    fp = asm.mesh.floorplan
    if len(bcs.fan_speeds) != len(fp.outlets):
        raise ValueError(f"{len(fp.outlets)} outlets but {len(bcs.fan_speeds)} fan speeds given")
    dofs, vals = [], []
    for tag, seg, speed in zip((meshmod.OUTLET1, meshmod.OUTLET2), fp.outlets, bcs.fan_speeds):
        nodes = asm.dofs.boundary_p2_nodes(tag)
        n = np.array(seg.inward_normal)
        dofs += [2 * nodes, 2 * nodes + 1]
        vals += [np.full(nodes.size, speed * n[0]), np.full(nodes.size, speed * n[1])]
    if not dofs:
        return np.empty(0, dtype=np.int64), np.empty(0)
    return np.concatenate(dofs), np.concatenate(vals)


def apartment_dirichlet(asm: Assembler, bcs: FlowBCs):
    od, ov = outlet_dirichlet(asm, bcs)
    wd, wv = wall_dirichlet(asm)
    dofs = np.concatenate([od, wd])
    vals = np.concatenate([ov, wv])
    dofs, first = np.unique(dofs, return_index=True)
    return dofs, vals[first]


class FlowSolver:
    """Holds the assembled flow operators of one mesh and solves for given boundary data."""

    def __init__(self, asm: Assembler):
        self.asm = asm
        self.ops = asm.flow()
        self._A = self.ops.A_u.to_scipy()
        self._B = self.ops.B.to_scipy()
        self.n_u, self.n_p = asm.dofs.n_u, asm.dofs.n_p

    def _system(self, jac_conv=None):
        A = self._A if jac_conv is None else self._A + jac_conv
        return sp.bmat([[A, -self._B.T], [-self._B, None]], format="csr")

    def residual(self, X, forcing, nonlinear=True):
        U, P = X[: self.n_u], X[self.n_u:]
        Fu = self._A @ U - self._B.T @ P - forcing
        if nonlinear:
            Fu = Fu + self.asm.convection(U)
        Fp = -(self._B @ U)
        return np.concatenate([Fu, Fp])

    def solve(self, dirichlet_dofs, dirichlet_values, forcing=None, pressure_pin=None,
              nonlinear=True, tol=1e-9, max_iters=25, initial=None, rho=1.2) -> FlowField:
        """Solve with strongly imposed velocity values on ``dirichlet_dofs``.

        ``pressure_pin`` (a vertex index) fixes the pressure gauge on enclosed
        domains; without it the inlet's natural condition must determine it.
        ``initial`` selects the Newton start: ``"stokes"`` (default) or ``"zero"``.
        """
        n_u, n_p = self.n_u, self.n_p
        G = np.zeros(n_u) if forcing is None else np.asarray(forcing, dtype=float)
        fixed = np.concatenate([np.asarray(dirichlet_dofs, dtype=np.int64),
                                [] if pressure_pin is None else [n_u + int(pressure_pin)]]).astype(np.int64)
        fixed_vals = np.concatenate([np.asarray(dirichlet_values, dtype=float),
                                     [] if pressure_pin is None else [0.0]])
        free = np.setdiff1d(np.arange(n_u + n_p), fixed)

        def linear_solve(M, rhs):
            Mff = M[free][:, free]
            try:
                return LUFactor(Mff).solve(rhs)
            except SingularMatrixError as exc:
                raise FlowSolverError(
                    "singular saddle-point system: pressure is undetermined; the domain needs an "
                    "inlet segment (natural pressure condition) or a pinned pressure dof") from exc

        X = np.zeros(n_u + n_p)
        X[fixed] = fixed_vals
        # Stokes solve: linear in X
        if initial != "zero":
            K = self._system()
            r0 = self.residual(X, G, nonlinear=False)
            X[free] -= linear_solve(K, r0[free])
        history = []
        iters = 0
        if nonlinear:
            F = self.residual(X, G)[free]
            res = float(np.abs(F).max()) if F.size else 0.0
            history.append(res)
            while res > tol:
                if iters >= max_iters:
                    raise FlowSolverError(f"Newton did not converge in {max_iters} iterations "
                                          f"(residual {res:.3e})", residual=res)
                J = self._system(self.asm.convection_jacobian(X[:n_u]).to_scipy())
                step = np.zeros_like(X)
                step[free] = -linear_solve(J, F)
                t = 1.0
                for _ in range(11):
                    Xt = X + t * step
                    Ft = self.residual(Xt, G)[free]
                    rt = float(np.abs(Ft).max())
                    if rt <= (1 - 1e-4 * t) * res or rt <= tol:
                        break
                    t *= 0.5
                else:
                    raise FlowSolverError(f"line search failed after 10 halvings (residual {res:.3e})",
                                          residual=res)
                X, F, res = Xt, Ft, rt
                iters += 1
                history.append(res)
                log.debug("newton %d: residual %.3e step %.3g", iters, res, t)
        else:
            F = self.residual(X, G, nonlinear=False)[free]
            res = float(np.abs(F).max()) if F.size else 0.0
            history.append(res)
        P = X[n_u:]
        if pressure_pin is not None:
            P = P - self._mean_pressure(P)
        return FlowField(X[:n_u].copy(), rho * P, res, iters, history, rho)

    def _mean_pressure(self, P):
        return self.asm.integrate_p1(P) / self.asm.area()

    # ---- apartment-level entry points ---------------------------------------------------
    def _check_inlet(self):
        if not np.any(self.asm.mesh.boundary_edges[:, 2] == meshmod.INLET):
            raise FlowSolverError("missing pressure constraint: the floor plan has no inlet "
                                  "segment (Gamma_i) to carry the atmospheric pressure condition")

    def solve_stokes(self, bcs: FlowBCs) -> FlowField:
        self._check_inlet()
        d, v = apartment_dirichlet(self.asm, bcs)
        try:
            return self.solve(d, v, nonlinear=False, rho=self.asm.coeffs.rho)
        except FlowSolverError as exc:
            exc.bcs = bcs
            raise

    def solve_navier_stokes(self, bcs: FlowBCs, tol=1e-9, max_iters=25, initial="stokes") -> FlowField:
        if self.asm.coeffs.Re <= 0:
            raise ValueError("Re must be positive")
        self._check_inlet()
        d, v = apartment_dirichlet(self.asm, bcs)
        try:
            return self.solve(d, v, tol=tol, max_iters=max_iters, initial=initial, rho=self.asm.coeffs.rho)
        except FlowSolverError as exc:
            exc.bcs = bcs
            raise


def solve_stokes(asm: Assembler, bcs: FlowBCs) -> FlowField:
    return FlowSolver(asm).solve_stokes(bcs)


def solve_navier_stokes(asm: Assembler, bcs: FlowBCs, tol=1e-9, max_iters=25) -> FlowField:
    return FlowSolver(asm).solve_navier_stokes(bcs, tol=tol, max_iters=max_iters)


# ---- evaluation ----------------------------------------------------------------------------

def locate(mesh: meshmod.Mesh, x) -> tuple[int, np.ndarray]:
    """Containing triangle and barycentric coordinates of point ``x``."""
    x = np.asarray(x, dtype=float)
    p = mesh.vertices[mesh.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    r = x - p[:, 0]
    s = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    t = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    lam = np.column_stack([1 - s - t, s, t])
    inside = np.flatnonzero(lam.min(axis=1) >= -1e-10)
    if inside.size == 0:
        raise ValueError(f"point {x.tolist()} lies outside the mesh")
    e = int(inside[0])
    return e, lam[e]


def velocity_at(asm: Assembler, flow: FlowField, x) -> np.ndarray:
    from .fem import reference_basis

    e, lam = locate(asm.mesh, x)
    vals, _ = reference_basis(2, lam)
    return vals @ flow.velocity_nodes[asm.dofs.cells_p2[e]]


def divergence_residual(asm: Assembler, flow: FlowField) -> float:
    """``max_k |<div u, psi_k>|`` over all pressure test functions."""
    return float(np.abs(asm.flow().B @ flow.eta_u).max())


_GAUSS = (np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10]), np.array([5 / 18, 8 / 18, 5 / 18]))


def _edge_samples(asm: Assembler, flow: FlowField, tags):
    """Velocity, pressure, quadrature weights and outward normals on boundary edges with ``tags``."""
    m = asm.mesh
    be, ids = m.boundary_edges, m.boundary_edge_ids
    sel = np.isin(be[:, 2], np.atleast_1d(tags))
    v0, v1 = be[sel, 0], be[sel, 1]
    mid = asm.dofs.n_vertices + ids[sel]
    U = flow.velocity_nodes
    s, w = _GAUSS
    # quadratic trace along the edge
    n0 = (1 - s) * (1 - 2 * s)
    nm = 4 * s * (1 - s)
    n1 = s * (2 * s - 1)
    u = (n0[None, :, None] * U[v0][:, None] + nm[None, :, None] * U[mid][:, None]
         + n1[None, :, None] * U[v1][:, None])
    p = (1 - s)[None, :] * flow.eta_p[v0][:, None] + s[None, :] * flow.eta_p[v1][:, None]
    a, b = m.vertices[v0], m.vertices[v1]
    length = np.linalg.norm(b - a, axis=1)
    t = (b - a) / length[:, None]
    normal = np.column_stack([t[:, 1], -t[:, 0]])
    # orient outward: away from the domain centre line of the rectangle
    fp = m.floorplan
    centre = np.array([fp.width / 2, fp.height / 2])
    flip = np.einsum("ij,ij->i", normal, 0.5 * (a + b) - centre) < 0
    normal[flip] *= -1
    return u, p, w[None, :] * length[:, None], normal


def boundary_flux(asm: Assembler, flow: FlowField, tags) -> float:
    """Outward volume flux ``int u.n ds`` through boundary edges carrying ``tags``."""
    u, _, w, n = _edge_samples(asm, flow, tags)
    return float(np.sum(w * np.einsum("eqc,ec->eq", u, n)))


def fan_power(asm: Assembler, flow: FlowField) -> float:
    """``int |u| (p - p_A) ds`` over both outlets, in W per metre of room height."""
    u, p, w, _ = _edge_samples(asm, flow, [meshmod.OUTLET1, meshmod.OUTLET2])
    return float(np.sum(w * np.linalg.norm(u, axis=2) * p))


def mean_speed(asm: Assembler, flow: FlowField, elements=None) -> float:
    """Area-averaged ``|u|`` over ``elements`` (default: non-wall elements)."""
    if elements is None:
        elements = np.flatnonzero(asm.mesh.element_region != meshmod.WALL)
    u, _ = asm.velocity_at_quadrature(flow.eta_u)
    speed = np.linalg.norm(u, axis=2)
    w = asm.geo.wdet[elements]
    return float(np.sum(w * speed[elements]) / np.sum(w))


def max_speed(asm: Assembler, flow: FlowField, elements) -> float:
    """Largest ``|u|`` over P2 nodes of ``elements``."""
    nodes = np.unique(asm.dofs.cells_p2[elements])
    return float(np.linalg.norm(flow.velocity_nodes[nodes], axis=1).max())


def write_flow_csv(path, asm: Assembler, flow: FlowField) -> Path:
    path = Path(path)
    nv = asm.mesh.n_vertices
    U = flow.velocity_nodes[:nv]
    rows = ["x,y,ux,uy,p"]
    for (x, y), (ux, uy), p in zip(asm.mesh.vertices.tolist(), U.tolist(), flow.eta_p.tolist()):
        rows.append(f"{x!r},{y!r},{ux!r},{uy!r},{p!r}")
    path.write_text("\n".join(rows) + "\n")
    return path


def write_flow_vtk(path, asm: Assembler, flow: FlowField) -> Path:
    nv = asm.mesh.n_vertices
    return meshmod.write_vtk(path, asm.mesh, point_data={
        "velocity": flow.velocity_nodes[:nv], "pressure": flow.eta_p}, title="stationary air flow")
