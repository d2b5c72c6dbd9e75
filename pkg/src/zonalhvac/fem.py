"""P1/P2 Lagrange elements and assembly of the flow and temperature operators.

Conventions
-----------
* Reference triangle has vertices (0,0), (1,0), (0,1); barycentric
  coordinates are ``(1 - s - t, s, t)``.
* Local P2 nodes: the three vertices, then midpoints of edges (0,1), (1,2), (2,0).
* Global P2 node ``j`` is vertex ``j`` for ``j < Nv`` and edge ``j - Nv`` otherwise.
  Velocity dofs are interleaved: ``2j`` is the x-component, ``2j + 1`` the y-component.
* Diffusion and viscosity enter with the dissipative sign, i.e. the
  semi-discrete heat equation reads ``M dT/dt + (K + C) T = load`` with ``K``
  positive semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import HEATER1, HEATER2, WALL, Mesh
from .sparse_linalg import CsrMatrix, Triplets, to_csr

QUAD_ORDER = 4


def quadrature(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Points ``(n, 2)`` and positive weights on the reference triangle (weights sum to 1/2)."""
    if order == 1:
        return np.array([[1 / 3, 1 / 3]]), np.array([0.5])
    if order == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return pts, np.full(3, 1 / 6)
    if order in (3, 4):
        # 6-point degree-4 rule (Dunavant)
        a, wa = 0.445948490915965, 0.223381589678011
        b, wb = 0.091576213509771, 0.109951743655322
        pts = np.array([[a, a], [1 - 2 * a, a], [a, 1 - 2 * a],
                        [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]])
        return pts, 0.5 * np.array([wa] * 3 + [wb] * 3)
    raise ValueError(f"unsupported quadrature order {order}; expected 1..4")


def reference_basis(order: int, point) -> tuple[np.ndarray, np.ndarray]:
    """Shape function values and reference-coordinate gradients.

    ``point`` is a barycentric triple (or an ``(n, 3)`` array of them). Returns
    values of shape ``(n, nb)`` and gradients of shape ``(n, nb, 2)`` with
    ``nb`` = 3 for P1 and 6 for P2; a single point drops the leading axis.
    """
    lam = np.atleast_2d(np.asarray(point, dtype=float))
    single = np.ndim(point) == 1
    # d(lambda_i)/d(s, t)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    n = lam.shape[0]
    if order == 1:
        vals = lam.copy()
        grads = np.broadcast_to(dlam, (n, 3, 2)).copy()
    elif order == 2:
        l0, l1, l2 = lam.T
        vals = np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                                4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0])
        grads = np.empty((n, 6, 2))
        for i in range(3):
            grads[:, i] = (4 * lam[:, i] - 1)[:, None] * dlam[i]
        for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
            grads[:, 3 + k] = 4 * (lam[:, i, None] * dlam[j] + lam[:, j, None] * dlam[i])
    else:
        raise ValueError(f"unsupported element order {order}")
    if single:
        return vals[0], grads[0]
    return vals, grads


def _bary(ref_pts):
    return np.column_stack([1 - ref_pts[:, 0] - ref_pts[:, 1], ref_pts[:, 0], ref_pts[:, 1]])


@dataclass(frozen=True)
class Coefficients:
    kappa_air: float = 1e-2
    kappa_wall: float = 1e-4
    alpha_air: float = 0.0
    alpha_wall: float = 100.0
    Re: float = 0.05
    rho: float = 1.2

    def __post_init__(self):
        if not (self.kappa_air > 0 and self.kappa_wall > 0):
            raise ValueError("thermal diffusivities must be positive")
        if self.alpha_air < 0 or self.alpha_wall < 0:
            raise ValueError("friction constants must be nonnegative")
        if not (self.Re > 0 and self.rho > 0):
            raise ValueError("Re and rho must be positive")

    def kappa(self, region) -> np.ndarray:
        return np.where(np.asarray(region) == WALL, self.kappa_wall, self.kappa_air)

    def alpha(self, region) -> np.ndarray:
        return np.where(np.asarray(region) == WALL, self.alpha_wall, self.alpha_air)


class DofMap:
    """Numbering of temperature/pressure (P1) and velocity (vector P2) unknowns."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.n_vertices = mesh.n_vertices
        self.n_p2 = mesh.n_vertices + mesh.n_edges
        self.n_T = self.n_p = mesh.n_vertices
        self.n_u = 2 * self.n_p2
        self.cells_p1 = mesh.triangles
        self.cells_p2 = np.column_stack([mesh.triangles, mesh.n_vertices + mesh.tri_edges])
        self.p2_points = np.concatenate([mesh.vertices, mesh.edge_midpoints])

    def boundary_p2_nodes(self, tag=None) -> np.ndarray:
        """P2 nodes on boundary edges (optionally only edges carrying ``tag``)."""
        be = self.mesh.boundary_edges
        ids = self.mesh.boundary_edge_ids
        sel = np.ones(len(be), dtype=bool) if tag is None else np.isin(be[:, 2], np.atleast_1d(tag))
        return np.unique(np.concatenate([be[sel, 0], be[sel, 1], self.n_vertices + ids[sel]]))

    def boundary_vertices(self, tag=None) -> np.ndarray:
        be = self.mesh.boundary_edges
        sel = np.ones(len(be), dtype=bool) if tag is None else np.isin(be[:, 2], np.atleast_1d(tag))
        return np.unique(be[sel, :2])

    def interpolate_velocity(self, fn) -> np.ndarray:
        """Nodal interpolant of ``fn(points) -> (n, 2)``."""
        vals = np.asarray(fn(self.p2_points), dtype=float)
        return vals.reshape(-1)

    def interpolate_scalar(self, fn) -> np.ndarray:
        return np.asarray(fn(self.mesh.vertices), dtype=float)


class _Geometry:
    """Per-element affine maps evaluated once per mesh."""

    def __init__(self, mesh: Mesh, order: int = QUAD_ORDER):
        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nt, 2, 2): columns d/ds, d/dt
        self.det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        # grad_x = J^{-T} grad_ref, i.e. sum_r g_r (J^{-1})_{rc}
        self.jinv = np.linalg.inv(jac)
        self.origin = p[:, 0]
        self.jac = jac
        self.qpts, self.qw = quadrature(order)
        lam = _bary(self.qpts)
        self.v1, g1 = reference_basis(1, lam)
        self.v2, g2 = reference_basis(2, lam)
        # physical gradients: (nt, nq, nb, 2)
        self.g1 = np.einsum("qbr,erc->eqbc", g1, self.jinv)
        self.g2 = np.einsum("qbr,erc->eqbc", g2, self.jinv)
        self.wdet = self.qw[None, :] * np.abs(self.det)[:, None]  # (nt, nq)

    def physical_points(self) -> np.ndarray:
        return self.origin[:, None, :] + np.einsum("eij,qj->eqi", self.jac, self.qpts)


def _scatter(rows_cells, cols_cells, local, nrows, ncols) -> CsrMatrix:
    nb_r, nb_c = rows_cells.shape[1], cols_cells.shape[1]
    R = np.repeat(rows_cells[:, :, None], nb_c, axis=2)
    C = np.repeat(cols_cells[:, None, :], nb_r, axis=1)
    return to_csr(Triplets(R.ravel(), C.ravel(), local.ravel(), nrows, ncols))


def _vector_cells(cells_p2):
    out = np.empty((cells_p2.shape[0], 12), dtype=np.int64)
    out[:, 0::2] = 2 * cells_p2
    out[:, 1::2] = 2 * cells_p2 + 1
    return out


@dataclass(frozen=True, eq=False)
class FlowOperators:
    A_u: CsrMatrix      # (1/Re) vector stiffness + alpha-weighted vector mass
    B: CsrMatrix        # rows: pressure tests, cols: velocity dofs; <div u, psi>
    B_grad: CsrMatrix   # rows: velocity tests, cols: pressure dofs; <grad p, phi>


@dataclass(frozen=True, eq=False)
class TemperatureOperators:
    M_T: CsrMatrix
    K_T: CsrMatrix
    C_T: CsrMatrix | None = None


class Assembler:
    """Assembles every operator of the coupled flow/temperature model on one mesh."""

    def __init__(self, mesh: Mesh, coeffs: Coefficients | None = None):
        self.mesh = mesh
        self.dofs = DofMap(mesh)
        self.coeffs = coeffs or Coefficients()
        self.geo = _Geometry(mesh)
        self._vcells = _vector_cells(self.dofs.cells_p2)

    # ---- scalar P1 -----------------------------------------------------------------
    def p1_mass(self, elements=None) -> CsrMatrix:
        g = self.geo
        w = g.wdet if elements is None else g.wdet * _mask(elements, len(g.det))[:, None]
        local = np.einsum("eq,qi,qj->eij", w, g.v1, g.v1)
        cells = self.dofs.cells_p1
        return _scatter(cells, cells, local, self.dofs.n_T, self.dofs.n_T)

    def p1_stiffness(self, weight=None) -> CsrMatrix:
        g = self.geo
        w = g.wdet if weight is None else g.wdet * np.asarray(weight)[:, None]
        local = np.einsum("eq,eqic,eqjc->eij", w, g.g1, g.g1)
        cells = self.dofs.cells_p1
        return _scatter(cells, cells, local, self.dofs.n_T, self.dofs.n_T)

    def p1_load(self, elements=None, fn=None) -> np.ndarray:
        """``<f, xi_k>``; ``f`` is 1 on ``elements`` (all if None) or ``fn(points)``."""
        g = self.geo
        w = g.wdet.copy()
        if elements is not None:
            w *= _mask(elements, len(g.det))[:, None]
        if fn is not None:
            pts = g.physical_points()
            w *= np.asarray(fn(pts.reshape(-1, 2)), dtype=float).reshape(w.shape)
        local = np.einsum("eq,qi->ei", w, g.v1)
        return np.bincount(self.dofs.cells_p1.ravel(), weights=local.ravel(), minlength=self.dofs.n_T)

    def velocity_at_quadrature(self, eta_u) -> tuple[np.ndarray, np.ndarray]:
        """Velocity ``(nt, nq, 2)`` and its gradient ``(nt, nq, 2, 2)`` (``[..., c, d] = d u_c / d x_d``)."""
        U = np.asarray(eta_u).reshape(-1, 2)[self.dofs.cells_p2]  # (nt, 6, 2)
        u = np.einsum("qb,ebc->eqc", self.geo.v2, U)
        gu = np.einsum("eqbd,ebc->eqcd", self.geo.g2, U)
        return u, gu

    def temperature(self, eta_u=None, skew: bool = False) -> TemperatureOperators:
        """Mass, kappa-weighted diffusion and (if a flow is given) advection matrices.

        With ``skew`` the advection term is ``<u.grad T, xi> + 1/2 <(div u) T, xi>``,
        which equals the plain form for divergence-free ``u`` and is exactly
        skew-symmetric on dofs where ``T`` vanishes on the boundary.
        """
        M = self.p1_mass()
        K = self.p1_stiffness(self.coeffs.kappa(self.mesh.element_region))
        C = None
        if eta_u is not None:
            if np.size(eta_u) != self.dofs.n_u:
                raise ValueError(f"flow has {np.size(eta_u)} velocity dofs, mesh needs {self.dofs.n_u}")
            g = self.geo
            u, gu = self.velocity_at_quadrature(eta_u)
            adv = np.einsum("eqc,eqjc->eqj", u, g.g1)  # u . grad xi_j
            local = np.einsum("eq,qi,eqj->eij", g.wdet, g.v1, adv)
            if skew:
                div = gu[..., 0, 0] + gu[..., 1, 1]
                local += 0.5 * np.einsum("eq,eq,qi,qj->eij", g.wdet, div, g.v1, g.v1)
            cells = self.dofs.cells_p1
            C = _scatter(cells, cells, local, self.dofs.n_T, self.dofs.n_T)
        return TemperatureOperators(M, K, C)

    # ---- vector P2 / P1 ---------------------------------------------------------------
    def p2_mass(self, weight=None) -> np.ndarray:
        g = self.geo
        w = g.wdet if weight is None else g.wdet * np.asarray(weight)[:, None]
        return np.einsum("eq,qi,qj->eij", w, g.v2, g.v2)

    def p2_stiffness_local(self) -> np.ndarray:
        g = self.geo
        return np.einsum("eq,eqic,eqjc->eij", g.wdet, g.g2, g.g2)

    def _expand(self, scalar_local) -> np.ndarray:
        ne = scalar_local.shape[0]
        out = np.zeros((ne, 12, 12))
        out[:, 0::2, 0::2] = scalar_local
        out[:, 1::2, 1::2] = scalar_local
        return out

    def flow(self) -> FlowOperators:
        c, g, d = self.coeffs, self.geo, self.dofs
        alpha = c.alpha(self.mesh.element_region)
        local_A = self._expand(self.p2_stiffness_local() / c.Re + self.p2_mass(alpha))
        A = _scatter(self._vcells, self._vcells, local_A, d.n_u, d.n_u)
        # <d phi_j / d x_c, psi_k>, columns interleaved like the velocity dofs
        div_local = np.einsum("eq,qk,eqjc->ekjc", g.wdet, g.v1, g.g2).reshape(-1, 3, 12)
        B = _scatter(d.cells_p1, self._vcells, div_local, d.n_p, d.n_u)
        grad_local = np.einsum("eq,qj,eqkc->ejck", g.wdet, g.v2, g.g1).reshape(-1, 12, 3)
        Bg = _scatter(self._vcells, d.cells_p1, grad_local, d.n_u, d.n_p)
        return FlowOperators(A, B, Bg)

    def convection(self, eta_u) -> np.ndarray:
        """Assembled ``<(u.grad) u, phi_j>`` for all velocity test functions."""
        g = self.geo
        u, gu = self.velocity_at_quadrature(eta_u)
        conv = np.einsum("eqcd,eqd->eqc", gu, u)
        local = np.einsum("eq,qj,eqc->ejc", g.wdet, g.v2, conv).reshape(-1, 12)
        return np.bincount(self._vcells.ravel(), weights=local.ravel(), minlength=self.dofs.n_u)

    def convection_jacobian(self, eta_u) -> CsrMatrix:
        """Derivative of :meth:`convection`: ``J w = <(w.grad) u + (u.grad) w, phi>``."""
        g = self.geo
        u, gu = self.velocity_at_quadrature(eta_u)
        # (w.grad)u part: row (i,c), col (j,d): phi_i phi_j d_d u_c
        t1 = np.einsum("nq,qi,qj,nqcd->nicjd", g.wdet, g.v2, g.v2, gu)
        # (u.grad)w part: delta_cd phi_i (u . grad phi_j)
        adv = np.einsum("eqd,eqjd->eqj", u, g.g2)
        t2 = np.einsum("eq,qi,eqj->eij", g.wdet, g.v2, adv)
        local = t1.copy()
        local[:, :, 0, :, 0] += t2
        local[:, :, 1, :, 1] += t2
        local = local.reshape(-1, 12, 12)
        return _scatter(self._vcells, self._vcells, local, self.dofs.n_u, self.dofs.n_u)

    def velocity_load(self, fn) -> np.ndarray:
        """``<g, phi_j>`` for a body force ``fn(points) -> (n, 2)``."""
        g = self.geo
        pts = g.physical_points()
        f = np.asarray(fn(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape)
        local = np.einsum("eq,qj,eqc->ejc", g.wdet, g.v2, f).reshape(-1, 12)
        return np.bincount(self._vcells.ravel(), weights=local.ravel(), minlength=self.dofs.n_u)

    def heater_load(self, which) -> np.ndarray:
        """``<1_Theta, xi_k>`` for heater ``which`` (1, 2, "heater1" or "heater2")."""
        tag = {1: HEATER1, 2: HEATER2, "heater1": HEATER1, "heater2": HEATER2}[which]
        elems = np.flatnonzero(self.mesh.element_region == tag)
        if elems.size == 0:
            raise ValueError(f"heater region {which!r} has no elements")
        return self.p1_load(elems)

    # ---- evaluation helpers ----------------------------------------------------------
    def integrate_p1(self, eta, elements=None, fn=None) -> float:
        """``int f(T) dx`` over ``elements`` for a P1 field, ``f`` applied at quadrature points."""
        g = self.geo
        vals = np.asarray(eta)[self.dofs.cells_p1] @ g.v1.T  # (nt, nq)
        if fn is not None:
            vals = fn(vals)
        w = g.wdet if elements is None else g.wdet[elements]
        vals = vals if elements is None else vals[elements]
        return float(np.sum(w * vals))

    def area(self, elements=None) -> float:
        a = np.abs(self.geo.det) / 2
        return float(a.sum() if elements is None else a[elements].sum())


def _mask(elements, n):
    m = np.zeros(n)
    m[np.asarray(elements, dtype=np.int64)] = 1.0
    return m
