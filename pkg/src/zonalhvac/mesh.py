"""Floor plans and structured triangular meshes with region and boundary tags.

Geometry is restricted to axis-aligned rectangles inside ``[0, width] x [0, height]``.
The mesh generator collects every rectangle and vent coordinate as a grid line,
subdivides the gaps to the target element size and splits each cell into
triangles, so all features are represented exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

AIR, WALL, HEATER1, HEATER2 = 0, 1, 2, 3
REGION_NAMES = {AIR: "air", WALL: "wall", HEATER1: "heater1", HEATER2: "heater2"}

WALL_EDGE, OUTLET1, OUTLET2, INLET = 0, 1, 2, 3
SEGMENT_NAMES = {WALL_EDGE: "wall", OUTLET1: "outlet1", OUTLET2: "outlet2", INLET: "inlet"}

SIDES = ("bottom", "right", "top", "left")
# inward unit normal per side of the rectangle
INWARD_NORMAL = {"bottom": (0.0, 1.0), "top": (0.0, -1.0), "left": (1.0, 0.0), "right": (-1.0, 0.0)}

_EPS = 1e-9


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return ((pts[:, 0] >= self.x0 - _EPS) & (pts[:, 0] <= self.x1 + _EPS)
                & (pts[:, 1] >= self.y0 - _EPS) & (pts[:, 1] <= self.y1 + _EPS))

    def overlaps(self, other: Rect) -> bool:
        """True when the interiors intersect (touching edges do not count)."""
        return (min(self.x1, other.x1) - max(self.x0, other.x0) > _EPS
                and min(self.y1, other.y1) - max(self.y0, other.y0) > _EPS)

    def to_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class Segment:
    """Interval ``[start, end]`` along one side of the outer boundary."""

    side: str
    start: float
    end: float

    def __post_init__(self):
        if self.side not in SIDES:
            raise MeshError(f"unknown side {self.side!r}")
        if not self.end > self.start:
            raise MeshError(f"segment on {self.side} must have positive width")

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def inward_normal(self) -> tuple[float, float]:
        return INWARD_NORMAL[self.side]

    def endpoints(self, width: float, height: float) -> np.ndarray:
        return np.array([self._point(self.start, width, height), self._point(self.end, width, height)])

    def midpoint(self, width: float, height: float) -> np.ndarray:
        return np.array(self._point(0.5 * (self.start + self.end), width, height))

    def _point(self, s, width, height):
        return {"bottom": (s, 0.0), "top": (s, height), "left": (0.0, s), "right": (width, s)}[self.side]

    def contains(self, pts, width: float, height: float) -> np.ndarray:
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        if self.side in ("bottom", "top"):
            on = np.abs(y - (0.0 if self.side == "bottom" else height)) < _EPS
            s = x
        else:
            on = np.abs(x - (0.0 if self.side == "left" else width)) < _EPS
            s = y
        return on & (s >= self.start - _EPS) & (s <= self.end + _EPS)

    def overlaps(self, other: Segment) -> bool:
        return self.side == other.side and min(self.end, other.end) - max(self.start, other.start) > _EPS


@dataclass(frozen=True)
class FloorPlan:
    width: float
    height: float
    walls: tuple[Rect, ...] = ()
    openings: tuple[Rect, ...] = ()
    outlets: tuple[Segment, ...] = ()
    inlet: Segment | None = None
    heaters: tuple[Rect, ...] = ()
    zones: tuple[Rect, ...] = ()

    def __post_init__(self):
        dom = Rect(0.0, 0.0, self.width, self.height)
        for name in ("walls", "openings", "heaters", "zones"):
            for r in getattr(self, name):
                if not (r.x0 >= -_EPS and r.y0 >= -_EPS and r.x1 <= self.width + _EPS
                        and r.y1 <= self.height + _EPS and r.x1 > r.x0 and r.y1 > r.y0):
                    raise MeshError(f"{name} rectangle {r.to_list()} is not inside {dom.to_list()}")
        segs = list(self.outlets) + ([self.inlet] if self.inlet else [])
        for s in segs:
            extent = self.width if s.side in ("bottom", "top") else self.height
            if s.start < -_EPS or s.end > extent + _EPS:
                raise MeshError(f"segment {s} leaves the {s.side} side")
        for i, a in enumerate(segs):
            for b in segs[i + 1:]:
                if a.overlaps(b):
                    raise MeshError(f"vent segments {a} and {b} overlap")
        if len(self.heaters) > 2:
            raise MeshError("at most two heater patches are supported")

    @property
    def domain(self) -> Rect:
        return Rect(0.0, 0.0, self.width, self.height)

    def wall_mask(self, pts) -> np.ndarray:
        """Points inside a wall rectangle and not inside an opening cut from it."""
        pts = np.atleast_2d(pts)
        inside = np.zeros(len(pts), dtype=bool)
        for w in self.walls:
            inside |= _strict(w, pts)
        for o in self.openings:
            inside &= ~_strict(o, pts)
        return inside

    def feature_size(self) -> float:
        """Smallest extent among vents, heaters, door openings and zones.

        Wall thickness is excluded: walls are penalization layers that are
        resolved by snapping regardless of the element size.
        """
        sizes = [s.length for s in self.outlets]
        if self.inlet is not None:
            sizes.append(self.inlet.length)
        for r in (*self.heaters, *self.zones):
            sizes += [r.x1 - r.x0, r.y1 - r.y0]
        # an opening spans the wall thickness; only its width along the wall counts
        sizes += [max(r.x1 - r.x0, r.y1 - r.y0) for r in self.openings]
        return min(sizes) if sizes else min(self.width, self.height)


def _strict(r: Rect, pts) -> np.ndarray:
    return ((pts[:, 0] > r.x0 + _EPS) & (pts[:, 0] < r.x1 - _EPS)
            & (pts[:, 1] > r.y0 + _EPS) & (pts[:, 1] < r.y1 - _EPS))


def _canonical_zones() -> tuple[Rect, ...]:
    # 3 x 6 grid of 2 x 2 m squares, three rows per room, none crossing the wall band
    xs = (0.5, 1.5, 2.5)
    ys = (0.5, 1.5, 2.5, 5.5, 6.5, 7.5)
    return tuple(Rect(x, y, x + 2.0, y + 2.0) for y in ys for x in xs)


def canonical_apartment() -> FloorPlan:
    """Two-room 5 x 10 m apartment split by an interior wall with a 1 m door.

    Outlets blow in from the bottom and top edges, the return inlet is on the
    left edge of the lower room, and each room has one 1 x 1 m heater.
    ``zones`` holds the 18 candidate 2 x 2 m target areas (row-major, bottom up).
    """
    return FloorPlan(
        width=5.0,
        height=10.0,
        walls=(Rect(0.0, 4.9, 5.0, 5.1),),
        openings=(Rect(2.0, 4.9, 3.0, 5.1),),
        outlets=(Segment("bottom", 1.0, 1.5), Segment("top", 3.5, 4.0)),
        inlet=Segment("left", 2.0, 2.5),
        heaters=(Rect(0.5, 1.0, 1.5, 2.0), Rect(3.5, 8.0, 4.5, 9.0)),
        zones=_canonical_zones(),
    )


def unit_square() -> FloorPlan:
    return FloorPlan(width=1.0, height=1.0)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray          # (Nv, 2)
    triangles: np.ndarray         # (Nt, 3), counter-clockwise
    edges: np.ndarray             # (Ne, 2), sorted vertex pairs
    tri_edges: np.ndarray         # (Nt, 3), edge ids of local edges (0,1), (1,2), (2,0)
    element_region: np.ndarray    # (Nt,)
    boundary_edges: np.ndarray    # (Nb, 3): v1, v2, segment tag
    boundary_edge_ids: np.ndarray  # (Nb,) index into ``edges``
    floorplan: FloorPlan
    zone_sets: tuple[np.ndarray, ...] = field(default=())

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges[:, :2])

    def zone_elements(self, zone) -> np.ndarray:
        """Triangle indices of a target area: a :class:`Rect`, a zone index, or ``"whole"``."""
        if isinstance(zone, str):
            if zone != "whole":
                raise MeshError(f"unknown zone {zone!r}")
            return np.arange(self.n_triangles)
        if isinstance(zone, (int, np.integer)):
            if not 0 <= zone < len(self.zone_sets):
                raise MeshError(f"zone index {zone} outside 0..{len(self.zone_sets) - 1}")
            return self.zone_sets[zone]
        elems = np.flatnonzero(zone.contains(self.centroids))
        if elems.size == 0:
            raise MeshError(f"zone {zone.to_list()} contains no elements")
        return elems


def _grid_lines(extent: float, cuts, h: float) -> np.ndarray:
    pts = sorted({0.0, extent, *[float(c) for c in cuts]})
    merged = [pts[0]]
    for p in pts[1:]:
        if p - merged[-1] > _EPS:
            merged.append(p)
    lines = []
    for a, b in zip(merged[:-1], merged[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        lines.extend(np.linspace(a, b, n + 1)[:-1])
    lines.append(merged[-1])
    return np.array(lines)


def generate(fp: FloorPlan, target_h: float, pattern: str = "diagonal") -> Mesh:
    """Mesh ``fp`` with cells of size at most ``target_h``.

    ``pattern`` is ``"diagonal"`` (two triangles per cell) or ``"crossed"``
    (four triangles around a cell-centre vertex).
    """
    if not target_h > 0:
        raise MeshError("target_h must be positive")
    feat = fp.feature_size()
    if target_h > feat + _EPS:
        raise MeshError(f"target_h = {target_h:g} m exceeds the smallest geometric feature "
                        f"({feat:g} m); refine the mesh")
    if pattern not in ("diagonal", "crossed"):
        raise MeshError(f"unknown pattern {pattern!r}")

    xcuts, ycuts = [], []
    for r in (*fp.walls, *fp.openings, *fp.heaters, *fp.zones):
        xcuts += [r.x0, r.x1]
        ycuts += [r.y0, r.y1]
    for s in (*fp.outlets, *([fp.inlet] if fp.inlet else [])):
        (xcuts if s.side in ("bottom", "top") else ycuts).extend([s.start, s.end])
    xs = _grid_lines(fp.width, xcuts, target_h)
    ys = _grid_lines(fp.height, ycuts, target_h)
    nx, ny = len(xs) - 1, len(ys) - 1

    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = [np.column_stack([X.ravel(), Y.ravel()])]

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    I, J = I.ravel(), J.ravel()
    a, b, c, d = vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)
    if pattern == "diagonal":
        tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
        order = np.argsort(np.concatenate([2 * np.arange(a.size), 2 * np.arange(a.size) + 1]), kind="stable")
        tris = tris[order]
    else:
        centre = (nx + 1) * (ny + 1) + np.arange(a.size)
        verts.append(np.column_stack([0.5 * (xs[I] + xs[I + 1]), 0.5 * (ys[J] + ys[J + 1])]))
        tris = np.stack([np.column_stack([a, b, centre]), np.column_stack([b, c, centre]),
                         np.column_stack([c, d, centre]), np.column_stack([d, a, centre])], axis=1).reshape(-1, 3)
    vertices = np.concatenate(verts)
    return build_mesh(vertices, tris, fp)


def build_mesh(vertices, triangles, fp: FloorPlan) -> Mesh:
    """Derive edges, region tags and boundary tags for a given triangulation."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    p = vertices[triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    cw = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    triangles = triangles.copy()
    triangles[cw] = triangles[cw][:, [0, 2, 1]]

    local = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    keys = np.sort(local.reshape(-1, 2), axis=1)
    edges, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    tri_edges = inv.reshape(-1, 3)
    if np.any(counts > 2):
        raise MeshError("non-manifold triangulation: an edge is shared by more than two triangles")

    centroids = p.mean(axis=1)
    region = np.full(len(triangles), AIR, dtype=np.int64)
    for tag, r in zip((HEATER1, HEATER2), fp.heaters):
        region[r.contains(centroids)] = tag
    region[fp.wall_mask(centroids)] = WALL

    b_ids = np.flatnonzero(counts == 1)
    mids = 0.5 * (vertices[edges[b_ids, 0]] + vertices[edges[b_ids, 1]])
    tags = np.full(b_ids.size, WALL_EDGE, dtype=np.int64)
    for tag, seg in zip((OUTLET1, OUTLET2), fp.outlets):
        tags[seg.contains(mids, fp.width, fp.height)] = tag
    if fp.inlet is not None:
        tags[fp.inlet.contains(mids, fp.width, fp.height)] = INLET
    bedges = np.column_stack([edges[b_ids], tags])

    zone_sets = tuple(np.flatnonzero(z.contains(centroids)) for z in fp.zones)
    return Mesh(vertices, triangles, edges, tri_edges, region, bedges, b_ids, fp, zone_sets)


def node_counts(m: Mesh) -> tuple[int, int, int]:
    """(N_Te, N_p, N_u): P1 temperature and pressure dofs, vector P2 velocity dofs."""
    nv = m.n_vertices
    return nv, nv, 2 * (nv + m.n_edges)


def write_vtk(path, m: Mesh, point_data: dict | None = None, cell_data: dict | None = None,
              title: str = "zonalhvac mesh") -> Path:
    """Write a legacy ASCII VTK unstructured grid of linear triangles.

    ``point_data`` values are arrays of length ``n_vertices`` (scalars) or
    ``(n_vertices, 2)`` (vectors, padded with a zero z-component).
    """
    path = Path(path)
    nv, nt = m.n_vertices, m.n_triangles
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in m.vertices.tolist()]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in m.triangles.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    cells = {"region": m.element_region}
    cells.update(cell_data or {})
    lines.append(f"CELL_DATA {nt}")
    lines += _vtk_arrays(cells, nt)
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        lines += _vtk_arrays(point_data, nv)
    path.write_text("\n".join(lines) + "\n")
    return path


def _vtk_arrays(arrays: dict, n: int) -> list[str]:
    out = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.shape[0] != n:
            raise ValueError(f"array {name!r} has {arr.shape[0]} entries, expected {n}")
        if arr.ndim == 1:
            kind = "int" if np.issubdtype(arr.dtype, np.integer) else "double"
            out += [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"]
            out += [repr(v) if kind == "double" else str(v) for v in arr.tolist()]
        else:
            out.append(f"VECTORS {name} double")
            out += [f"{a!r} {b!r} 0.0" for a, b in arr[:, :2].astype(float).tolist()]
    return out
