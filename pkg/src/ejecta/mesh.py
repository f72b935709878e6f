"""Unstructured polygonal meshes: connectivity, geometry and vertex motion.

Topology is fixed once a mesh is built. Motion produces a new :class:`Mesh`
that shares the topology and carries new vertex positions and geometry.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DanglingVertex, DegenerateCell, NonManifoldEdge, TangledMesh

log = logging.getLogger(__name__)

BOUNDARY = -1

# Boundary edges are labelled by the dominant direction of their outward normal.
SIDES = ("xmin", "xmax", "ymin", "ymax")

FREE, SLIDE, PINNED = 0, 1, 2


def _shoelace(xy):
    """Signed area of one polygon given as an (n, 2) array."""
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def cell_geometry(cell_vertices, eps_geom=0.0):
    """Area, centroid and inradius of one CCW polygon.

    The inradius is the smallest perpendicular distance from the centroid to an
    edge line, which never exceeds the true inscribed radius of a convex cell.
    """
    xy = np.asarray(cell_vertices, dtype=float)
    if xy.ndim != 2 or xy.shape[0] < 3:
        raise DegenerateCell("a cell needs at least three vertices")
    origin = xy[0]
    rel = xy - origin
    nxt = np.roll(rel, -1, axis=0)
    cross = rel[:, 0] * nxt[:, 1] - nxt[:, 0] * rel[:, 1]
    area = 0.5 * cross.sum()
    if not area > eps_geom:
        raise DegenerateCell(f"cell area {area:.3g} is not positive")
    centroid = ((rel + nxt) * cross[:, None]).sum(axis=0) / (6.0 * area) + origin
    edge = np.roll(xy, -1, axis=0) - xy
    length = np.hypot(edge[:, 0], edge[:, 1])
    to_c = centroid - xy
    dist = (edge[:, 0] * to_c[:, 1] - edge[:, 1] * to_c[:, 0]) / length
    return float(area), centroid, float(dist.min())


@dataclass(frozen=True)
class Topology:
    """Connectivity shared by every position of a moving mesh."""

    cells: tuple                 # per-cell tuple of CCW vertex ids
    cell_nodes: np.ndarray       # (nc, maxv) padded with the first vertex
    cell_nverts: np.ndarray      # (nc,)
    edges: np.ndarray            # (ne, 2) vertex ids (q, q+) in left-cell order
    edge_cells: np.ndarray       # (ne, 2) left cell, right cell or BOUNDARY
    cell_edges: tuple            # per-cell array of edge ids in vertex order
    cells_of_vertex: tuple       # C(q)
    edges_of_vertex: tuple       # K(q)
    neighbors_of_cell: tuple     # F(c)
    vertex_is_boundary: np.ndarray
    n_vertices: int

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)


class Mesh:
    """A polygonal mesh at one set of vertex positions."""

    def __init__(self, topology: Topology, points, eps_geom: float):
        self.topo = topology
        self.points = np.array(points, dtype=float)
        self.points.setflags(write=False)
        self.eps_geom = eps_geom
        self._compute_geometry()

    # --- convenience views -------------------------------------------------
    @property
    def n_cells(self):
        return self.topo.n_cells

    @property
    def n_vertices(self):
        return self.topo.n_vertices

    @property
    def n_edges(self):
        return self.topo.n_edges

    @property
    def edges(self):
        return self.topo.edges

    @property
    def edge_cells(self):
        return self.topo.edge_cells

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.topo.edge_cells[:, 1] == BOUNDARY)

    @property
    def interior_edges(self):
        return np.flatnonzero(self.topo.edge_cells[:, 1] != BOUNDARY)

    def cell_polygon(self, c):
        return self.points[list(self.topo.cells[c])]

    def domain_area(self):
        return float(self.cell_volume.sum())

    # --- geometry -----------------------------------------------------------
    def _compute_geometry(self):
        topo = self.topo
        pts = self.points
        a = pts[topo.edges[:, 0]]
        b = pts[topo.edges[:, 1]]
        d = b - a
        self.edge_length = np.hypot(d[:, 0], d[:, 1])
        if np.any(self.edge_length <= 0.0):
            bad = int(np.flatnonzero(self.edge_length <= 0.0)[0])
            raise TangledMesh(f"edge {bad} has zero length", cell=int(topo.edge_cells[bad, 0]))
        self.edge_normal = np.column_stack((d[:, 1], -d[:, 0])) / self.edge_length[:, None]
        self.edge_midpoint = 0.5 * (a + b)

        nodes = topo.cell_nodes
        xy = pts[nodes]                               # (nc, maxv, 2)
        origin = xy[:, :1, :]
        rel = xy - origin
        nxt = np.roll(rel, -1, axis=1)
        cross = rel[..., 0] * nxt[..., 1] - nxt[..., 0] * rel[..., 1]
        area = 0.5 * cross.sum(axis=1)
        self.cell_volume = area
        bad = np.flatnonzero(~(area > self.eps_geom))
        if bad.size:
            raise TangledMesh(
                f"cell {int(bad[0])} has area {area[bad[0]]:.3g} <= {self.eps_geom:.3g}",
                cell=int(bad[0]),
            )
        cen = ((rel + nxt) * cross[..., None]).sum(axis=1) / (6.0 * area[:, None])
        self.cell_centroid = cen + origin[:, 0, :]

        edge = np.roll(xy, -1, axis=1) - xy
        length = np.hypot(edge[..., 0], edge[..., 1])
        to_c = self.cell_centroid[:, None, :] - xy
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = (edge[..., 0] * to_c[..., 1] - edge[..., 1] * to_c[..., 0]) / length
        dist = np.where(length > 0.0, dist, np.inf)
        self.cell_inradius = dist.min(axis=1)

        for name in ("edge_length", "edge_normal", "edge_midpoint", "cell_volume",
                     "cell_centroid", "cell_inradius"):
            getattr(self, name).setflags(write=False)

    def moved(self, new_points):
        """Same topology at new vertex positions; raises TangledMesh on collapse."""
        return Mesh(self.topo, new_points, self.eps_geom)

    # --- boundary helpers ----------------------------------------------------
    def boundary_side(self, edges=None):
        """Side label index into SIDES for each boundary edge (by outward normal)."""
        if edges is None:
            edges = self.boundary_edges
        n = self.edge_normal[edges]
        horizontal = np.abs(n[:, 0]) >= np.abs(n[:, 1])
        side = np.where(horizontal, np.where(n[:, 0] < 0, 0, 1), np.where(n[:, 1] < 0, 2, 3))
        return side

    def bounding_box(self):
        return self.points.min(axis=0), self.points.max(axis=0)

    def ring_cells(self, c):
        """Cells sharing at least one vertex with cell ``c`` (excluding ``c``)."""
        out = set()
        for q in self.topo.cells[c]:
            out.update(int(k) for k in self.topo.cells_of_vertex[q])
        out.discard(c)
        return sorted(out)


def build_mesh(vertex_positions, cell_vertex_lists) -> Mesh:
    """Build connectivity and geometry from vertex positions and cell vertex lists.

    Clockwise cells are reoriented. Raises DegenerateCell for repeated vertices or
    nonpositive area, NonManifoldEdge when an edge is used by more than two cells
    (or twice with the same orientation), and DanglingVertex for unused vertices.
    """
    pts = np.asarray(vertex_positions, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("vertex positions must be an (n, 2) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("vertex positions must be finite")
    nv = len(pts)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    eps_geom = 1e-14 * float(np.sum((hi - lo) ** 2))

    cells = []
    for c, verts in enumerate(cell_vertex_lists):
        verts = [int(q) for q in verts]
        if len(verts) < 3:
            raise DegenerateCell(f"cell {c} has fewer than three vertices")
        if len(set(verts)) != len(verts):
            raise DegenerateCell(f"cell {c} repeats a vertex: {verts}")
        if min(verts) < 0 or max(verts) >= nv:
            raise ValueError(f"cell {c} references a vertex out of range")
        area = _shoelace(pts[verts])
        if area < 0.0:
            verts = verts[::-1]
            area = -area
        if not area > eps_geom:
            raise DegenerateCell(f"cell {c} has area {area:.3g}")
        cells.append(tuple(verts))

    used = np.zeros(nv, dtype=bool)
    for verts in cells:
        used[list(verts)] = True
    if not used.all():
        raise DanglingVertex(f"vertex {int(np.flatnonzero(~used)[0])} belongs to no cell")

    directed = {}
    edge_index = {}
    edges, edge_cells = [], []
    cell_edges = []
    for c, verts in enumerate(cells):
        ids = []
        n = len(verts)
        for k in range(n):
            a, b = verts[k], verts[(k + 1) % n]
            if (a, b) in directed:
                raise NonManifoldEdge(f"edge ({a}, {b}) traversed twice in the same direction")
            directed[(a, b)] = c
            key = (a, b) if a < b else (b, a)
            e = edge_index.get(key)
            if e is None:
                e = len(edges)
                edge_index[key] = e
                edges.append((a, b))
                edge_cells.append([c, BOUNDARY])
            else:
                if edge_cells[e][1] != BOUNDARY:
                    raise NonManifoldEdge(f"edge ({a}, {b}) shared by more than two cells")
                edge_cells[e][1] = c
            ids.append(e)
        cell_edges.append(np.array(ids, dtype=np.int64))

    edges = np.array(edges, dtype=np.int64)
    edge_cells = np.array(edge_cells, dtype=np.int64)

    cells_of_vertex = [[] for _ in range(nv)]
    for c, verts in enumerate(cells):
        for q in verts:
            cells_of_vertex[q].append(c)
    edges_of_vertex = [[] for _ in range(nv)]
    for e, (a, b) in enumerate(edges):
        edges_of_vertex[a].append(e)
        edges_of_vertex[b].append(e)
    neighbors = [[] for _ in cells]
    for left, right in edge_cells:
        if right != BOUNDARY:
            neighbors[left].append(int(right))
            neighbors[right].append(int(left))

    is_boundary = np.zeros(nv, dtype=bool)
    bnd = edge_cells[:, 1] == BOUNDARY
    is_boundary[edges[bnd].ravel()] = True

    maxv = max(len(v) for v in cells)
    cell_nodes = np.empty((len(cells), maxv), dtype=np.int64)
    for c, verts in enumerate(cells):
        cell_nodes[c, : len(verts)] = verts
        cell_nodes[c, len(verts):] = verts[0]

    topo = Topology(
        cells=tuple(cells),
        cell_nodes=cell_nodes,
        cell_nverts=np.array([len(v) for v in cells], dtype=np.int64),
        edges=edges,
        edge_cells=edge_cells,
        cell_edges=tuple(cell_edges),
        cells_of_vertex=tuple(np.array(sorted(x), dtype=np.int64) for x in cells_of_vertex),
        edges_of_vertex=tuple(np.array(x, dtype=np.int64) for x in edges_of_vertex),
        neighbors_of_cell=tuple(np.array(sorted(x), dtype=np.int64) for x in neighbors),
        vertex_is_boundary=is_boundary,
        n_vertices=nv,
    )
    return Mesh(topo, pts, eps_geom)


def rectangle_mesh(nx, ny, x0=0.0, x1=1.0, y0=0.0, y1=1.0, perturb=0.0, seed=0) -> Mesh:
    """Structured quads on a rectangle, optionally with randomly jittered vertices.

    ``perturb`` is the maximum vertex displacement as a fraction of the local
    spacing. Boundary vertices only slide along their side; corners stay put.
    """
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack((X.ravel(), Y.ravel()))
    if perturb:
        rng = np.random.default_rng(seed)
        dx, dy = (x1 - x0) / nx, (y1 - y0) / ny
        jitter = rng.uniform(-perturb, perturb, size=pts.shape) * (dx, dy)
        i, j = np.divmod(np.arange(len(pts)), ny + 1)
        on_x = (i == 0) | (i == nx)
        on_y = (j == 0) | (j == ny)
        jitter[on_x, 0] = 0.0
        jitter[on_y, 1] = 0.0
        pts = pts + jitter

    def vid(i, j):
        return i * (ny + 1) + j

    cells = [
        (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
        for i in range(nx)
        for j in range(ny)
    ]
    return build_mesh(pts, cells)


def read_mesh(path) -> Mesh:
    """Read the plain-text node/element format.

    Header ``NVERTS NCELLS``, then one ``x y`` line per vertex, then one
    ``n i1 ... in`` line per cell with 0-based vertex ids.
    """
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    nv, nc = int(lines[0][0]), int(lines[0][1])
    pts = np.array([[float(t) for t in ln[:2]] for ln in lines[1 : 1 + nv]])
    cells = []
    for ln in lines[1 + nv : 1 + nv + nc]:
        n = int(ln[0])
        if len(ln) != n + 1:
            raise ValueError(f"cell line {' '.join(ln)!r} declares {n} vertices")
        cells.append([int(t) for t in ln[1:]])
    if len(pts) != nv or len(cells) != nc:
        raise ValueError(f"{path}: expected {nv} vertices and {nc} cells")
    return build_mesh(pts, cells)


def write_mesh(mesh: Mesh, path):
    out = [f"{mesh.n_vertices} {mesh.n_cells}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.points.tolist()]
    out += [" ".join(map(str, (len(c),) + c)) for c in mesh.topo.cells]
    Path(path).write_text("\n".join(out) + "\n")


def vertex_constraints(mesh: Mesh, edge_is_wall):
    """Classify vertices as free, sliding along one wall, or pinned at a wall corner.

    Returns ``(kind, tangent)`` where ``tangent`` is the unit slide direction for
    SLIDE vertices and zero elsewhere.
    """
    edge_is_wall = np.asarray(edge_is_wall, dtype=bool)
    nv = mesh.n_vertices
    kind = np.full(nv, FREE, dtype=np.int8)
    tangent = np.zeros((nv, 2))
    walls = np.flatnonzero(edge_is_wall)
    first = {}
    for e in walls:
        n = mesh.edge_normal[e]
        for q in mesh.edges[e]:
            q = int(q)
            if q not in first:
                first[q] = n
                kind[q] = SLIDE
                tangent[q] = (-n[1], n[0])
            elif kind[q] == SLIDE:
                n0 = first[q]
                if abs(n0[0] * n[1] - n0[1] * n[0]) > 1e-10:
                    kind[q] = PINNED
                    tangent[q] = 0.0
    return kind, tangent


def apply_constraints(vel, kind, tangent):
    """Project vertex vectors onto their admissible directions."""
    out = np.array(vel, dtype=float, copy=True)
    slide = kind == SLIDE
    if np.any(slide):
        t = tangent[slide]
        out[slide] = t * np.einsum("ij,ij->i", out[slide], t)[:, None]
    out[kind == PINNED] = 0.0
    return out


def vertex_motion(mode, contact_velocities, mesh: Mesh, dt, kind=None, tangent=None,
                  smooth_passes=3):
    """Grid velocity and moved mesh for one step.

    ``eulerian`` keeps the mesh fixed, ``lagrangian`` moves vertices with the
    contact velocities, ``smoothed`` relaxes the Lagrangian displacement field by
    ``smooth_passes`` rounds of neighbour averaging over interior vertices.
    Wall vertices only slide tangentially. Returns ``(w, new_mesh)``.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    u = np.asarray(contact_velocities, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("contact velocities must be finite")
    if mode == "eulerian":
        return np.zeros_like(mesh.points), mesh
    if kind is None:
        kind = np.zeros(mesh.n_vertices, dtype=np.int8)
        tangent = np.zeros((mesh.n_vertices, 2))
    disp = dt * apply_constraints(u, kind, tangent)
    if mode == "smoothed":
        disp = _smooth_displacement(mesh, disp, smooth_passes)
    elif mode != "lagrangian":
        raise ValueError(f"unknown motion mode {mode!r}")
    new_points = mesh.points + disp
    new_mesh = mesh.moved(new_points)
    w = (new_mesh.points - mesh.points) / dt
    return w, new_mesh


def _smooth_displacement(mesh, disp, passes):
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    nv = mesh.n_vertices
    degree = np.bincount(a, minlength=nv) + np.bincount(b, minlength=nv)
    interior = ~mesh.topo.vertex_is_boundary
    disp = disp.copy()
    for _ in range(passes):
        avg = np.empty_like(disp)
        for k in range(2):
            s = np.bincount(a, weights=disp[b, k], minlength=nv)
            s += np.bincount(b, weights=disp[a, k], minlength=nv)
            avg[:, k] = s / degree
        disp[interior] = 0.5 * (disp[interior] + avg[interior])
    return disp
