"""Host-cell search for particles on a (possibly moved) polygonal mesh.

Points lying exactly on an edge or vertex belong to the incident cell with the
smallest index, so every point of the domain has exactly one owner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LostParticle
from .mesh import Mesh

OUTSIDE_DOMAIN = -1
INSIDE, ON_BOUNDARY, OUTSIDE = 1, 0, -1

_CHUNK = 4096


@dataclass(frozen=True)
class LocateResult:
    cell: int
    hops: int
    ring: int = 0


def _canonical(A, B):
    """Order each edge's endpoints by (y, x) so that cells sharing an edge
    evaluate it with identical floating-point operations."""
    swap = (A[..., 1] > B[..., 1]) | ((A[..., 1] == B[..., 1]) & (A[..., 0] > B[..., 0]))
    lo = np.where(swap[..., None], B, A)
    hi = np.where(swap[..., None], A, B)
    return lo, hi


def _classify(px, py, A, B):
    A, B = _canonical(A, B)
    ex = B[..., 0] - A[..., 0]
    ey = B[..., 1] - A[..., 1]
    cross = ex * (py - A[..., 1]) - ey * (px - A[..., 0])
    real = (ex != 0.0) | (ey != 0.0)
    in_box = ((np.minimum(A[..., 0], B[..., 0]) <= px) & (px <= np.maximum(A[..., 0], B[..., 0]))
              & (A[..., 1] <= py) & (py <= B[..., 1]))
    on = np.any(real & (cross == 0.0) & in_box, axis=-1)
    straddle = (A[..., 1] <= py) & (py < B[..., 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = A[..., 0] + ex * (py - A[..., 1]) / ey
    odd = np.count_nonzero(straddle & (px < xcross), axis=-1) % 2 == 1
    return np.where(on, ON_BOUNDARY, np.where(odd, INSIDE, OUTSIDE))


def classify_point(x, polygon):
    """+1 strictly inside, 0 on the boundary, -1 outside (crossing-number test)."""
    poly = np.asarray(polygon, dtype=float)
    return int(_classify(float(x[0]), float(x[1]), poly, np.roll(poly, -1, axis=0)))


def point_in_polygon(x, polygon):
    """Closed-polygon membership without any tie-break."""
    return classify_point(x, polygon) != OUTSIDE


def _edge_table(mesh: Mesh):
    """Canonically ordered cell edges as (nc, maxv) arrays, cached on the mesh."""
    table = getattr(mesh, "_tracking_edges", None)
    if table is None:
        nodes = mesh.topo.cell_nodes
        A, B = _canonical(mesh.points[nodes], mesh.points[np.roll(nodes, -1, axis=1)])
        ex = B[..., 0] - A[..., 0]
        ey = B[..., 1] - A[..., 1]
        table = dict(ax=A[..., 0], ay=A[..., 1], by=B[..., 1], ex=ex, ey=ey,
                     xlo=np.minimum(A[..., 0], B[..., 0]), xhi=np.maximum(A[..., 0], B[..., 0]),
                     real=(ex != 0.0) | (ey != 0.0))
        mesh._tracking_edges = table
    return table


def _classify_many(mesh: Mesh, X, cells):
    """Vectorised ``classify_point`` for points ``X`` against cells ``cells``."""
    t = _edge_table(mesh)
    px = X[:, 0:1]
    py = X[:, 1:2]
    ax, ay, by = t["ax"][cells], t["ay"][cells], t["by"][cells]
    ex, ey = t["ex"][cells], t["ey"][cells]
    dy = py - ay
    cross = ex * dy - ey * (px - ax)
    in_box = (t["xlo"][cells] <= px) & (px <= t["xhi"][cells]) & (ay <= py) & (py <= by)
    on = np.any(t["real"][cells] & (cross == 0.0) & in_box, axis=1)
    straddle = (ay <= py) & (py < by)
    xcross = ax + ex * dy / np.where(straddle, ey, 1.0)
    odd = np.count_nonzero(straddle & (px < xcross), axis=1) % 2 == 1
    return np.where(on, ON_BOUNDARY, np.where(odd, INSIDE, OUTSIDE))


def point_in_cell(mesh: Mesh, x, c):
    """Whether cell ``c`` owns point ``x`` under the smallest-index tie-break."""
    x = np.asarray(x, dtype=float).reshape(1, 2)
    where = _classify_many(mesh, x, np.array([c]))[0]
    if where == INSIDE:
        return True
    if where == OUTSIDE:
        return False
    lower = [d for d in mesh.ring_cells(c) if d < c]
    if not lower:
        return True
    others = _classify_many(mesh, np.repeat(x, len(lower), axis=0), np.array(lower))
    return bool(np.all(others == OUTSIDE))


def cells_contain(mesh: Mesh, X, cells):
    """Vectorised ownership test of points ``X`` by ``cells`` (tie-break included)."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    cells = np.asarray(cells, dtype=np.int64)
    out = np.zeros(len(X), dtype=bool)
    if not len(X):
        return out
    where = _classify_many(mesh, X, cells)
    out[where == INSIDE] = True
    for i in np.flatnonzero(where == ON_BOUNDARY):
        out[i] = point_in_cell(mesh, X[i], int(cells[i]))
    return out


def brute_force_locate(mesh: Mesh, x):
    """Linear scan over every cell; returns the owning cell or OUTSIDE_DOMAIN."""
    x = np.asarray(x, dtype=float).reshape(1, 2)
    nc = mesh.n_cells
    for start in range(0, nc, _CHUNK):
        cells = np.arange(start, min(start + _CHUNK, nc))
        where = _classify_many(mesh, np.repeat(x, len(cells), axis=0), cells)
        hit = np.flatnonzero(where != OUTSIDE)
        if hit.size:
            # The first closed hit has the smallest index among candidates.
            return int(cells[hit[0]])
    return OUTSIDE_DOMAIN


def brute_force_locate_many(mesh: Mesh, X):
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    return np.array([brute_force_locate(mesh, x) for x in X], dtype=np.int64)


def _search_order(mesh: Mesh, hint, max_ring):
    """Yield ``(cell, ring)``: the hint, its edge neighbours, the rest of the
    cells sharing a vertex with it, then further vertex rings."""
    yield hint, 0
    first = [int(d) for d in mesh.topo.neighbors_of_cell[hint]]
    layer = first + [d for d in mesh.ring_cells(hint) if d not in first]
    seen = {hint, *layer}
    for ring in range(1, max_ring + 1):
        for d in layer:
            yield d, ring
        nxt = []
        for c in layer:
            for d in mesh.ring_cells(c):
                if d not in seen:
                    seen.add(d)
                    nxt.append(d)
        if not nxt:
            return
        layer = nxt


def locate(mesh: Mesh, x, hint, max_ring=3):
    """Find the owner of ``x`` by searching outward from ``hint``.

    Returns OUTSIDE_DOMAIN (as ``cell``) when ``x`` is outside the mesh. Raises
    LostParticle when the point is inside the mesh but further than
    ``max_ring`` rings from the hint.
    """
    x = np.asarray(x, dtype=float)
    hops = 0
    for c, ring in _search_order(mesh, int(hint), max_ring):
        hops += 1
        if point_in_cell(mesh, x, c):
            return LocateResult(c, hops, ring)
    owner = brute_force_locate(mesh, x)
    if owner != OUTSIDE_DOMAIN:
        raise LostParticle(
            f"point ({x[0]:.17g}, {x[1]:.17g}) lies in cell {owner}, more than {max_ring} "
            f"rings from cell {hint}", particle=None)
    return LocateResult(OUTSIDE_DOMAIN, hops, max_ring)


def first_ring_table(mesh: Mesh):
    """Per-cell search order over ring 0 and ring 1, padded with -1 (cached per topology)."""
    topo = mesh.topo
    table = getattr(topo, "_first_ring", None)
    if table is None:
        orders = []
        for c in range(mesh.n_cells):
            first = [int(d) for d in topo.neighbors_of_cell[c]]
            orders.append([c] + first + [d for d in mesh.ring_cells(c) if d not in first])
        width = max(len(o) for o in orders)
        table = np.full((mesh.n_cells, width), -1, dtype=np.int64)
        for c, o in enumerate(orders):
            table[c, : len(o)] = o
        object.__setattr__(topo, "_first_ring", table)
    return table


def locate_many(mesh: Mesh, X, hints, max_ring=3):
    """Locate many points; returns ``(cells, rings)``.

    The hint cell and its first ring are checked in vectorised passes; points
    not resolved there (or lying exactly on an edge) go through :func:`locate`.
    """
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    hints = np.asarray(hints, dtype=np.int64)
    cells = hints.copy()
    rings = np.zeros(len(X), dtype=np.int64)
    if not len(X):
        return cells, rings
    where = _classify_many(mesh, X, hints)
    pending = np.flatnonzero(where != INSIDE)
    slow = []
    if pending.size:
        table = first_ring_table(mesh)[hints[pending]]
        found = np.zeros(len(pending), dtype=bool)
        for j in range(1, table.shape[1]):
            todo = np.flatnonzero(~found & (table[:, j] >= 0))
            if not todo.size:
                break
            cand = table[todo, j]
            res = _classify_many(mesh, X[pending[todo]], cand)
            hit = res == INSIDE
            cells[pending[todo[hit]]] = cand[hit]
            rings[pending[todo[hit]]] = 1
            found[todo[hit]] = True
            # Edge and vertex cases need the tie-break; resolve them one by one.
            edge = todo[res == ON_BOUNDARY]
            found[edge] = True
            slow.extend(pending[edge].tolist())
        slow.extend(pending[~found].tolist())
        # A point on the hint's own boundary is also a tie-break case.
        slow.extend(pending[where[pending] == ON_BOUNDARY].tolist())
    for i in sorted(set(slow)):
        try:
            res = locate(mesh, X[i], int(hints[i]), max_ring)
        except LostParticle as exc:
            raise LostParticle(str(exc), particle=int(i)) from None
        cells[i] = res.cell
        rings[i] = res.ring
    return cells, rings


def segment_exit(mesh: Mesh, start, end):
    """First boundary edge crossed by the segment start->end.

    Returns ``(edge, t)`` with ``t`` in [0, 1] the crossing parameter, or
    ``(None, None)`` if no boundary edge is crossed.
    """
    edges = mesh.boundary_edges
    a = mesh.points[mesh.edges[edges, 0]]
    b = mesh.points[mesh.edges[edges, 1]]
    d = np.asarray(end, float) - np.asarray(start, float)
    e = b - a
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    rel = a - np.asarray(start, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * e[:, 1] - rel[:, 1] * e[:, 0]) / denom
        s = (rel[:, 0] * d[1] - rel[:, 1] * d[0]) / denom
    ok = (denom != 0.0) & (t >= 0.0) & (t <= 1.0) & (s >= 0.0) & (s <= 1.0)
    if not np.any(ok):
        return None, None
    k = np.flatnonzero(ok)[np.argmin(t[ok])]
    return int(edges[k]), float(t[k])
