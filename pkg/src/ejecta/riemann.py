"""Nodal contact-velocity solver and HLLC-2D edge fluxes on a moving mesh.

All states handed to the per-edge functions live in the rotated edge frame:
component 1 is the momentum normal to the edge, component 2 the tangential one.
The functions broadcast over leading axes; the ``*_mesh`` helpers apply them to
every edge of a mesh at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import state as st
from .errors import DegenerateFan, NonPhysicalState, SingularNodalMatrix
from .mesh import BOUNDARY, FREE, PINNED, SIDES, SLIDE, Mesh

TRANSMISSIVE, WALL, PRESCRIBED = "transmissive", "wall", "prescribed"
BC_KINDS = (TRANSMISSIVE, WALL, PRESCRIBED)

COND_LIMIT = 1e12


@dataclass(frozen=True)
class WaveFan:
    s_left: np.ndarray
    s_star: np.ndarray
    s_right: np.ndarray
    p_star_left: np.ndarray
    p_star_right: np.ndarray


@dataclass
class BoundaryConditions:
    """Boundary kind per side of the domain, keyed by ``xmin/xmax/ymin/ymax``."""

    sides: dict = field(default_factory=lambda: {s: WALL for s in SIDES})
    farfield: np.ndarray | None = None   # conservative state for PRESCRIBED sides

    def __post_init__(self):
        for side, kind in self.sides.items():
            if side not in SIDES:
                raise ValueError(f"unknown boundary side {side!r}")
            if kind not in BC_KINDS:
                raise ValueError(f"unknown boundary kind {kind!r} on {side}")
        if PRESCRIBED in self.sides.values() and self.farfield is None:
            raise ValueError("prescribed boundaries need a far-field state")

    def edge_kinds(self, mesh: Mesh):
        """Kind string for every boundary edge of ``mesh`` (same order as boundary_edges)."""
        side = mesh.boundary_side()
        return np.array([self.sides.get(SIDES[s], WALL) for s in side], dtype=object)


# --- one-dimensional pieces -------------------------------------------------

def wave_estimates(prim_L, prim_R, gas: st.GasModel):
    """Davis bounds on the fastest left- and right-going signals."""
    cL = st.sound_speed(prim_L, gas)
    cR = st.sound_speed(prim_R, gas)
    uL = np.asarray(prim_L)[..., 1]
    uR = np.asarray(prim_R)[..., 1]
    return np.minimum(uL - cL, uR - cR), np.maximum(uL + cL, uR + cR)


def edge_contact_speed(prim_L, prim_R, s_left, s_right):
    """Classical HLLC contact speed ``v*`` and the impedances ``alpha_L, alpha_R``."""
    prim_L = np.asarray(prim_L, dtype=float)
    prim_R = np.asarray(prim_R, dtype=float)
    alpha_L = -prim_L[..., 0] * (s_left - prim_L[..., 1])
    alpha_R = prim_R[..., 0] * (s_right - prim_R[..., 1])
    total = alpha_L + alpha_R
    if np.any(~(total > 0.0)):
        raise DegenerateFan("impedance sum is not positive (vacuum-like Riemann problem)")
    vstar = (prim_L[..., 3] - prim_R[..., 3]
             + alpha_L * prim_L[..., 1] + alpha_R * prim_R[..., 1]) / total
    return vstar, alpha_L, alpha_R


def star_pressures(prim_L, prim_R, s_left, s_right, s_star):
    pL = prim_L[..., 3] + prim_L[..., 0] * (s_left - prim_L[..., 1]) * (s_star - prim_L[..., 1])
    pR = prim_R[..., 3] + prim_R[..., 0] * (s_right - prim_R[..., 1]) * (s_star - prim_R[..., 1])
    return pL, pR


def star_state(cons_H, prim_H, s_H, s_star, check=True):
    """HLLC intermediate state on one side of the contact."""
    cons_H = np.asarray(cons_H, dtype=float)
    prim_H = np.asarray(prim_H, dtype=float)
    rho, u, v, p = (prim_H[..., i] for i in range(4))
    denom = s_H - s_star
    if check:
        scale = np.maximum(np.abs(s_H), np.abs(s_star)) + np.abs(u)
        if np.any(np.abs(denom) <= 1e-14 * np.maximum(scale, 1e-300)):
            raise DegenerateFan("outer wave and contact coincide")
    safe = np.where(denom == 0.0, 1.0, denom)
    factor = rho * (s_H - u) / safe
    out = np.empty(np.broadcast_shapes(cons_H.shape, np.shape(factor) + (4,)))
    out[..., 0] = factor
    out[..., 1] = factor * s_star
    out[..., 2] = factor * v
    out[..., 3] = factor * (cons_H[..., 3] / rho + (s_star - u) * (s_star + p / (rho * (s_H - u))))
    return out


def _regions(w, fan: WaveFan, side):
    """Integer region 0..3 selected by grid speed ``w``, using first-match ordering."""
    sL, sS, sR = fan.s_left, fan.s_star, fan.s_right
    if side == "left":
        conds = [w <= sL, w <= sS, w <= sR]
    else:
        conds = [w < sL, w < sS, w < sR]
    return np.select(conds, [0, 1, 2], default=3)


def _pressure_vec(p, speed):
    d = np.zeros(np.shape(p) + (4,))
    d[..., 1] = p
    d[..., 3] = p * speed
    return d


def hllc2d_pair(w, cons_L, cons_R, prim_L, prim_R, fan: WaveFan):
    """Left-side and right-side HLLC-2D fluxes for grid speed ``w``, sharing the work."""
    cons_L = np.asarray(cons_L, dtype=float)
    cons_R = np.asarray(cons_R, dtype=float)
    w = np.asarray(w, dtype=float)
    sS = fan.s_star
    uL, uR = prim_L[..., 1], prim_R[..., 1]
    DLs = _pressure_vec(fan.p_star_left, sS)
    DRs = _pressure_vec(fan.p_star_right, sS)
    outer_L = cons_L * (uL - w)[..., None] + _pressure_vec(prim_L[..., 3], uL)
    outer_R = cons_R * (uR - w)[..., None] + _pressure_vec(prim_R[..., 3], uR)
    # Star states are only used where their region is nonempty, so a zero
    # denominator (outer wave coinciding with the contact) is harmless here.
    rel = (sS - w)[..., None]
    star_L = star_state(cons_L, prim_L, fan.s_left, sS, check=False) * rel
    star_R = star_state(cons_R, prim_R, fan.s_right, sS, check=False) * rel
    out = []
    for side, D_own in (("left", DLs), ("right", DRs)):
        region = _regions(w, fan, side)[..., None]
        oL = outer_L if side == "left" else outer_L - DLs + DRs
        oR = outer_R if side == "right" else outer_R - DRs + DLs
        out.append(np.where(region == 0, oL,
                            np.where(region == 1, star_L + D_own,
                                     np.where(region == 2, star_R + D_own, oR))))
    return out[0], out[1]


def hllc2d_flux(side, w, cons_L, cons_R, prim_L, prim_R, fan: WaveFan):
    """Flux through an edge moving with normal speed ``w`` as seen by one side.

    ``side='left'`` gives the flux the left cell loses, ``side='right'`` the
    flux the right cell gains. The two differ only by ``D_L* - D_R*``, which the
    nodal solver balances around each vertex.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    left, right = hllc2d_pair(w, cons_L, cons_R, np.asarray(prim_L, float),
                              np.asarray(prim_R, float), fan)
    return left if side == "left" else right


def make_fan(prim_L, prim_R, s_left, s_right, s_star):
    pL, pR = star_pressures(prim_L, prim_R, s_left, s_right, s_star)
    return WaveFan(np.asarray(s_left, float), np.asarray(s_star, float),
                   np.asarray(s_right, float), pL, pR)


def edge_flux(normal, w_q, w_qp, ustar_q, ustar_qp, cons_c, cons_d, gas):
    """Vertex-averaged HLLC-2D flux pair for a single edge, in the global frame.

    ``cons_c`` is the cell the normal points away from. Returns ``(F_c, F_d)``
    per unit length: ``F_c`` leaves cell c, ``F_d`` enters cell d.
    """
    normal = np.asarray(normal, dtype=float)
    UL = st.rotate(cons_c, normal)
    UR = st.rotate(cons_d, normal)
    WL, WR = st.to_primitive(UL, gas), st.to_primitive(UR, gas)
    sL, sR = wave_estimates(WL, WR, gas)
    left = np.zeros(4)
    right = np.zeros(4)
    for w, us in ((w_q, ustar_q), (w_qp, ustar_qp)):
        s_star = float(np.dot(us, normal))
        fan = make_fan(WL, WR, sL, sR, s_star)
        wn = float(np.dot(w, normal))
        fl, fr = hllc2d_pair(wn, UL, UR, WL, WR, fan)
        left += 0.5 * fl
        right += 0.5 * fr
    return st.rotate_back(left, normal), st.rotate_back(right, normal)


def ghost_state(interior_cons, normal, kind, farfield=None):
    """Outside state for a boundary edge (global frame)."""
    interior_cons = np.asarray(interior_cons, dtype=float)
    if kind == TRANSMISSIVE:
        return interior_cons.copy()
    if kind == WALL:
        rot = st.rotate(interior_cons, normal)
        rot[..., 1] = -rot[..., 1]
        return st.rotate_back(rot, normal)
    if kind == PRESCRIBED:
        if farfield is None:
            raise ValueError("prescribed boundary needs a far-field state")
        return np.broadcast_to(np.asarray(farfield, dtype=float), interior_cons.shape).copy()
    raise ValueError(f"unknown boundary kind {kind!r}")


def nodal_velocity(lengths, normals, alpha_sum, vstar, kind=FREE, tangent=None):
    """Contact velocity of one vertex from the Riemann data of its edges."""
    lengths = np.asarray(lengths, dtype=float)
    normals = np.asarray(normals, dtype=float)
    vstar = np.asarray(vstar, dtype=float)
    wk = lengths * np.asarray(alpha_sum, dtype=float)
    if np.any(wk < 0.0) or not np.all(np.isfinite(wk)):
        raise ValueError("edge weights must be finite and nonnegative")
    M = np.einsum("k,ki,kj->ij", wk, normals, normals)
    b = np.einsum("k,k,ki->i", wk, vstar, normals)
    t = np.zeros((1, 2)) if tangent is None else np.asarray(tangent, dtype=float).reshape(1, 2)
    u, singular = _solve_nodal(M[0, 0:1], M[0, 1:2], M[1, 1:2], b[0:1], b[1:2],
                               np.array([kind]), t)
    if singular[0]:
        return _fallback_velocity(lengths, normals, vstar)
    return u[0]


def _fallback_velocity(lengths, normals, vstar):
    if lengths.sum() <= 0.0:
        raise SingularNodalMatrix("vertex has no edge weight")
    return (lengths * vstar) @ normals / lengths.sum()


def _solve_nodal(mxx, mxy, myy, bx, by, kind, tangent):
    """Vectorised 2x2 solves; returns velocities and a mask of singular free vertices.

    Ill-conditioned matrices get a relative diagonal shift of 1e-12; wall
    vertices solve only along their tangent and corner vertices are pinned.
    """
    n = len(mxx)
    u = np.zeros((n, 2))
    free = kind == FREE
    half = 0.5 * (mxx + myy)
    det = mxx * myy - mxy * mxy
    disc = np.sqrt(np.maximum(half * half - det, 0.0))
    lam_max, lam_min = half + disc, half - disc
    ill = free & ~(lam_min * COND_LIMIT > lam_max)
    if np.any(ill):
        reg = 1e-12 * half
        mxx = np.where(ill, mxx + reg, mxx)
        myy = np.where(ill, myy + reg, myy)
        det = mxx * myy - mxy * mxy
    ok = free & (det > 0.0)
    if np.any(ok):
        inv = 1.0 / det[ok]
        u[ok, 0] = (myy[ok] * bx[ok] - mxy[ok] * by[ok]) * inv
        u[ok, 1] = (mxx[ok] * by[ok] - mxy[ok] * bx[ok]) * inv
    slide = kind == SLIDE
    if np.any(slide):
        t = tangent[slide]
        tMt = (mxx[slide] * t[:, 0] ** 2 + 2 * mxy[slide] * t[:, 0] * t[:, 1]
               + myy[slide] * t[:, 1] ** 2)
        tb = bx[slide] * t[:, 0] + by[slide] * t[:, 1]
        s = np.where(tMt > 0.0, tb / np.where(tMt > 0.0, tMt, 1.0), 0.0)
        u[slide] = t * s[:, None]
    u[kind == PINNED] = 0.0
    return u, free & ~(det > 0.0)


# --- whole-mesh evaluation ----------------------------------------------------

@dataclass
class EdgeProblems:
    """Rotated left/right states and 1-D HLLC data for every edge."""

    UL: np.ndarray
    UR: np.ndarray
    WL: np.ndarray
    WR: np.ndarray
    s_left: np.ndarray
    s_right: np.ndarray
    alpha_L: np.ndarray
    alpha_R: np.ndarray
    vstar: np.ndarray


def ghost_states_mesh(mesh: Mesh, cons, bc: BoundaryConditions):
    """Right-hand cell states for all edges; boundary edges get ghost states."""
    left, right = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    UR = np.empty((mesh.n_edges, 4))
    interior = right != BOUNDARY
    UR[interior] = cons[right[interior]]
    bnd = np.flatnonzero(~interior)
    if bnd.size:
        kinds = bc.edge_kinds(mesh)
        for kind in BC_KINDS:
            sel = bnd[kinds == kind]
            if sel.size:
                UR[sel] = ghost_state(cons[left[sel]], mesh.edge_normal[sel], kind, bc.farfield)
    return UR


def edge_problems(mesh: Mesh, cons, gas: st.GasModel, bc: BoundaryConditions) -> EdgeProblems:
    N = mesh.edge_normal
    UL = st.rotate(cons[mesh.edge_cells[:, 0]], N)
    UR = st.rotate(ghost_states_mesh(mesh, cons, bc), N)
    try:
        WL = st.to_primitive(UL, gas)
        WR = st.to_primitive(UR, gas)
    except NonPhysicalState as exc:
        edge = exc.cell if exc.cell is not None else 0
        raise NonPhysicalState(f"{exc} (edge {edge}, cell {int(mesh.edge_cells[edge, 0])})",
                               cell=int(mesh.edge_cells[edge, 0])) from exc
    sL, sR = wave_estimates(WL, WR, gas)
    vstar, aL, aR = edge_contact_speed(WL, WR, sL, sR)
    return EdgeProblems(UL, UR, WL, WR, sL, sR, aL, aR, vstar)


def nodal_velocities(mesh: Mesh, prob: EdgeProblems, kind, tangent):
    """Contact velocity at every vertex, plus the relative residual of the nodal balance."""
    nv = mesh.n_vertices
    wk = mesh.edge_length * (prob.alpha_L + prob.alpha_R)
    nx, ny = mesh.edge_normal[:, 0], mesh.edge_normal[:, 1]
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]

    def gather(values):
        return np.bincount(a, values, nv) + np.bincount(b, values, nv)

    mxx, mxy, myy = gather(wk * nx * nx), gather(wk * nx * ny), gather(wk * ny * ny)
    bx, by = gather(wk * prob.vstar * nx), gather(wk * prob.vstar * ny)
    ustar, singular = _solve_nodal(mxx, mxy, myy, bx, by, kind, tangent)
    for q in np.flatnonzero(singular):
        ks = mesh.topo.edges_of_vertex[q]
        ustar[q] = _fallback_velocity(mesh.edge_length[ks], mesh.edge_normal[ks], prob.vstar[ks])
    return ustar


def nodal_residual(mesh: Mesh, prob: EdgeProblems, ustar):
    """Per-vertex residual ``sum_k L_k (aL+aR)(u*.N_k - v*_k) N_k`` and its scale."""
    nv = mesh.n_vertices
    wk = mesh.edge_length * (prob.alpha_L + prob.alpha_R)
    N = mesh.edge_normal
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    res = np.zeros((nv, 2))
    scale = np.zeros(nv)
    for ends in (a, b):
        gap = np.einsum("ij,ij->i", ustar[ends], N) - prob.vstar
        for k in range(2):
            res[:, k] += np.bincount(ends, wk * gap * N[:, k], nv)
        scale += np.bincount(ends, wk * np.abs(prob.vstar), nv)
    return res, scale


@dataclass
class FluxResult:
    residual: np.ndarray          # (nc, 4) sum of L * F leaving each cell
    boundary_flux: np.ndarray     # (4,) total leaving through boundary edges, per unit time
    boundary_defect: np.ndarray   # (4,) nodal imbalance attributed to boundary vertices
    interior_defect: np.ndarray   # (4,) nodal imbalance at interior vertices (should vanish)


def mesh_fluxes(mesh: Mesh, prob: EdgeProblems, ustar, w) -> FluxResult:
    """HLLC-2D fluxes on all edges and their accumulation into cells.

    Geometry (lengths, normals) is taken from ``mesh``; ``ustar`` and ``w`` are
    per-vertex contact and grid velocities.
    """
    N = mesh.edge_normal
    L = mesh.edge_length
    ne, nc, nv = mesh.n_edges, mesh.n_cells, mesh.n_vertices
    F_left = np.zeros((ne, 4))
    F_right = np.zeros((ne, 4))
    defect_v = np.zeros((nv, 4))
    interior = mesh.edge_cells[:, 1] != BOUNDARY
    for j in range(2):
        q = mesh.edges[:, j]
        s_star = np.einsum("ij,ij->i", ustar[q], N)
        wn = np.einsum("ij,ij->i", w[q], N)
        fan = make_fan(prob.WL, prob.WR, prob.s_left, prob.s_right, s_star)
        fl, fr = hllc2d_pair(wn, prob.UL, prob.UR, prob.WL, prob.WR, fan)
        F_left += 0.5 * fl
        F_right += 0.5 * fr
        jump = 0.5 * L * (fan.p_star_left - fan.p_star_right) * interior
        comps = (np.zeros(ne), jump * N[:, 0], jump * N[:, 1], jump * s_star)
        for k in range(1, 4):
            defect_v[:, k] += np.bincount(q, comps[k], nv)
    F_left = st.rotate_back(F_left, N) * L[:, None]
    F_right = st.rotate_back(F_right, N) * L[:, None]

    left, right = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    residual = np.zeros((nc, 4))
    for k in range(4):
        residual[:, k] = np.bincount(left, F_left[:, k], nc)
        residual[:, k] -= np.bincount(right[interior], F_right[interior, k], nc)
    vb = mesh.topo.vertex_is_boundary
    return FluxResult(
        residual=residual,
        boundary_flux=F_left[~interior].sum(axis=0),
        boundary_defect=defect_v[vb].sum(axis=0),
        interior_defect=defect_v[~vb].sum(axis=0),
    )
