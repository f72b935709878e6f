import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from ejecta.errors import DanglingVertex, DegenerateCell, NonManifoldEdge, TangledMesh
from ejecta.mesh import (FREE, PINNED, SLIDE, build_mesh, cell_geometry, read_mesh,
                         rectangle_mesh, vertex_constraints, vertex_motion, write_mesh)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def test_two_triangle_square():
    m = build_mesh(SQUARE, [(0, 1, 2), (0, 2, 3)])
    assert (m.n_vertices, m.n_edges, m.n_cells) == (4, 5, 2)
    assert len(m.interior_edges) == 1
    assert m.domain_area() == pytest.approx(1.0, rel=1e-15)


def test_shock_tube_grid_cell_areas():
    m = rectangle_mesh(400, 4, -0.5, 0.5, 0.0, 0.1)
    assert m.n_cells == 1600
    assert np.allclose(m.cell_volume, 6.25e-5, rtol=1e-12)


def test_repeated_vertex_is_degenerate():
    with pytest.raises(DegenerateCell):
        build_mesh(SQUARE, [(0, 1, 1, 2)])


def test_clockwise_cells_are_reoriented():
    m = build_mesh(SQUARE, [(0, 3, 2, 1)])
    assert m.cell_volume[0] == pytest.approx(1.0)


def test_unused_vertex_and_overused_edge_are_rejected():
    with pytest.raises(DanglingVertex):
        build_mesh(np.vstack([SQUARE, [[5.0, 5.0]]]), [(0, 1, 2, 3)])
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 0.5]])
    with pytest.raises(NonManifoldEdge):
        build_mesh(pts, [(0, 1, 2), (0, 3, 1), (0, 1, 4)])


def test_unit_square_geometry():
    area, cen, lam = cell_geometry(SQUARE)
    assert (area, lam) == (1.0, 0.5)
    assert np.allclose(cen, [0.5, 0.5], rtol=0, atol=1e-15)


def test_right_triangle_geometry():
    area, cen, lam = cell_geometry([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert area == pytest.approx(0.5)
    assert np.allclose(cen, [1 / 3, 1 / 3], atol=1e-15)
    assert lam == pytest.approx((1 - 2 / 3) / math.sqrt(2), rel=1e-12)


def test_collinear_points_are_degenerate():
    with pytest.raises(DegenerateCell):
        cell_geometry([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])


def test_edge_lengths_and_normals(rng):
    m = rectangle_mesh(6, 5, perturb=0.3, seed=4)
    a, b = m.points[m.edges[:, 0]], m.points[m.edges[:, 1]]
    assert np.allclose(m.edge_length, np.linalg.norm(b - a, axis=1), rtol=1e-12)
    assert np.allclose(np.linalg.norm(m.edge_normal, axis=1), 1.0, rtol=1e-14)
    # Each normal points from its left cell towards the right cell (or outside).
    left = m.cell_centroid[m.edge_cells[:, 0]]
    assert np.all(np.einsum("ij,ij->i", m.edge_midpoint - left, m.edge_normal) > 0)


def test_closed_cells_have_vanishing_normal_sum():
    m = rectangle_mesh(5, 4, perturb=0.25, seed=2)
    acc = np.zeros((m.n_cells, 2))
    ln = m.edge_length[:, None] * m.edge_normal
    np.add.at(acc, m.edge_cells[:, 0], ln)
    inner = m.edge_cells[:, 1] >= 0
    np.add.at(acc, m.edge_cells[inner, 1], -ln[inner])
    assert np.abs(acc).max() < 1e-14


def test_mesh_file_round_trip(tmp_path):
    m = rectangle_mesh(3, 2, perturb=0.2, seed=9)
    path = tmp_path / "mesh.txt"
    write_mesh(m, path)
    back = read_mesh(path)
    assert np.array_equal(back.points, m.points)
    assert back.topo.cells == m.topo.cells


def test_ring_cells_on_structured_grid():
    m = rectangle_mesh(3, 3)
    centre = 4
    assert m.ring_cells(centre) == [0, 1, 2, 3, 5, 6, 7, 8]
    assert m.ring_cells(0) == [1, 3, 4]


def test_eulerian_motion_keeps_mesh():
    m = rectangle_mesh(3, 3)
    w, new = vertex_motion("eulerian", np.ones((m.n_vertices, 2)), m, 0.1)
    assert new is m and not w.any()


def test_lagrangian_translation():
    m = rectangle_mesh(3, 3)
    u = np.tile([1.0, 0.0], (m.n_vertices, 1))
    w, new = vertex_motion("lagrangian", u, m, 0.1)
    assert np.allclose(new.points - m.points, [0.1, 0.0], atol=1e-15)
    assert np.allclose(new.cell_volume, m.cell_volume, rtol=1e-12)


def test_crossing_vertices_tangle_the_mesh():
    m = rectangle_mesh(2, 1)
    u = np.zeros((m.n_vertices, 2))
    mid = np.flatnonzero(np.isclose(m.points[:, 0], 0.5))
    u[mid, 0] = 10.0            # middle column overtakes the right column
    with pytest.raises(TangledMesh):
        vertex_motion("lagrangian", u, m, 0.1)


def test_wall_constraints_on_rectangle():
    m = rectangle_mesh(3, 2)
    wall = np.zeros(m.n_edges, dtype=bool)
    wall[m.boundary_edges] = True
    kind, tangent = vertex_constraints(m, wall)
    corner = [0, 2, 9, 11]
    assert np.all(kind[corner] == PINNED)
    boundary = m.topo.vertex_is_boundary
    assert np.all(kind[boundary & (kind != PINNED)] == SLIDE)
    assert np.all(kind[~boundary] == FREE)


def test_smoothed_motion_respects_walls_and_area():
    m = rectangle_mesh(6, 6, perturb=0.2, seed=3)
    wall = np.zeros(m.n_edges, dtype=bool)
    wall[m.boundary_edges] = True
    kind, tangent = vertex_constraints(m, wall)
    x, y = m.points.T
    u = np.column_stack([np.sin(3 * y), np.cos(2 * x)])
    w, new = vertex_motion("smoothed", u, m, 0.01, kind, tangent, 3)
    lo, hi = new.bounding_box()
    assert np.allclose(lo, [0, 0], atol=1e-15) and np.allclose(hi, [1, 1], atol=1e-15)
    assert new.domain_area() == pytest.approx(1.0, rel=1e-10)


@given(hs.floats(-5, 5), hs.floats(-5, 5), hs.floats(1e-4, 0.1), hs.integers(0, 50))
def test_uniform_motion_preserves_volumes(ux, uy, dt, seed):
    m = rectangle_mesh(4, 3, perturb=0.2, seed=seed)
    u = np.tile([ux, uy], (m.n_vertices, 1))
    for mode in ("lagrangian", "smoothed"):
        _, new = vertex_motion(mode, u, m, dt)
        assert np.allclose(new.cell_volume, m.cell_volume, rtol=1e-12, atol=0)
        assert np.all(new.cell_inradius > 0)


@given(hs.integers(0, 10_000), hs.floats(0.0, 0.45))
def test_total_area_and_shared_normals(seed, perturb):
    m = rectangle_mesh(5, 4, 0.0, 2.0, 0.0, 1.0, perturb=perturb, seed=seed)
    assert m.domain_area() == pytest.approx(2.0, rel=1e-10)
    assert np.all(m.cell_inradius > 0)
    # The right cell of an interior edge sees the same edge with the opposite normal.
    for e in m.interior_edges[:10]:
        left, right = m.edge_cells[e]
        poly = m.topo.cells[right]
        a, b = m.edges[e]
        k = poly.index(b)
        assert poly[(k + 1) % len(poly)] == a
        d = m.points[a] - m.points[b]
        n_right = np.array([d[1], -d[0]]) / np.hypot(*d)
        assert np.allclose(-n_right, m.edge_normal[e], rtol=0, atol=1e-12)
