import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from ejecta.errors import LostParticle
from ejecta.mesh import build_mesh, rectangle_mesh
from ejecta.tracking import (INSIDE, ON_BOUNDARY, OUTSIDE, OUTSIDE_DOMAIN, brute_force_locate,
                             brute_force_locate_many, cells_contain, classify_point, locate,
                             locate_many, point_in_cell, segment_exit)

MESH = rectangle_mesh(6, 5, 0.0, 1.2, 0.0, 1.0, perturb=0.2, seed=21)


def test_classify_point_on_square():
    sq = [[0, 0], [1, 0], [1, 1], [0, 1]]
    assert classify_point((0.5, 0.5), sq) == INSIDE
    assert classify_point((1.0, 0.3), sq) == ON_BOUNDARY
    assert classify_point((0.0, 0.0), sq) == ON_BOUNDARY
    assert classify_point((1.5, 0.5), sq) == OUTSIDE
    assert classify_point((0.5, 1.0000001), sq) == OUTSIDE


def test_centroids_belong_to_their_cells():
    for c in range(MESH.n_cells):
        assert point_in_cell(MESH, MESH.cell_centroid[c], c)
    assert not point_in_cell(MESH, (5.0, 5.0), 0)


def test_shared_edge_goes_to_lower_index():
    m = rectangle_mesh(4, 4)
    # Cells 3 and 7 share the edge x = 0.25 for y in [0.75, 1].
    x = (0.25, 0.875)
    assert point_in_cell(m, x, 3) and not point_in_cell(m, x, 7)
    assert brute_force_locate(m, x) == 3


def test_vertex_goes_to_smallest_incident_cell():
    m = rectangle_mesh(3, 3)
    for q in range(m.n_vertices):
        owner = brute_force_locate(m, m.points[q])
        assert owner == int(m.topo.cells_of_vertex[q].min())
        res = locate(m, m.points[q], int(m.topo.cells_of_vertex[q].max()))
        assert res.cell == owner


def test_unmoved_point_takes_one_hop():
    c = 13
    res = locate(MESH, MESH.cell_centroid[c], c)
    assert (res.cell, res.hops, res.ring) == (c, 1, 0)


def test_move_into_edge_neighbour():
    m = MESH
    for c in range(m.n_cells):
        for d in m.topo.neighbors_of_cell[c]:
            x = m.cell_centroid[d]
            res = locate(m, x, c)
            assert res.cell == brute_force_locate(m, x) == d
            assert res.hops <= 1 + len(m.topo.neighbors_of_cell[c])


def test_outside_points():
    assert brute_force_locate(MESH, (-0.1, 0.5)) == OUTSIDE_DOMAIN
    assert locate(MESH, (-0.1, 0.5), 0).cell == OUTSIDE_DOMAIN
    cells, _ = locate_many(MESH, [[1.3, 0.5]], [MESH.n_cells - 1])
    assert cells[0] == OUTSIDE_DOMAIN


def test_far_point_is_lost():
    m = rectangle_mesh(20, 1)
    with pytest.raises(LostParticle):
        locate(m, m.cell_centroid[19], 0)
    with pytest.raises(LostParticle) as exc:
        locate_many(m, [m.cell_centroid[0], m.cell_centroid[19]], [0, 0])
    assert exc.value.particle == 1


def test_locate_many_agrees_with_brute_force(rng):
    X = rng.uniform(-0.05, 1.25, (3000, 2)) * [1.0, 1.0 / 1.2]
    truth = brute_force_locate_many(MESH, X)
    inside = truth >= 0
    hints = truth[inside].copy()
    for i in range(len(hints)):
        ring = MESH.ring_cells(int(hints[i]))
        hints[i] = ring[rng.integers(len(ring))]
    cells, rings = locate_many(MESH, X[inside], hints)
    assert np.array_equal(cells, truth[inside])
    assert rings.max() <= 2


def test_segment_exit_finds_crossed_side():
    m = rectangle_mesh(4, 4)
    e, t = segment_exit(m, (0.5, 0.5), (1.5, 0.5))
    assert m.boundary_side([e])[0] == 1 and t == pytest.approx(0.5)
    assert segment_exit(m, (0.2, 0.2), (0.3, 0.3)) == (None, None)


def test_non_convex_cell():
    pts = [[0, 0], [2, 0], [2, 2], [1, 0.5], [0, 2]]
    m = build_mesh(pts, [(0, 1, 2, 3, 4)])
    assert brute_force_locate(m, (1.0, 1.5)) == OUTSIDE_DOMAIN
    assert brute_force_locate(m, (0.2, 1.5)) == 0


@given(hs.integers(0, 10_000), hs.floats(0.0, 0.2), hs.floats(0, 1), hs.floats(0, 6.283))
def test_small_moves_stay_within_first_ring(seed, perturb, frac, angle):
    m = rectangle_mesh(5, 4, perturb=perturb, seed=seed)
    r = np.random.default_rng(seed)
    c = int(r.integers(m.n_cells))
    start = m.cell_centroid[c]
    x = start + frac * m.cell_inradius[c] * np.array([np.cos(angle), np.sin(angle)])
    res = locate(m, x, c)
    assert res.cell == brute_force_locate(m, x)
    assert res.ring <= 1


@given(hs.integers(0, 10_000), hs.integers(0, 3))
def test_every_point_has_one_owner(seed, kind):
    m = rectangle_mesh(4, 4, perturb=0.2, seed=seed)
    r = np.random.default_rng(seed)
    if kind == 0:
        x = m.points[r.integers(m.n_vertices)]
    elif kind == 1:
        e = r.integers(m.n_edges)
        x = 0.5 * (m.points[m.edges[e, 0]] + m.points[m.edges[e, 1]])
    else:
        x = r.uniform(0, 1, 2)
    owners = cells_contain(m, np.repeat([x], m.n_cells, axis=0), np.arange(m.n_cells))
    assert owners.sum() == 1
    assert int(np.flatnonzero(owners)[0]) == brute_force_locate(m, x)
