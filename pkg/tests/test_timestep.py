import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from ejecta import timestep as ts
from ejecta.cases import build_case, make_case
from ejecta.mesh import build_mesh, rectangle_mesh
from ejecta.solver import Solver
from ejecta.tracking import brute_force_locate, locate

UNIT_SQUARE = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [(0, 1, 2, 3)])


def test_acoustic_examples():
    assert ts.dt_acoustic([0.01], [[0, 0]], [340.0], 0.3) == pytest.approx(8.8235294117647e-6)
    assert ts.dt_acoustic([1.0], [[3, 4]], [5.0], 0.3) == pytest.approx(0.03)
    assert ts.dt_acoustic([1.0, 0.1], [[0, 0], [0, 0]], [1.0, 1.0], 0.5) == pytest.approx(0.05)


def test_volume_limit_still_and_translating():
    m = rectangle_mesh(4, 3, perturb=0.2, seed=3)
    assert ts.dt_volume(m, np.zeros((m.n_vertices, 2)), 0.1) == math.inf
    shift = np.tile([[13.0, -7.5]], (m.n_vertices, 1))
    assert ts.dt_volume(m, shift, 0.1) == math.inf


def test_volume_limit_expanding_square():
    u = UNIT_SQUARE.points - 0.5
    assert ts.volume_rate(UNIT_SQUARE, u)[0] == pytest.approx(2.0)
    assert ts.dt_volume(UNIT_SQUARE, u, 0.1) == pytest.approx(0.05)


def test_volume_rate_matches_finite_difference(rng):
    m = rectangle_mesh(3, 3, perturb=0.2, seed=5)
    u = rng.normal(size=(m.n_vertices, 2))
    h = 1e-6
    moved = build_mesh(m.points + h * u, m.topo.cells)
    fd = (moved.cell_volume - m.cell_volume) / h
    assert np.allclose(ts.volume_rate(m, u), fd, atol=1e-5)


def test_particle_examples():
    m = rectangle_mesh(2, 2, 0.0, 0.04, 0.0, 0.04)
    assert ts.dt_particle(m, [], np.zeros((0, 2)), 0.5) == math.inf
    assert ts.dt_particle(m, [0, 3], np.zeros((2, 2)), 0.5) == math.inf
    # Every cell has inradius 0.01.
    assert ts.dt_particle(m, [0], [[60.0, 80.0]], 0.5) == pytest.approx(5e-5)


def test_particle_limit_uses_neighbour_inradius():
    pts = np.array([[0, 0], [1, 0], [1.2, 0], [3, 0], [0, 1], [1, 1], [1.2, 1], [3, 1]], float)
    uneven = build_mesh(pts, [(0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6)])
    lam = ts.particle_radius_limit(uneven)
    assert lam[0] == pytest.approx(uneven.cell_inradius[1])
    assert lam[2] == pytest.approx(uneven.cell_inradius[1])


def test_combine_examples():
    assert ts.combine(1.0, 2.0, 3.0, 0.5) == pytest.approx(0.505)
    assert ts.combine(2.0, math.inf, math.inf, 1.0) == pytest.approx(1.01)
    assert ts.combine(0.3, math.inf, math.inf, 1.0) == 0.3
    assert ts.combine(1.0, 2.0, 3.0, None) == pytest.approx(0.1)
    assert ts.combine(1.0, 2.0, 3.0, None, first_factor=1.0) == 1.0
    with pytest.raises(ValueError):
        ts.combine(math.inf, math.inf, math.inf, None)


def test_land_on():
    assert ts.land_on(0.0, 0.1, 1.0) == (0.1, False)
    dt, landed = ts.land_on(0.95, 0.1, 1.0)
    assert landed and dt == pytest.approx(0.05)
    assert ts.land_on(0.0, 0.1, 0.1) == (0.1, True)


def test_coefficients_validated():
    with pytest.raises(ValueError):
        ts.DtCoefficients(c_e=1.0)
    with pytest.raises(ValueError):
        ts.DtCoefficients(c_v=0.0)


@given(hs.floats(1e-6, 1e3), hs.floats(1e-6, 1e3), hs.floats(1e-6, 1e3),
       hs.one_of(hs.none(), hs.floats(1e-6, 1e3)))
def test_combined_step_respects_every_limit(a, b, c, prev):
    dt = ts.combine(a, b, c, prev)
    assert dt <= min(a, b, c)
    if prev is not None:
        assert dt <= 1.01 * prev


def test_sod_run_growth_and_limits():
    state, opts = build_case(make_case("sod3", nx=60, ny=2))
    solver = Solver(state, opts)
    solver.run(2e-4)
    h = solver.history
    assert h[0].dt == pytest.approx(0.1 * min(h[0].dt_e, h[0].dt_v, h[0].dt_p))
    for rec in h[1:]:
        assert rec.dt <= 1.01 * rec.dt_prev * (1 + 1e-15)
        assert rec.dt <= min(rec.dt_e, rec.dt_v, rec.dt_p)
    assert max(rec.max_ring for rec in h) <= 1
    assert solver.state.t == 2e-4


@given(hs.integers(0, 1000), hs.floats(0.01, 1.0), hs.floats(0, 6.283))
def test_particle_step_keeps_tracking_local(seed, frac, angle):
    m = rectangle_mesh(6, 6, perturb=0.2, seed=seed)
    r = np.random.default_rng(seed)
    c = int(r.integers(m.n_cells))
    speed = 50.0
    v = speed * np.array([[np.cos(angle), np.sin(angle)]])
    dt = ts.dt_particle(m, [c], v, 0.5)
    x = m.cell_centroid[c] + frac * dt * v[0]
    target = brute_force_locate(m, x)
    if target >= 0:
        res = locate(m, x, c)
        assert res.cell == target and res.ring <= 1
