"""Ready-made experiments and the exact Riemann solution used to check them.

Each ``make_*`` function returns a :class:`CaseSpec`; :func:`build_case` turns a
spec into an initial :class:`~ejecta.solver.SimulationState` and the matching
:class:`~ejecta.solver.SolverOptions`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import state as st
from .errors import NoConvergence
from .mesh import SIDES, Mesh, rectangle_mesh
from .particles import CROWE, STOKES, ParticleSet, particle_mass
from .riemann import TRANSMISSIVE, WALL, BoundaryConditions
from .solver import SimulationState, SolverOptions
from .timestep import DtCoefficients
from .tracking import brute_force_locate, cells_contain

SOD_LEFT = (9.6, 0.0, 1013250.0)      # (rho, u, P)
SOD_RIGHT = (1.2, 0.0, 101325.0)
SOD_FRACTIONS = {1: (0.0, None), 2: (1e-4, 1e-4), 3: (4e-2, 2e-3)}


@dataclass
class ParticleSeed:
    """How particles are placed at t = 0.

    With ``fraction`` set, every cell receives enough particles of ``radius`` to
    reach that volume fraction; they are represented by at most
    ``max_parcels_per_cell`` computational parcels of equal weight. Otherwise
    explicit ``positions`` are used, one physical particle each.
    """

    radius: float
    density: float = 1000.0
    spec_heat: float = 1.0
    temp: float | None = None          # None: host gas temperature
    velocity: tuple = (0.0, 0.0)
    fraction: float | None = None
    max_parcels_per_cell: int = 8
    positions: tuple = ()


@dataclass
class CaseSpec:
    name: str
    nx: int
    ny: int
    domain: tuple                       # (x0, x1, y0, y1)
    gas: st.GasModel = field(default_factory=st.GasModel)
    left: tuple = (1.2, 0.0, 101325.0)  # (rho, u, P) for x < split
    right: tuple | None = None          # None: uniform ``left`` state
    split: float = 0.0
    seed: ParticleSeed | None = None
    forcing: str = "none"               # none | constant | sinusoidal
    accel: float = 0.0                  # a_g or the sinusoid amplitude (along x)
    omega: float = 0.0
    coupling: str = "two-way"
    drag: str = STOKES
    exchange: str = "conservative"
    motion: str = "eulerian"
    smooth_passes: int = 3
    bc: dict = field(default_factory=lambda: {s: WALL for s in SIDES})
    t_end: float = 1.0
    output_dt: float | None = None
    perturb: float = 0.0
    rng_seed: int = 12345
    dt: DtCoefficients = field(default_factory=DtCoefficients)

    def with_overrides(self, **kw):
        return replace(self, **kw)


# --- exact Riemann solution -------------------------------------------------------

def _pressure_function(p, rho, u, pk, gas):
    g = gas.gamma
    c = math.sqrt(g * pk / rho)
    if p > pk:
        A = 2.0 / ((g + 1.0) * rho)
        B = (g - 1.0) / (g + 1.0) * pk
        q = math.sqrt(A / (p + B))
        return (p - pk) * q, q * (1.0 - 0.5 * (p - pk) / (p + B))
    ratio = p / pk
    f = 2.0 * c / (g - 1.0) * (ratio ** ((g - 1.0) / (2.0 * g)) - 1.0)
    df = ratio ** (-(g + 1.0) / (2.0 * g)) / (rho * c)
    return f, df


def star_region(left, right, gas: st.GasModel, tol=1e-12, max_iter=100):
    """Pressure and velocity between the outer waves, by Newton iteration."""
    rl, ul, pl = left
    rr, ur, pr = right
    g = gas.gamma
    cl, cr = math.sqrt(g * pl / rl), math.sqrt(g * pr / rr)
    if 2.0 * (cl + cr) / (g - 1.0) <= ur - ul:
        raise ValueError("initial data generate vacuum")
    # Two-rarefaction guess.
    z = (g - 1.0) / (2.0 * g)
    p = ((cl + cr - 0.5 * (g - 1.0) * (ur - ul)) / (cl / pl ** z + cr / pr ** z)) ** (1.0 / z)
    scale = max(pl, pr)
    for _ in range(max_iter):
        fl, dl = _pressure_function(p, rl, ul, pl, gas)
        fr, dr = _pressure_function(p, rr, ur, pr, gas)
        f = fl + fr + ur - ul
        p_new = max(p - f / (dl + dr), 1e-14 * scale)
        converged = abs(p_new - p) <= tol * 0.5 * (p_new + p)
        p = p_new
        if converged:
            fl, _ = _pressure_function(p, rl, ul, pl, gas)
            fr, _ = _pressure_function(p, rr, ur, pr, gas)
            return p, 0.5 * (ul + ur) + 0.5 * (fr - fl)
    raise NoConvergence(f"pressure iteration did not converge in {max_iter} steps")


def exact_sod_solution(left, right, gas: st.GasModel, xi):
    """Exact Riemann solution ``(rho, u, P)`` sampled at similarity coordinates ``xi = x/t``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    rl, ul, pl = left
    rr, ur, pr = right
    g = gas.gamma
    if left == right:
        out = np.empty((len(xi), 3))
        out[:] = left
        return out
    ps, us = star_region(left, right, gas)
    cl, cr = math.sqrt(g * pl / rl), math.sqrt(g * pr / rr)
    gm = (g - 1.0) / (g + 1.0)
    out = np.empty((len(xi), 3))
    for i, s in enumerate(xi):
        if s <= us:
            if ps > pl:
                rho_s = rl * (ps / pl + gm) / (gm * ps / pl + 1.0)
                shock = ul - cl * math.sqrt((g + 1.0) / (2.0 * g) * ps / pl + (g - 1.0) / (2.0 * g))
                out[i] = (rl, ul, pl) if s < shock else (rho_s, us, ps)
            else:
                rho_s = rl * (ps / pl) ** (1.0 / g)
                head, tail = ul - cl, us - cl * (ps / pl) ** ((g - 1.0) / (2.0 * g))
                if s <= head:
                    out[i] = (rl, ul, pl)
                elif s >= tail:
                    out[i] = (rho_s, us, ps)
                else:
                    c = 2.0 / (g + 1.0) * (cl + 0.5 * (g - 1.0) * (ul - s))
                    u = 2.0 / (g + 1.0) * (cl + 0.5 * (g - 1.0) * ul + s)
                    rho = rl * (c / cl) ** (2.0 / (g - 1.0))
                    out[i] = (rho, u, pl * (c / cl) ** (2.0 * g / (g - 1.0)))
        else:
            if ps > pr:
                rho_s = rr * (ps / pr + gm) / (gm * ps / pr + 1.0)
                shock = ur + cr * math.sqrt((g + 1.0) / (2.0 * g) * ps / pr + (g - 1.0) / (2.0 * g))
                out[i] = (rr, ur, pr) if s > shock else (rho_s, us, ps)
            else:
                rho_s = rr * (ps / pr) ** (1.0 / g)
                head, tail = ur + cr, us + cr * (ps / pr) ** ((g - 1.0) / (2.0 * g))
                if s >= head:
                    out[i] = (rr, ur, pr)
                elif s <= tail:
                    out[i] = (rho_s, us, ps)
                else:
                    c = 2.0 / (g + 1.0) * (cr - 0.5 * (g - 1.0) * (ur - s))
                    u = 2.0 / (g + 1.0) * (-cr + 0.5 * (g - 1.0) * ur + s)
                    rho = rr * (c / cr) ** (2.0 / (g - 1.0))
                    out[i] = (rho, u, pr * (c / cr) ** (2.0 * g / (g - 1.0)))
    return out


# --- case factories --------------------------------------------------------------------

def make_quiescent_transport(radius=1e-3, speed=1.0, **overrides) -> CaseSpec:
    """Closed box of still air with one particle launched from the centre."""
    spec = CaseSpec(
        name="quiescent",
        nx=4, ny=2, domain=(-500.0, 500.0, -250.0, 250.0),
        seed=ParticleSeed(radius=radius, spec_heat=1000.0, velocity=(speed, 0.0),
                          positions=((1e-3, 1e-3),)),
        drag=STOKES, coupling="two-way",
        t_end=1000.0, output_dt=10.0,
    )
    return spec.with_overrides(**overrides)


def make_accelerated_gas(kind="constant", radius=2e-5, accel=10.0, omega=200.0,
                         speed=0.5, **overrides) -> CaseSpec:
    """Uniform air driven by a body acceleration along x, with one moving particle."""
    if kind not in ("constant", "sinusoidal"):
        raise ValueError(f"unknown forcing kind {kind!r}")
    bc = {"xmin": TRANSMISSIVE, "xmax": TRANSMISSIVE, "ymin": WALL, "ymax": WALL}
    spec = CaseSpec(
        name=f"accelerated-{kind}",
        nx=10, ny=2, domain=(-0.23, 0.23, -0.046, 0.046),
        seed=ParticleSeed(radius=radius, spec_heat=1000.0, velocity=(speed, 0.0),
                          positions=((1e-4, 1e-4),)),
        forcing=kind, accel=accel, omega=omega,
        drag=STOKES, coupling="two-way", bc=bc,
        t_end=0.05, output_dt=0.005,
    )
    return spec.with_overrides(**overrides)


def make_multiphase_sod(case_id=1, nx=400, ny=4, **overrides) -> CaseSpec:
    """Shock tube on [-0.5, 0.5] x [0, 0.1] with the particle loading of ``case_id``."""
    if case_id not in SOD_FRACTIONS:
        raise ValueError("case_id must be 1, 2 or 3")
    fraction, radius = SOD_FRACTIONS[case_id]
    seed = None if radius is None else ParticleSeed(radius=radius, fraction=fraction)
    bc = {"xmin": TRANSMISSIVE, "xmax": TRANSMISSIVE, "ymin": WALL, "ymax": WALL}
    spec = CaseSpec(
        name=f"sod{case_id}", nx=nx, ny=ny, domain=(-0.5, 0.5, 0.0, 0.1),
        left=SOD_LEFT, right=SOD_RIGHT, split=0.0, seed=seed,
        drag=CROWE, coupling="two-way", bc=bc,
        t_end=0.0004, output_dt=0.0001,
    )
    return spec.with_overrides(**overrides)


CASES = {
    "sod1": lambda **kw: make_multiphase_sod(1, **kw),
    "sod2": lambda **kw: make_multiphase_sod(2, **kw),
    "sod3": lambda **kw: make_multiphase_sod(3, **kw),
    "quiescent": make_quiescent_transport,
    "accel-constant": lambda **kw: make_accelerated_gas("constant", **kw),
    "accel-sinusoidal": lambda **kw: make_accelerated_gas("sinusoidal", **kw),
}


def make_case(name, **overrides) -> CaseSpec:
    try:
        factory = CASES[name]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None
    return factory(**overrides)


# --- building initial states --------------------------------------------------------------

def _sample_in_cell(mesh: Mesh, c, n, rng):
    """``n`` uniformly distributed points inside cell ``c`` (triangle-fan sampling)."""
    poly = mesh.cell_polygon(c)
    a = poly[0]
    tri_b, tri_c = poly[1:-1], poly[2:]
    areas = 0.5 * np.abs((tri_b[:, 0] - a[0]) * (tri_c[:, 1] - a[1])
                         - (tri_c[:, 0] - a[0]) * (tri_b[:, 1] - a[1]))
    k = rng.choice(len(areas), size=n, p=areas / areas.sum())
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    return a + u[:, None] * (tri_b[k] - a) + v[:, None] * (tri_c[k] - a)


def seed_particles(mesh: Mesh, seed: ParticleSeed, gas_temp, rng):
    """Particles for a :class:`ParticleSeed`; ``gas_temp`` is the per-cell gas temperature."""
    if seed.fraction is not None:
        vol_p = particle_mass(seed.radius, 1.0)
        physical = seed.fraction * mesh.cell_volume / vol_p
        parcels = np.clip(np.rint(physical), 1, seed.max_parcels_per_cell).astype(np.int64)
        host = np.repeat(np.arange(mesh.n_cells), parcels)
        weight = np.repeat(physical / parcels, parcels)
        pos = np.concatenate([_sample_in_cell(mesh, c, int(n), rng)
                              for c, n in enumerate(parcels)])
        # Samples landing exactly on an edge go to the owner under the tie-break.
        ok = cells_contain(mesh, pos, host)
        for i in np.flatnonzero(~ok):
            host[i] = brute_force_locate(mesh, pos[i])
    else:
        pos = np.asarray(seed.positions, dtype=float).reshape(-1, 2)
        host = np.array([brute_force_locate(mesh, x) for x in pos], dtype=np.int64)
        if np.any(host < 0):
            raise ValueError("particle seeded outside the domain")
        weight = np.ones(len(pos))
    temp = gas_temp[host] if seed.temp is None else seed.temp
    n = len(pos)
    return ParticleSet(
        pos=pos, vel=np.broadcast_to(np.asarray(seed.velocity, float), (n, 2)),
        radius=seed.radius, density=seed.density, spec_heat=seed.spec_heat, temp=temp,
        host=host, weight=weight, ids=np.arange(n),
    )


def _body_force(spec: CaseSpec):
    if spec.forcing == "none":
        return None
    if spec.forcing == "constant":
        a = spec.accel
        return lambda t: (a, 0.0)
    if spec.forcing == "sinusoidal":
        a, w = spec.accel, spec.omega
        return lambda t: (a * math.sin(w * t), 0.0)
    raise ValueError(f"unknown forcing {spec.forcing!r}")


def build_case(spec: CaseSpec, mesh: Mesh | None = None):
    """Initial state and solver options for ``spec``."""
    x0, x1, y0, y1 = spec.domain
    if mesh is None:
        mesh = rectangle_mesh(spec.nx, spec.ny, x0, x1, y0, y1, spec.perturb, spec.rng_seed)
    gas = spec.gas
    cen = mesh.cell_centroid
    prim = np.empty((mesh.n_cells, 4))
    left = np.array([spec.left[0], spec.left[1], 0.0, spec.left[2]])
    prim[:] = left
    if spec.right is not None:
        right = np.array([spec.right[0], spec.right[1], 0.0, spec.right[2]])
        prim[cen[:, 0] > spec.split] = right
    cons = st.to_conservative(prim, gas)
    particles = ParticleSet()
    if spec.seed is not None:
        rng = np.random.default_rng(spec.rng_seed)
        particles = seed_particles(mesh, spec.seed, st.temperature(cons, gas), rng)
    opts = SolverOptions(
        gas=gas, bc=BoundaryConditions(dict(spec.bc)), motion=spec.motion,
        smooth_passes=spec.smooth_passes, drag=spec.drag, coupling=spec.coupling,
        exchange=spec.exchange, dt=spec.dt, forcing=_body_force(spec),
    )
    return SimulationState(mesh, cons, particles), opts


def seeded_fraction(state: SimulationState):
    """Global particle volume fraction of a state."""
    ps = state.particles
    vol = np.sum(ps.weight * particle_mass(ps.radius, 1.0))
    return float(vol / state.mesh.domain_area())


def stokes_response(t, v0, tau):
    """Velocity of a particle relaxing in still gas: ``v0 exp(-t / tau)``."""
    return np.asarray(v0) * np.exp(-np.asarray(t) / tau)


def stokes_time(radius, density, mu):
    """Stokes relaxation time ``m / (6 pi r mu)``."""
    return float(particle_mass(radius, density) / (6.0 * math.pi * radius * mu))


def sinusoidal_response(t, v0, vg0, a0, omega, tau):
    """Closed-form particle velocity in gas with ``dv_g/dt = a0 sin(omega t)``.

    Solves ``dv/dt = (v_g - v) / tau`` exactly.
    """
    t = np.asarray(t, dtype=float)
    k = 1.0 / tau
    # v_g(t) = vg0 + a0/omega (1 - cos(omega t))
    base = vg0 + a0 / omega
    amp = -a0 / omega
    # Particular solution for the cosine part: A cos + B sin.
    A = amp * k * k / (k * k + omega * omega)
    B = amp * k * omega / (k * k + omega * omega)
    part = base + A * np.cos(omega * t) + B * np.sin(omega * t)
    c0 = v0 - (base + A)
    return part + c0 * np.exp(-k * t)
