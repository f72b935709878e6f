"""Lagrangian particle phase: drag and heat closures, RK2 update, exchange bookkeeping.

Particles are stored column-wise in :class:`ParticleSet`. A computational
particle may stand for ``weight`` identical physical particles (a parcel);
everything exchanged with the gas is scaled by that weight.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroViscosity
from .state import GasModel

log = logging.getLogger(__name__)

STOKES, CROWE = "stokes", "crowe"
DRAG_MODELS = (STOKES, CROWE)

DILUTE_LIMIT = 0.05


@dataclass
class Particle:
    """A single particle, convenient for setup and inspection."""

    pos: tuple
    vel: tuple
    radius: float
    mat_density: float = 1000.0
    spec_heat: float = 1.0
    temp: float = 300.0
    host_cell: int = -1
    id: int = 0
    weight: float = 1.0

    def __post_init__(self):
        for name in ("radius", "mat_density", "spec_heat", "temp", "weight"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"particle {name} must be positive")


@dataclass
class ParticleSet:
    pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    vel: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    radius: np.ndarray = field(default_factory=lambda: np.zeros(0))
    density: np.ndarray = field(default_factory=lambda: np.zeros(0))
    spec_heat: np.ndarray = field(default_factory=lambda: np.zeros(0))
    temp: np.ndarray = field(default_factory=lambda: np.zeros(0))
    host: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    weight: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).reshape(-1, 2)
        self.vel = np.asarray(self.vel, dtype=float).reshape(-1, 2)
        n = len(self.pos)
        for name in ("radius", "density", "spec_heat", "temp", "weight"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if name == "weight" and arr.size == 0:
                arr = np.ones(1)
            elif n and arr.size == 0:
                raise ValueError(f"particle {name} is missing")
            setattr(self, name, np.broadcast_to(arr, (n,)).copy())
            if n and not np.all(getattr(self, name) > 0.0):
                raise ValueError(f"particle {name} must be positive")
        self.host = np.broadcast_to(np.asarray(self.host, dtype=np.int64), (n,)).copy()
        if len(self.ids) != n:
            self.ids = np.arange(n, dtype=np.int64)
        self.ids = np.asarray(self.ids, dtype=np.int64)

    def __len__(self):
        return len(self.pos)

    @classmethod
    def from_particles(cls, particles):
        particles = list(particles)
        if not particles:
            return cls()
        return cls(
            pos=[p.pos for p in particles],
            vel=[p.vel for p in particles],
            radius=[p.radius for p in particles],
            density=[p.mat_density for p in particles],
            spec_heat=[p.spec_heat for p in particles],
            temp=[p.temp for p in particles],
            host=[p.host_cell for p in particles],
            weight=[p.weight for p in particles],
            ids=[p.id for p in particles],
        )

    def particle(self, i) -> Particle:
        return Particle(
            pos=tuple(self.pos[i]), vel=tuple(self.vel[i]), radius=float(self.radius[i]),
            mat_density=float(self.density[i]), spec_heat=float(self.spec_heat[i]),
            temp=float(self.temp[i]), host_cell=int(self.host[i]), id=int(self.ids[i]),
            weight=float(self.weight[i]),
        )

    def select(self, mask):
        return ParticleSet(
            pos=self.pos[mask], vel=self.vel[mask], radius=self.radius[mask],
            density=self.density[mask], spec_heat=self.spec_heat[mask], temp=self.temp[mask],
            host=self.host[mask], weight=self.weight[mask], ids=self.ids[mask],
        )

    def copy(self):
        return self.select(slice(None))

    @property
    def mass(self):
        return particle_mass(self.radius, self.density)

    def momentum(self):
        return ((self.weight * self.mass)[:, None] * self.vel).sum(axis=0)

    def energy(self):
        m = self.weight * self.mass
        ke = 0.5 * m * np.einsum("ij,ij->i", self.vel, self.vel)
        return float((ke + m * self.spec_heat * self.temp).sum())


def particle_mass(radius, density):
    """Mass of a sphere; used for both the momentum and the thermal update."""
    return 4.0 / 3.0 * np.pi * np.asarray(radius, dtype=float) ** 3 * np.asarray(density, dtype=float)


def _slip(vel_g, vel_p):
    dv = np.asarray(vel_g, dtype=float) - np.asarray(vel_p, dtype=float)
    return dv, np.hypot(dv[..., 0], dv[..., 1])


def reynolds(rho_g, vel_g, vel_p, radius, mu):
    """Slip Reynolds number ``2 rho_g r |v_g - v_p| / mu``."""
    if mu <= 0.0:
        raise ZeroViscosity("Reynolds number needs a positive gas viscosity")
    _, speed = _slip(vel_g, vel_p)
    return 2.0 * np.asarray(rho_g) * np.asarray(radius) * speed / mu


def drag_coefficient(Re):
    """Piecewise drag law; infinite at ``Re = 0``."""
    Re = np.asarray(Re, dtype=float)
    if np.any(Re < 0.0):
        raise ValueError("Reynolds number must be nonnegative")
    with np.errstate(divide="ignore"):
        base = 24.0 / Re
    return np.where(Re < 0.2, base,
                    np.where(Re <= 800.0, base * (1.0 + 0.15 * Re ** 0.687), 0.5))


def drag_force(model, rho_g, vel_g, vel_p, radius, gas: GasModel):
    """Drag force on the particle(s).

    The Crowe law is evaluated as ``6 pi mu r dv * f(Re)`` below ``Re = 800``,
    which equals ``C_D K rho |dv| dv / 2`` with ``K = pi r^2`` but stays finite
    as the slip vanishes.
    """
    dv, speed = _slip(vel_g, vel_p)
    radius = np.asarray(radius, dtype=float)
    if model == STOKES:
        return (6.0 * np.pi * gas.mu * radius)[..., None] * dv
    if model != CROWE:
        raise ValueError(f"unknown drag model {model!r}")
    if gas.mu <= 0.0:
        raise ZeroViscosity("Crowe drag needs a positive gas viscosity")
    rho_g = np.asarray(rho_g, dtype=float)
    Re = 2.0 * rho_g * radius * speed / gas.mu
    stokes = 6.0 * np.pi * gas.mu * radius
    coef = np.where(Re < 0.2, stokes,
                    np.where(Re <= 800.0, stokes * (1.0 + 0.15 * Re ** 0.687),
                             0.25 * np.pi * radius ** 2 * rho_g * speed))
    return coef[..., None] * dv


def heat_flux(rho_g, vel_g, vel_p, radius, gas_temp, temp, gas: GasModel):
    """Convective heat flow into the particle (positive when the gas is hotter)."""
    if gas.mu <= 0.0:
        return np.zeros(np.broadcast_shapes(np.shape(radius), np.shape(temp)))
    pr = gas.prandtl
    Re = reynolds(rho_g, vel_g, vel_p, radius, gas.mu)
    nu = 2.0 + 0.6 * pr ** (1.0 / 3.0) * np.sqrt(Re)
    return (2.0 * gas.mu / pr) * gas.cpg * np.pi * np.asarray(radius) * (
        np.asarray(gas_temp) - np.asarray(temp)) * nu


@dataclass
class ParticleUpdate:
    vel: np.ndarray
    pos: np.ndarray
    temp: np.ndarray
    impulse: np.ndarray          # momentum gained per physical particle
    energy: np.ndarray           # kinetic + thermal energy gained per physical particle
    force_start: np.ndarray      # drag at the start of the step
    heat_start: np.ndarray


def rk2_particle_update(ps: ParticleSet, rho_g, vel_g, temp_g, gas: GasModel, model, dt):
    """Two-stage update of velocity, position and temperature in a frozen gas.

    ``rho_g``, ``vel_g`` and ``temp_g`` are the host-cell gas values per particle.
    The force is re-evaluated at the average of the start and predicted
    velocities; positions advance with the predicted velocity.
    """
    m = ps.mass
    thermal = m * ps.spec_heat
    v0, T0 = ps.vel, ps.temp
    F0 = drag_force(model, rho_g, vel_g, v0, ps.radius, gas)
    Q0 = heat_flux(rho_g, vel_g, v0, ps.radius, temp_g, T0, gas)
    v_hat = v0 + dt * F0 / m[:, None]
    T_hat = T0 + dt * Q0 / thermal
    v_mid = 0.5 * (v_hat + v0)
    F1 = drag_force(model, rho_g, vel_g, v_mid, ps.radius, gas)
    Q1 = heat_flux(rho_g, vel_g, v_mid, ps.radius, temp_g, 0.5 * (T0 + T_hat), gas)
    impulse = dt * F1
    v1 = v0 + impulse / m[:, None]
    T1 = T0 + dt * Q1 / thermal
    work = 0.5 * np.einsum("ij,ij->i", impulse, v1 + v0)
    return ParticleUpdate(
        vel=v1, pos=ps.pos + dt * v_hat, temp=T1, impulse=impulse,
        energy=work + dt * Q1, force_start=F0, heat_start=Q0,
    )


def exchange_totals(host, impulse, energy, weight, n_cells):
    """Per-cell totals ``(0, I_x, I_y, E)`` handed to the particles in one step."""
    out = np.zeros((n_cells, 4))
    if len(host):
        out[:, 1] = np.bincount(host, weight * impulse[:, 0], n_cells)
        out[:, 2] = np.bincount(host, weight * impulse[:, 1], n_cells)
        out[:, 3] = np.bincount(host, weight * energy, n_cells)
    return out


def accumulate_sources(host, impulse, energy, cell_volume, dt, weight=None):
    """Fluid source density per cell: minus what the particles received, per volume and time."""
    host = np.asarray(host, dtype=np.int64)
    impulse = np.asarray(impulse, dtype=float).reshape(-1, 2)
    energy = np.asarray(energy, dtype=float).reshape(-1)
    if weight is None:
        weight = np.ones(len(host))
    cell_volume = np.asarray(cell_volume, dtype=float)
    totals = exchange_totals(host, impulse, energy, weight, len(cell_volume))
    return -totals / (cell_volume[:, None] * dt)


def volume_fraction(host, radius, cell_volume, weight=None, depth=1.0):
    """Particle volume per cell volume (cells are given ``depth`` out of plane)."""
    host = np.asarray(host, dtype=np.int64)
    radius = np.asarray(radius, dtype=float)
    cell_volume = np.asarray(cell_volume, dtype=float)
    if weight is None:
        weight = np.ones(len(host))
    vol = np.bincount(host, weight * 4.0 / 3.0 * np.pi * radius ** 3, len(cell_volume))
    frac = vol / (cell_volume * depth)
    if np.any(frac > DILUTE_LIMIT):
        log.warning("particle volume fraction %.3g exceeds the dilute limit %.2g in cell %d",
                    frac.max(), DILUTE_LIMIT, int(frac.argmax()))
    return frac
