"""Acoustic, volume-change and particle-displacement time-step limits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

A_PRIME_FLOOR = 1e-300


@dataclass(frozen=True)
class DtCoefficients:
    c_e: float = 0.3
    c_v: float = 0.1
    c_p: float = 0.5
    growth: float = 1.01
    first_factor: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.c_e < 1.0:
            raise ValueError(f"c_e must lie in (0, 1), got {self.c_e}")
        for name in ("c_v", "c_p", "growth", "first_factor"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


def dt_acoustic(inradius, velocity, sound, c_e):
    """``c_e * min(lambda / (|v| + c))`` over cells."""
    inradius = np.asarray(inradius, dtype=float)
    velocity = np.asarray(velocity, dtype=float).reshape(-1, 2)
    speed = np.hypot(velocity[:, 0], velocity[:, 1]) + np.asarray(sound, dtype=float)
    if not len(inradius):
        return math.inf
    return float(c_e * np.min(inradius / speed))


def volume_rate(mesh: Mesh, ustar):
    """Rate of change of each cell area implied by vertex velocities (trapezoidal edge sum)."""
    ustar = np.asarray(ustar, dtype=float)
    q, qp = mesh.edges[:, 0], mesh.edges[:, 1]
    flux = 0.5 * mesh.edge_length * np.einsum("ij,ij->i", ustar[q] + ustar[qp], mesh.edge_normal)
    left, right = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    inner = right >= 0
    rate = np.bincount(left, flux, mesh.n_cells)
    rate -= np.bincount(right[inner], flux[inner], mesh.n_cells)
    return rate


def dt_volume(mesh: Mesh, ustar, c_v):
    """``c_v * min(|A| / |A'|)``; cells whose area does not change impose no limit."""
    rate = np.abs(volume_rate(mesh, ustar))
    # Uniform translation leaves only round-off in the edge sum.
    scale = np.bincount(mesh.edge_cells[:, 0], mesh.edge_length, mesh.n_cells)
    umax = float(np.max(np.hypot(ustar[:, 0], ustar[:, 1]), initial=0.0))
    floor = np.maximum(A_PRIME_FLOOR, 64 * np.finfo(float).eps * umax * scale)
    active = rate > floor
    if not np.any(active):
        return math.inf
    return float(c_v * np.min(mesh.cell_volume[active] / rate[active]))


def particle_radius_limit(mesh: Mesh):
    """Per-cell minimum inradius over the cell and its edge neighbours."""
    lam = np.array(mesh.cell_inradius, copy=True)
    left, right = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    inner = right >= 0
    np.minimum.at(lam, left[inner], mesh.cell_inradius[right[inner]])
    np.minimum.at(lam, right[inner], mesh.cell_inradius[left[inner]])
    return lam


def dt_particle(mesh: Mesh, host, velocity, c_p):
    """``c_p * min(lambda_near / |v_p|)`` over moving particles."""
    host = np.asarray(host, dtype=np.int64)
    if not len(host):
        return math.inf
    velocity = np.asarray(velocity, dtype=float).reshape(-1, 2)
    speed = np.hypot(velocity[:, 0], velocity[:, 1])
    moving = speed > 0.0
    if not np.any(moving):
        return math.inf
    lam = particle_radius_limit(mesh)[host[moving]]
    return float(c_p * np.min(lam / speed[moving]))


def combine(dt_e, dt_v, dt_p, dt_prev=None, growth=1.01, first_factor=0.1):
    """Smallest limit, capped by growth over the previous step.

    Without a previous step the smallest limit is scaled by ``first_factor``.
    """
    limit = min(dt_e, dt_v, dt_p)
    if dt_prev is None:
        dt = first_factor * limit
    else:
        dt = min(limit, growth * dt_prev)
    if not math.isfinite(dt) or dt <= 0.0:
        raise ValueError(f"no finite positive time step (limits {dt_e}, {dt_v}, {dt_p})")
    return dt


def land_on(t, dt, t_end):
    """Shorten ``dt`` so the step ends exactly at ``t_end`` when it would pass it."""
    if t + dt >= t_end:
        return min(dt, t_end - t), True
    return dt, False
