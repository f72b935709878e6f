"""Ideal-gas state vectors, equation of state and edge-frame rotations.

Conservative states are arrays whose last axis holds ``(rho, rho*u, rho*v, rho*E)``;
primitive states hold ``(rho, u, v, P)``. Every function broadcasts over leading axes,
so the same code serves a single state and a whole mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPhysicalState

RHO, MX, MY, ERG = 0, 1, 2, 3
PRES = 3


@dataclass(frozen=True)
class GasModel:
    gamma: float = 1.4
    mu: float = 1.8e-5
    cpg: float = 1005.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if self.mu < 0.0:
            raise ValueError(f"viscosity must be nonnegative, got {self.mu}")
        if not self.cpg > 0.0:
            raise ValueError(f"cpg must be positive, got {self.cpg}")

    @property
    def cv(self) -> float:
        return self.cpg / self.gamma

    @property
    def prandtl(self) -> float:
        return 4.0 * self.gamma / (9.0 * self.gamma - 5.0)


def _first_bad(mask):
    idx = np.flatnonzero(~np.asarray(mask).ravel())
    return int(idx[0]) if idx.size else None


def internal_energy(cons):
    """Specific internal energy ``E - |v|^2 / 2``."""
    cons = np.asarray(cons, dtype=float)
    rho = cons[..., RHO]
    ke = 0.5 * (cons[..., MX] ** 2 + cons[..., MY] ** 2) / rho
    return (cons[..., ERG] - ke) / rho


def pressure(cons, gas: GasModel):
    """Pressure from the ideal-gas law; rejects nonpositive density or internal energy."""
    cons = np.asarray(cons, dtype=float)
    rho = cons[..., RHO]
    bad = _first_bad(rho > 0.0)
    if bad is not None:
        raise NonPhysicalState(f"nonpositive density in state {bad}", cell=bad)
    eps = internal_energy(cons)
    bad = _first_bad(eps > 0.0)
    if bad is not None:
        raise NonPhysicalState(
            f"nonpositive internal energy {np.ravel(eps)[bad]:.6g} in state {bad}", cell=bad
        )
    return (gas.gamma - 1.0) * rho * eps


def to_primitive(cons, gas: GasModel):
    cons = np.asarray(cons, dtype=float)
    prim = np.empty_like(cons)
    prim[..., RHO] = cons[..., RHO]
    prim[..., PRES] = pressure(cons, gas)
    prim[..., MX] = cons[..., MX] / cons[..., RHO]
    prim[..., MY] = cons[..., MY] / cons[..., RHO]
    return prim


def to_conservative(prim, gas: GasModel):
    prim = np.asarray(prim, dtype=float)
    rho, u, v, p = prim[..., RHO], prim[..., MX], prim[..., MY], prim[..., PRES]
    if np.any(rho <= 0.0) or np.any(p <= 0.0):
        bad = _first_bad((rho > 0.0) & (p > 0.0))
        raise NonPhysicalState(f"nonpositive density or pressure in state {bad}", cell=bad)
    cons = np.empty_like(prim)
    cons[..., RHO] = rho
    cons[..., MX] = rho * u
    cons[..., MY] = rho * v
    cons[..., ERG] = p / (gas.gamma - 1.0) + 0.5 * rho * (u * u + v * v)
    return cons


def sound_speed(prim, gas: GasModel):
    prim = np.asarray(prim, dtype=float)
    rho, p = prim[..., RHO], prim[..., PRES]
    ok = (rho > 0.0) & (p > 0.0)
    if not np.all(ok):
        bad = _first_bad(ok)
        raise NonPhysicalState(f"cannot take sound speed of state {bad}", cell=bad)
    return np.sqrt(gas.gamma * p / rho)


def temperature(cons, gas: GasModel):
    """Gas temperature of a calorically perfect gas, ``eps / cv``."""
    return internal_energy(cons) / gas.cv


def rotate(cons, normal):
    """Express momentum in the (normal, tangent) frame of an edge."""
    cons = np.asarray(cons, dtype=float)
    normal = np.asarray(normal, dtype=float)
    nx, ny = normal[..., 0], normal[..., 1]
    out = np.array(cons, copy=True)
    out[..., MX] = nx * cons[..., MX] + ny * cons[..., MY]
    out[..., MY] = -ny * cons[..., MX] + nx * cons[..., MY]
    return out


def rotate_back(cons, normal):
    cons = np.asarray(cons, dtype=float)
    normal = np.asarray(normal, dtype=float)
    nx, ny = normal[..., 0], normal[..., 1]
    out = np.array(cons, copy=True)
    out[..., MX] = nx * cons[..., MX] - ny * cons[..., MY]
    out[..., MY] = ny * cons[..., MX] + nx * cons[..., MY]
    return out


def normal_flux(cons, pres):
    """Physical x-flux of a state already rotated into an edge frame."""
    cons = np.asarray(cons, dtype=float)
    u = cons[..., MX] / cons[..., RHO]
    flux = cons * u[..., None]
    flux[..., MX] += pres
    flux[..., ERG] += pres * u
    return flux
