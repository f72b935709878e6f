"""Time stepping for the coupled gas-particle system and its conservation audit.

One step: contact velocities from the current state, time-step limits, mesh
motion, particle forces in the frozen gas, two-stage fluid update, particle
relocation, then the conservation audit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import riemann as rm
from . import state as st
from . import timestep as ts
from .errors import DegenerateFan, NonPhysicalState, TangledMesh
from .mesh import Mesh, vertex_constraints, vertex_motion
from .particles import (CROWE, ParticleSet, exchange_totals, rk2_particle_update)
from .tracking import OUTSIDE_DOMAIN, locate, locate_many, segment_exit

log = logging.getLogger(__name__)

MOTION_MODES = ("eulerian", "lagrangian", "smoothed")
COUPLINGS = ("two-way", "one-way")
EXCHANGES = ("conservative", "literal")
RETRYABLE = (NonPhysicalState, DegenerateFan, TangledMesh)


@dataclass
class SolverOptions:
    gas: st.GasModel = field(default_factory=st.GasModel)
    bc: rm.BoundaryConditions = field(default_factory=rm.BoundaryConditions)
    motion: str = "eulerian"
    smooth_passes: int = 3
    drag: str = CROWE
    coupling: str = "two-way"
    exchange: str = "conservative"
    dt: ts.DtCoefficients = field(default_factory=ts.DtCoefficients)
    max_ring: int = 3
    forcing: Callable | None = None      # t -> body acceleration (ax, ay) on the gas

    def __post_init__(self):
        if self.motion not in MOTION_MODES:
            raise ValueError(f"unknown motion mode {self.motion!r}")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.exchange not in EXCHANGES:
            raise ValueError(f"unknown exchange mode {self.exchange!r}")
        if self.smooth_passes < 0 or self.max_ring < 1:
            raise ValueError("smooth_passes must be >= 0 and max_ring >= 1")


@dataclass
class ExchangeLedger:
    """What the particles received from the gas in each cell during the last step."""

    momentum: np.ndarray
    energy: np.ndarray

    @classmethod
    def zeros(cls, n_cells):
        return cls(np.zeros((n_cells, 2)), np.zeros(n_cells))


@dataclass
class SimulationState:
    mesh: Mesh
    cons: np.ndarray
    particles: ParticleSet = field(default_factory=ParticleSet)
    t: float = 0.0
    step: int = 0
    dt_prev: float | None = None
    ledger: ExchangeLedger | None = None

    def __post_init__(self):
        self.cons = np.asarray(self.cons, dtype=float)
        if self.cons.shape != (self.mesh.n_cells, 4):
            raise ValueError("state array must have shape (n_cells, 4)")
        if self.ledger is None:
            self.ledger = ExchangeLedger.zeros(self.mesh.n_cells)

    def copy(self):
        return replace(self, cons=self.cons.copy(), particles=self.particles.copy(),
                       ledger=ExchangeLedger(self.ledger.momentum.copy(), self.ledger.energy.copy()))

    def primitive(self, gas):
        return st.to_primitive(self.cons, gas)


def totals(state: SimulationState):
    """Mass, momentum and energy of gas plus particles as ``(m, px, py, E)``."""
    vol = state.mesh.cell_volume[:, None]
    gas = (state.cons * vol).sum(axis=0)
    ps = state.particles
    if len(ps):
        m = ps.weight * ps.mass
        gas[0] += m.sum()
        gas[1:3] += ps.momentum()
        gas[3] += ps.energy()
    return gas


@dataclass
class ConservationAudit:
    """Running balance of gas + particle totals against what crossed the boundary.

    ``boundary`` accumulates net outflow through the domain boundary (fluxes
    and wall reactions), ``external`` the body-force input and wall impulses on
    particles, ``removed`` what left with particles.
    """

    initial: np.ndarray
    scale: np.ndarray
    boundary: np.ndarray = field(default_factory=lambda: np.zeros(4))
    external: np.ndarray = field(default_factory=lambda: np.zeros(4))
    removed: np.ndarray = field(default_factory=lambda: np.zeros(4))
    interior_defect: np.ndarray = field(default_factory=lambda: np.zeros(4))

    @classmethod
    def start(cls, state: SimulationState):
        init = totals(state)
        vol = state.mesh.cell_volume
        ps = state.particles
        mom = float(np.sum(np.hypot(state.cons[:, 1], state.cons[:, 2]) * vol))
        if len(ps):
            mom += float(np.sum(ps.weight * ps.mass * np.hypot(ps.vel[:, 0], ps.vel[:, 1])))
        scale = np.array([abs(init[0]), mom, mom, abs(init[3])])
        scale[scale == 0.0] = 1.0
        return cls(initial=init, scale=scale)

    def expected(self):
        return self.initial - self.boundary + self.external - self.removed

    def drift(self, state):
        """Absolute imbalance ``(m, px, py, E)``."""
        return totals(state) - self.expected()

    def relative_drift(self, state):
        return np.abs(self.drift(state)) / self.scale


@dataclass
class StepRecord:
    step: int
    t: float
    dt: float
    dt_e: float
    dt_v: float
    dt_p: float
    dt_prev: float | None
    retried: bool
    max_ring: int
    removed: int


@dataclass
class Snapshot:
    t: float
    step: int
    points: np.ndarray
    cons: np.ndarray
    particles: ParticleSet


# --- fluid update --------------------------------------------------------------

def forcing_source(cons, volume, accel, dt):
    """Integrated body-force input ``dt |V| (0, rho a, rho v . a)`` per cell."""
    ax, ay = accel
    out = np.zeros_like(cons)
    out[:, 1] = cons[:, 0] * ax
    out[:, 2] = cons[:, 0] * ay
    out[:, 3] = cons[:, 1] * ax + cons[:, 2] * ay
    return out * (dt * volume)[:, None]


@dataclass
class FluidUpdate:
    cons: np.ndarray
    flux: rm.FluxResult
    forcing: np.ndarray       # integrated body-force input per cell (final stage)


def fluid_update(mesh: Mesh, new_mesh: Mesh, cons, w, dt, opts: SolverOptions, kind, tangent,
                 prob=None, ustar=None, stage1_source=None, final_source=None, t=0.0):
    """Two-stage update of the cell averages over one step.

    ``prob``/``ustar`` are the edge problems and contact velocities of ``cons``
    (recomputed if omitted). The second stage re-solves the nodal problem for the
    averaged state while keeping the grid velocity ``w``. ``stage1_source`` and
    ``final_source`` are integrated per-cell additions to the stage-one and final
    balances.
    """
    gas, bc = opts.gas, opts.bc
    vol0 = mesh.cell_volume[:, None]
    vol1 = new_mesh.cell_volume[:, None]
    if prob is None:
        prob = rm.edge_problems(mesh, cons, gas, bc)
        ustar = rm.nodal_velocities(mesh, prob, kind, tangent)
    flux1 = rm.mesh_fluxes(mesh, prob, ustar, w)
    q1 = vol0 * cons - dt * flux1.residual
    if opts.forcing is not None:
        q1 = q1 + forcing_source(cons, mesh.cell_volume, opts.forcing(t), dt)
    if stage1_source is not None:
        q1 = q1 + stage1_source
    hat = q1 / vol1
    st.pressure(hat, gas)
    bar = 0.5 * (cons + hat)

    prob2 = rm.edge_problems(mesh, bar, gas, bc)
    ustar2 = rm.nodal_velocities(mesh, prob2, kind, tangent)
    flux2 = rm.mesh_fluxes(mesh, prob2, ustar2, w)
    q = vol0 * cons - dt * flux2.residual
    force = np.zeros_like(cons)
    if opts.forcing is not None:
        force = forcing_source(bar, mesh.cell_volume, opts.forcing(t + 0.5 * dt), dt)
        q = q + force
    if final_source is not None:
        q = q + final_source
    new = q / vol1
    st.pressure(new, gas)
    return FluidUpdate(new, flux2, force)


# --- the stepper ------------------------------------------------------------------

class Solver:
    """Advances a :class:`SimulationState` under fixed :class:`SolverOptions`."""

    def __init__(self, state: SimulationState, opts: SolverOptions):
        self.state = state
        self.opts = opts
        self.history: list[StepRecord] = []
        self.removed_log: list[tuple] = []
        mesh = state.mesh
        bnd = mesh.boundary_edges
        kinds = opts.bc.edge_kinds(mesh)
        wall = np.zeros(mesh.n_edges, dtype=bool)
        wall[bnd] = kinds == rm.WALL
        self.edge_is_wall = wall
        self.kind, self.tangent = vertex_constraints(mesh, wall)
        self.audit = ConservationAudit.start(state)
        st.pressure(state.cons, opts.gas)

    # Limits are evaluated on the current state before anything moves.
    def limits(self, prob=None, ustar=None):
        s, opts = self.state, self.opts
        if prob is None:
            prob = rm.edge_problems(s.mesh, s.cons, opts.gas, opts.bc)
            ustar = rm.nodal_velocities(s.mesh, prob, self.kind, self.tangent)
        prim = s.primitive(opts.gas)
        c = st.sound_speed(prim, opts.gas)
        dt_e = ts.dt_acoustic(s.mesh.cell_inradius, prim[:, 1:3], c, opts.dt.c_e)
        dt_v = ts.dt_volume(s.mesh, ustar, opts.dt.c_v)
        dt_p = ts.dt_particle(s.mesh, s.particles.host, s.particles.vel, opts.dt.c_p)
        return dt_e, dt_v, dt_p

    def step(self, t_end=math.inf):
        s, opts = self.state, self.opts
        prob = rm.edge_problems(s.mesh, s.cons, opts.gas, opts.bc)
        ustar = rm.nodal_velocities(s.mesh, prob, self.kind, self.tangent)
        dt_e, dt_v, dt_p = self.limits(prob, ustar)
        dt = ts.combine(dt_e, dt_v, dt_p, s.dt_prev, opts.dt.growth, opts.dt.first_factor)
        dt, landed = ts.land_on(s.t, dt, t_end)
        retried = False
        try:
            result = self._advance(dt, prob, ustar)
        except RETRYABLE as exc:
            log.warning("step %d failed with dt=%.6g (%s); retrying with dt/2", s.step, dt, exc)
            dt *= 0.5
            retried, landed = True, False
            result = self._advance(dt, prob, ustar)
        new_state, max_ring, removed = result
        if landed:
            new_state.t = t_end
        self.history.append(StepRecord(s.step, s.t, dt, dt_e, dt_v, dt_p, s.dt_prev,
                                       retried, max_ring, removed))
        self.state = new_state
        return new_state

    def _advance(self, dt, prob, ustar):
        s, opts = self.state, self.opts
        gas, mesh = opts.gas, s.mesh
        nc = mesh.n_cells
        w, new_mesh = vertex_motion(opts.motion, ustar, mesh, dt, self.kind, self.tangent,
                                    opts.smooth_passes)

        ps = s.particles
        stage1_source = final_source = None
        ledger = ExchangeLedger.zeros(nc)
        upd = None
        if len(ps):
            host_cons = s.cons[ps.host]
            rho = host_cons[:, 0]
            vel = host_cons[:, 1:3] / rho[:, None]
            temp = st.temperature(host_cons, gas)
            upd = rk2_particle_update(ps, rho, vel, temp, gas, opts.drag, dt)
            given = exchange_totals(ps.host, upd.impulse, upd.energy, ps.weight, nc)
            ledger = ExchangeLedger(given[:, 1:3].copy(), given[:, 3].copy())
            if opts.coupling == "two-way":
                if opts.exchange == "conservative":
                    final_source = -given
                else:
                    e0 = np.einsum("ij,ij->i", upd.force_start, ps.vel) + upd.heat_start
                    lit = exchange_totals(ps.host, dt * upd.force_start, dt * e0, ps.weight, nc)
                    stage1_source = final_source = -lit

        fl = fluid_update(mesh, new_mesh, s.cons, w, dt, opts, self.kind, self.tangent,
                          prob=prob, ustar=ustar, stage1_source=stage1_source,
                          final_source=final_source, t=s.t)

        new_ps, max_ring, n_removed = ps, 0, 0
        removed, wall_impulse = np.zeros(4), np.zeros(4)
        if upd is not None:
            new_ps = ps.copy()
            new_ps.vel, new_ps.temp, new_ps.pos = upd.vel, upd.temp, upd.pos
            new_ps, max_ring, n_removed, removed, wall_impulse = self._relocate(
                new_mesh, ps.pos, new_ps)

        # Audit bookkeeping once the step is known to succeed.
        a = self.audit
        a.boundary += dt * (fl.flux.boundary_flux + fl.flux.boundary_defect)
        a.interior_defect += dt * fl.flux.interior_defect
        a.external += fl.forcing.sum(axis=0) + wall_impulse
        if opts.coupling == "one-way" and upd is not None:
            # The gas does not feel the particles, so their gain is an external input.
            a.external += exchange_totals(ps.host, upd.impulse, upd.energy, ps.weight, nc).sum(axis=0)
        elif opts.exchange == "literal" and upd is not None:
            a.external += (final_source + exchange_totals(ps.host, upd.impulse, upd.energy,
                                                          ps.weight, nc)).sum(axis=0)
        a.removed += removed

        new_state = SimulationState(new_mesh, fl.cons, new_ps, s.t + dt, s.step + 1, dt, ledger)
        return new_state, max_ring, n_removed

    def _relocate(self, mesh: Mesh, old_pos, ps: ParticleSet):
        """Find new host cells; reflect particles off walls and drop those leaving elsewhere."""
        cells, rings = locate_many(mesh, ps.pos, ps.host, self.opts.max_ring)
        wall_impulse = np.zeros(4)
        keep = np.ones(len(ps), dtype=bool)
        for i in np.flatnonzero(cells == OUTSIDE_DOMAIN):
            start = old_pos[i].copy()
            skip = None
            for _ in range(4):
                e = self._exit_edge(mesh, start, ps.pos[i], skip)
                if not self.edge_is_wall[e]:
                    keep[i] = False
                    break
                n = mesh.edge_normal[e]
                a = mesh.points[mesh.edges[e, 0]]
                depth = float(np.dot(ps.pos[i] - a, n))
                if depth > 0.0:
                    ps.pos[i] = ps.pos[i] - 2.0 * depth * n
                vn = float(np.dot(ps.vel[i], n))
                if vn > 0.0:
                    m = ps.weight[i] * ps.mass[i]
                    ps.vel[i] = ps.vel[i] - 2.0 * vn * n
                    wall_impulse[1:3] -= 2.0 * m * vn * n
                res = locate(mesh, ps.pos[i], ps.host[i], self.opts.max_ring)
                if res.cell != OUTSIDE_DOMAIN:
                    cells[i], rings[i] = res.cell, res.ring
                    break
                start = ps.pos[i] + depth * n if depth > 0.0 else start
                skip = e
            else:
                keep[i] = False
        ps.host = cells
        removed = np.zeros(4)
        if not keep.all():
            gone = ps.select(~keep)
            m = gone.weight * gone.mass
            removed = np.array([m.sum(), *gone.momentum(), gone.energy()])
            for j in range(len(gone)):
                self.removed_log.append((self.state.t, int(gone.ids[j]), tuple(gone.pos[j])))
                log.info("particle %d left the domain at (%.6g, %.6g)",
                         gone.ids[j], *gone.pos[j])
            ps = ps.select(keep)
            rings = rings[keep]
        max_ring = int(rings.max()) if len(rings) else 0
        return ps, max_ring, int((~keep).sum()), removed, wall_impulse

    def _exit_edge(self, mesh, start, end, skip):
        e, _ = segment_exit(mesh, start, end)
        if e is not None and e != skip:
            return e
        # Fall back to the boundary edge nearest the end point.
        edges = mesh.boundary_edges
        if skip is not None:
            edges = edges[edges != skip]
        a = mesh.points[mesh.edges[edges, 0]]
        b = mesh.points[mesh.edges[edges, 1]]
        d = b - a
        t = np.clip(np.einsum("ij,ij->i", end - a, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
        gap = a + t[:, None] * d - end
        return int(edges[np.argmin(np.einsum("ij,ij->i", gap, gap))])

    def run(self, t_end, output_dt=None, on_snapshot=None, max_steps=None):
        """Advance to ``t_end`` and return the list of snapshots.

        Snapshots are taken at ``t = 0`` and at the first step reaching each
        multiple of ``output_dt``; the last one is always exactly at ``t_end``.
        """
        if t_end < 0.0:
            raise ValueError("t_end must be nonnegative")
        snaps = [self._snapshot(on_snapshot)]
        targets = []
        if output_dt:
            n = int(math.floor(t_end / output_dt + 1e-9))
            targets = [k * output_dt for k in range(1, n + 1)]
        k = 0
        steps = 0
        while self.state.t < t_end:
            if max_steps is not None and steps >= max_steps:
                break
            self.step(t_end)
            steps += 1
            took = False
            while k < len(targets) and self.state.t >= targets[k] * (1.0 - 1e-12):
                k += 1
                took = True
            if took or self.state.t >= t_end:
                if snaps[-1].step != self.state.step:
                    snaps.append(self._snapshot(on_snapshot))
        return snaps

    def _snapshot(self, callback):
        s = self.state
        snap = Snapshot(s.t, s.step, s.mesh.points.copy(), s.cons.copy(), s.particles.copy())
        if callback is not None:
            callback(snap, s)
        return snap


def run(state: SimulationState, opts: SolverOptions, t_end, output_dt=None, on_snapshot=None):
    solver = Solver(state, opts)
    snaps = solver.run(t_end, output_dt, on_snapshot)
    return solver, snaps
