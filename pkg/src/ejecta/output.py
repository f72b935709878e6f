"""ASCII writers for field snapshots, particles, 1-D slices and run logs.

Floats are written with ``repr`` so that reading a file back gives the exact
in-memory values.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from . import state as st
from .mesh import Mesh
from .particles import ParticleSet

FIELD_COLUMNS = ("cell", "x", "y", "rho", "u", "v", "P")
PARTICLE_COLUMNS = ("id", "x", "y", "vx", "vy", "T", "r")
SLICE_COLUMNS = ("x", "rho", "u", "v", "P")


def output_root(out=None):
    """Directory for outputs: ``out``, else ``$EJECTA_OUT``, else ``./ejecta-out``."""
    if out is not None:
        return Path(out)
    return Path(os.environ.get("EJECTA_OUT", "ejecta-out"))


def _fmt(x):
    return repr(float(x))


def _open(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_vtk(path, mesh: Mesh, cons, gas: st.GasModel, title="ejecta snapshot"):
    """Legacy-VTK ASCII unstructured grid with cell data rho, P, |v| and v."""
    prim = st.to_primitive(cons, gas)
    speed = np.hypot(prim[:, 1], prim[:, 2])
    cells = mesh.topo.cells
    size = sum(len(c) + 1 for c in cells)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.points]
    lines.append(f"CELLS {len(cells)} {size}")
    lines += [" ".join(map(str, (len(c),) + tuple(c))) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += ["5" if len(c) == 3 else "9" if len(c) == 4 else "7" for c in cells]
    lines.append(f"CELL_DATA {len(cells)}")
    for name, values in (("rho", prim[:, 0]), ("P", prim[:, 3]), ("speed", speed)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_fmt(x) for x in values]
    lines.append("VECTORS v double")
    lines += [f"{_fmt(u)} {_fmt(v)} 0.0" for u, v in prim[:, 1:3]]
    with _open(path) as fh:
        fh.write("\n".join(lines) + "\n")


def write_csv_fields(path, mesh: Mesh, cons, gas: st.GasModel):
    """One row per cell: index, centroid, rho, u, v, P."""
    prim = st.to_primitive(cons, gas)
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_COLUMNS)
        for c in range(mesh.n_cells):
            x, y = mesh.cell_centroid[c]
            w.writerow([c, _fmt(x), _fmt(y), *(_fmt(v) for v in prim[c])])


def read_csv_table(path):
    """Header and float rows of a CSV written by this module."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(rows[0]))


def write_particles(path, ps: ParticleSet):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(PARTICLE_COLUMNS)
        for i in range(len(ps)):
            w.writerow([int(ps.ids[i]), _fmt(ps.pos[i, 0]), _fmt(ps.pos[i, 1]),
                        _fmt(ps.vel[i, 0]), _fmt(ps.vel[i, 1]), _fmt(ps.temp[i]),
                        _fmt(ps.radius[i])])


def read_particle_file(path):
    """Particle initialisation file: one ``x y vx vy r rho_p c_p T`` line per particle."""
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{n}: expected 8 columns, found {len(parts)}")
        rows.append([float(p) for p in parts])
    data = np.array(rows).reshape(-1, 8)
    return ParticleSet(pos=data[:, 0:2], vel=data[:, 2:4], radius=data[:, 4],
                       density=data[:, 5], spec_heat=data[:, 6], temp=data[:, 7],
                       host=np.full(len(data), -1), weight=1.0)


def column_slice(mesh: Mesh, cons, gas: st.GasModel, rel_tol=1e-9):
    """Average cells sharing a centroid x into one row per column, sorted by x."""
    prim = st.to_primitive(cons, gas)
    x = mesh.cell_centroid[:, 0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    width = float(np.ptp(x)) or 1.0
    breaks = np.flatnonzero(np.diff(xs) > rel_tol * width) + 1
    groups = np.split(order, breaks)
    rows = np.array([[x[g].mean(), *prim[g].mean(axis=0)] for g in groups])
    return rows


def write_slice(path, mesh: Mesh, cons, gas: st.GasModel):
    rows = column_slice(mesh, cons, gas)
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(SLICE_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_history(path, history):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(("step", "t", "dt", "dt_e", "dt_v", "dt_p", "dt_prev", "retried",
                    "max_ring", "removed"))
        for h in history:
            w.writerow([h.step, _fmt(h.t), _fmt(h.dt), _fmt(h.dt_e), _fmt(h.dt_v), _fmt(h.dt_p),
                        "" if h.dt_prev is None else _fmt(h.dt_prev), int(h.retried),
                        h.max_ring, h.removed])


def write_removed(path, removed_log):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(("t", "id", "x", "y"))
        for t, pid, (x, y) in removed_log:
            w.writerow([_fmt(t), pid, _fmt(x), _fmt(y)])


class SnapshotWriter:
    """Callback for :meth:`Solver.run` writing each snapshot in the chosen formats."""

    def __init__(self, out_dir, gas, formats=("csv-fields", "vtk-legacy"), particles=True,
                 slice=True):
        self.out = Path(out_dir)
        self.gas = gas
        self.formats = tuple(formats)
        self.particles = particles
        self.slice = slice
        self.written = []
        self.times = []

    def __call__(self, snap, state):
        tag = f"{snap.step:06d}"
        mesh = state.mesh
        if "csv-fields" in self.formats:
            self._record(self.out / f"fields_{tag}.csv", write_csv_fields, mesh, snap.cons)
        if "vtk-legacy" in self.formats:
            self._record(self.out / f"fields_{tag}.vtk", write_vtk, mesh, snap.cons)
        if self.slice:
            self._record(self.out / f"slice_{tag}.csv", write_slice, mesh, snap.cons)
        if self.particles and len(snap.particles):
            path = self.out / f"particles_{tag}.csv"
            write_particles(path, snap.particles)
            self.written.append(path)
        self.times.append((snap.step, snap.t))

    def _record(self, path, writer, mesh, cons):
        writer(path, mesh, cons, self.gas)
        self.written.append(path)

    def finish(self):
        with _open(self.out / "snapshots.csv") as fh:
            w = csv.writer(fh)
            w.writerow(("step", "t"))
            for step, t in self.times:
                w.writerow([step, _fmt(t)])
