"""Command-line entry point: ``ejecta run | mesh-gen | verify``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import output, verify
from .cases import CASES, build_case
from .config import SimConfig, case_spec, dump_config, load_config
from .errors import EjectaError, ValidationError
from .mesh import read_mesh, rectangle_mesh, write_mesh
from .particles import DRAG_MODELS
from .solver import EXCHANGES, MOTION_MODES, Solver
from .tracking import OUTSIDE_DOMAIN, brute_force_locate_many


def _domain(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected x0,x1,y0,y1")
    try:
        x0, x1, y0, y1 = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not numbers: {text!r}") from None
    if not (x0 < x1 and y0 < y1):
        raise argparse.ArgumentTypeError("need x0 < x1 and y0 < y1")
    return x0, x1, y0, y1


def build_parser():
    p = argparse.ArgumentParser(prog="ejecta", description="Gas-particle flow on moving polygonal meshes.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a case and write snapshots")
    r.add_argument("--case", choices=sorted(CASES))
    r.add_argument("--config", type=Path, help="TOML file with overrides")
    r.add_argument("--out", type=Path, help="output directory (default $EJECTA_OUT/<case>)")
    r.add_argument("--motion", choices=MOTION_MODES)
    r.add_argument("--drag", choices=DRAG_MODELS)
    r.add_argument("--exchange", choices=EXCHANGES)
    r.add_argument("--tend", type=float, help="end time")
    r.add_argument("--serial", action="store_true", help="reproducible serial execution")

    m = sub.add_parser("mesh-gen", help="write a structured or jittered quad mesh")
    m.add_argument("--nx", type=int, required=True)
    m.add_argument("--ny", type=int, required=True)
    m.add_argument("--domain", type=_domain, default=(0.0, 1.0, 0.0, 1.0), help="x0,x1,y0,y1")
    m.add_argument("--perturb", type=float, default=0.0, help="vertex jitter as a cell fraction")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", type=Path, help="mesh file (default $EJECTA_OUT/mesh.txt)")

    sub.add_parser("verify", help="run the acceptance checks and report pass/fail")
    return p


def _resolve_config(args) -> SimConfig:
    if args.config is not None:
        cfg = load_config(args.config, case=args.case)
    elif args.case is None:
        raise ValidationError("case", "give --case or a config file naming one")
    else:
        cfg = SimConfig(args.case)
    return cfg.with_values(**{"motion.mode": args.motion, "particles.drag": args.drag,
                              "particles.exchange": args.exchange, "run.t_end": args.tend,
                              "run.serial": True if args.serial else None})


def _load_particles(path, state):
    ps = output.read_particle_file(path)
    ps.host = brute_force_locate_many(state.mesh, ps.pos)
    if np.any(ps.host == OUTSIDE_DOMAIN):
        i = int(np.flatnonzero(ps.host == OUTSIDE_DOMAIN)[0])
        raise EjectaError(f"{path}: particle {i} lies outside the mesh")
    return replace(state, particles=ps)


def cmd_run(args):
    cfg = _resolve_config(args)
    spec = case_spec(cfg)
    mesh = read_mesh(cfg.get("mesh.file")) if cfg.get("mesh.file") else None
    state, opts = build_case(spec, mesh)
    opts.max_ring = cfg.get("run.max_ring", opts.max_ring)
    if cfg.get("particles.file"):
        state = _load_particles(cfg.get("particles.file"), state)
    out = args.out or (Path(cfg.output("dir")) if cfg.output("dir") else
                       output.output_root() / cfg.case)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_config(cfg, spec))

    writer = output.SnapshotWriter(out, opts.gas, cfg.output("formats"),
                                   particles=cfg.output("particles"), slice=cfg.output("slice"))
    solver = Solver(state, opts)
    snaps = solver.run(spec.t_end, spec.output_dt, on_snapshot=writer)
    writer.finish()
    output.write_history(out / "dt_history.csv", solver.history)
    output.write_removed(out / "removed_particles.csv", solver.removed_log)
    drift = solver.audit.relative_drift(solver.state)
    print(f"{cfg.case}: {len(solver.history)} steps to t={solver.state.t!r}, "
          f"{len(snaps)} snapshots in {out}")
    print("relative conservation drift (m, px, py, E): "
          + " ".join(f"{d:.2e}" for d in drift))
    return 0


def cmd_mesh_gen(args):
    if args.nx < 1 or args.ny < 1:
        raise EjectaError("mesh-gen: --nx and --ny must be positive")
    if not 0.0 <= args.perturb < 0.5:
        raise EjectaError("mesh-gen: --perturb must lie in [0, 0.5)")
    mesh = rectangle_mesh(args.nx, args.ny, *args.domain, perturb=args.perturb, seed=args.seed)
    path = args.out or output.output_root() / "mesh.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_mesh(mesh, path)
    print(f"wrote {mesh.n_vertices} vertices and {mesh.n_cells} cells to {path}")
    return 0


def cmd_verify(args):
    results = verify.run_all(echo=lambda line: print(line, flush=True))
    failed = [r for r in results if not r.passed]
    if failed:
        names = ", ".join(f"{r.number} ({r.title})" for r in failed)
        print(f"failed criteria: {names}", file=sys.stderr)
        return 1
    print(f"all {len(results)} criteria passed")
    return 0


COMMANDS = {"run": cmd_run, "mesh-gen": cmd_mesh_gen, "verify": cmd_verify}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (EjectaError, OSError, ValueError) as exc:
        print(f"ejecta {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
