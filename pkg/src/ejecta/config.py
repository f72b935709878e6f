"""TOML run configuration: strict parsing, validation and a deterministic echo.

A configuration names a case and overrides any of its parameters. Keys are
grouped in tables (``[dt]``, ``[gas]``, ...) or written dotted (``dt.c_e = 0.35``).
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cases import CASES, CaseSpec, ParticleSeed, make_case
from .errors import ParseError, ValidationError
from .particles import DRAG_MODELS
from .solver import COUPLINGS, EXCHANGES, MOTION_MODES
from .state import GasModel
from .timestep import DtCoefficients

FORMATS = ("csv-fields", "vtk-legacy")
FORCINGS = ("none", "constant", "sinusoidal")


def _number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _positive(v):
    return _number(v) and v > 0


def _nonneg(v):
    return _number(v) and v >= 0


def _count(v):
    return isinstance(v, int) and not isinstance(v, bool) and v > 0


def _choice(options):
    return lambda v: v in options


def _vector(n, check=_number):
    return lambda v: isinstance(v, list) and len(v) == n and all(check(x) for x in v)


def _domain(v):
    return _vector(4)(v) and v[0] < v[1] and v[2] < v[3]


def _state(v):
    return _vector(3)(v) and v[0] > 0 and v[2] > 0


# key -> (check, description)
SCHEMA = {
    "case": (_choice(tuple(CASES)), f"one of {sorted(CASES)}"),
    "mesh.nx": (_count, "a positive integer"),
    "mesh.ny": (_count, "a positive integer"),
    "mesh.domain": (_domain, "[x0, x1, y0, y1] with x0 < x1 and y0 < y1"),
    "mesh.perturb": (lambda v: _nonneg(v) and v < 0.5, "a fraction in [0, 0.5)"),
    "mesh.seed": (lambda v: isinstance(v, int) and not isinstance(v, bool), "an integer"),
    "mesh.file": (lambda v: isinstance(v, str), "a path"),
    "gas.gamma": (lambda v: _number(v) and v > 1, "a number greater than 1"),
    "gas.mu": (_nonneg, "a nonnegative number"),
    "gas.cpg": (_positive, "a positive number"),
    "initial.left": (_state, "[rho, u, P] with rho, P > 0"),
    "initial.right": (_state, "[rho, u, P] with rho, P > 0"),
    "initial.split": (_number, "a number"),
    "particles.drag": (_choice(DRAG_MODELS), f"one of {list(DRAG_MODELS)}"),
    "particles.coupling": (_choice(COUPLINGS), f"one of {list(COUPLINGS)}"),
    "particles.exchange": (_choice(EXCHANGES), f"one of {list(EXCHANGES)}"),
    "particles.radius": (_positive, "a positive number"),
    "particles.density": (_positive, "a positive number"),
    "particles.spec_heat": (_positive, "a positive number"),
    "particles.temperature": (_positive, "a positive number"),
    "particles.fraction": (lambda v: _number(v) and 0 < v < 1, "a fraction in (0, 1)"),
    "particles.max_parcels_per_cell": (_count, "a positive integer"),
    "particles.velocity": (_vector(2), "[vx, vy]"),
    "particles.file": (lambda v: isinstance(v, str), "a path"),
    "motion.mode": (_choice(MOTION_MODES), f"one of {list(MOTION_MODES)}"),
    "motion.smooth_passes": (lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0,
                             "a nonnegative integer"),
    "dt.c_e": (lambda v: _number(v) and 0 < v < 1, "a number in (0, 1)"),
    "dt.c_v": (_positive, "a positive number"),
    "dt.c_p": (_positive, "a positive number"),
    "dt.growth": (lambda v: _number(v) and v >= 1, "a number >= 1"),
    "forcing.kind": (_choice(FORCINGS), f"one of {list(FORCINGS)}"),
    "forcing.accel": (_number, "a number"),
    "forcing.omega": (_nonneg, "a nonnegative number"),
    "run.t_end": (_nonneg, "a nonnegative number"),
    "run.output_dt": (_positive, "a positive number"),
    "run.max_ring": (_count, "a positive integer"),
    "run.serial": (lambda v: isinstance(v, bool), "true or false"),
    "output.dir": (lambda v: isinstance(v, str), "a path"),
    "output.formats": (lambda v: isinstance(v, list) and all(f in FORMATS for f in v),
                       f"a list drawn from {list(FORMATS)}"),
    "output.particles": (lambda v: isinstance(v, bool), "true or false"),
    "output.slice": (lambda v: isinstance(v, bool), "true or false"),
}

OUTPUT_DEFAULTS = {"dir": None, "formats": ["csv-fields", "vtk-legacy"],
                   "particles": True, "slice": True}


@dataclass
class SimConfig:
    """A case name plus the validated overrides, keyed by dotted name."""

    case: str | None = None
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def with_values(self, **dotted):
        vals = dict(self.values)
        for k, v in dotted.items():
            if v is not None:
                _check(k, v)
                vals[k] = v
        return replace(self, values=vals)

    def output(self, key):
        return self.values.get(f"output.{key}", OUTPUT_DEFAULTS[key])


def _check(key, value):
    if key not in SCHEMA:
        raise ValidationError(key, "unknown key")
    check, what = SCHEMA[key]
    if not check(value):
        raise ValidationError(key, f"expected {what}, got {value!r}")


def _flatten(table, prefix=""):
    out = {}
    for k, v in table.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


_POSITION = re.compile(r"line (\d+), column (\d+)")


def parse_config(text, case=None) -> SimConfig:
    """Parse and validate TOML text; ``case`` (e.g. from the command line) wins over the file."""
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _POSITION.search(str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(str(exc), line=line, column=col) from None
    flat = _flatten(table)
    for key, value in flat.items():
        _check(key, value)
    name = case if case is not None else flat.pop("case", None)
    flat.pop("case", None)
    if name is None:
        raise ValidationError("case", "no case given in the file or on the command line")
    _check("case", name)
    return SimConfig(name, flat)


def load_config(path, case=None) -> SimConfig:
    return parse_config(Path(path).read_text(), case)


def case_spec(cfg: SimConfig) -> CaseSpec:
    """The case of ``cfg`` with every override applied."""
    spec = make_case(cfg.case)
    v = cfg.values
    kw = {}
    for key, attr in (("mesh.nx", "nx"), ("mesh.ny", "ny"), ("mesh.perturb", "perturb"),
                      ("mesh.seed", "rng_seed"), ("initial.split", "split"),
                      ("particles.drag", "drag"), ("particles.coupling", "coupling"),
                      ("particles.exchange", "exchange"), ("motion.mode", "motion"),
                      ("motion.smooth_passes", "smooth_passes"), ("forcing.kind", "forcing"),
                      ("forcing.accel", "accel"), ("forcing.omega", "omega"),
                      ("run.t_end", "t_end"), ("run.output_dt", "output_dt")):
        if key in v:
            kw[attr] = v[key]
    if "mesh.domain" in v:
        kw["domain"] = tuple(float(x) for x in v["mesh.domain"])
    for key in ("initial.left", "initial.right"):
        if key in v:
            kw[key.split(".")[1]] = tuple(float(x) for x in v[key])
    if any(k.startswith("gas.") for k in v):
        g = spec.gas
        kw["gas"] = GasModel(v.get("gas.gamma", g.gamma), v.get("gas.mu", g.mu),
                             v.get("gas.cpg", g.cpg))
    if any(k.startswith("dt.") for k in v):
        d = spec.dt
        kw["dt"] = DtCoefficients(v.get("dt.c_e", d.c_e), v.get("dt.c_v", d.c_v),
                                  v.get("dt.c_p", d.c_p), v.get("dt.growth", d.growth))
    seed_keys = {"particles.radius": "radius", "particles.density": "density",
                 "particles.spec_heat": "spec_heat", "particles.temperature": "temp",
                 "particles.fraction": "fraction",
                 "particles.max_parcels_per_cell": "max_parcels_per_cell"}
    seed_kw = {attr: v[key] for key, attr in seed_keys.items() if key in v}
    if "particles.velocity" in v:
        seed_kw["velocity"] = tuple(float(x) for x in v["particles.velocity"])
    if seed_kw:
        if spec.seed is None:
            if "radius" not in seed_kw:
                raise ValidationError("particles.radius", "required to add particles to this case")
            kw["seed"] = ParticleSeed(**seed_kw)
        else:
            kw["seed"] = replace(spec.seed, **seed_kw)
    if kw.get("forcing", spec.forcing) == "sinusoidal" and kw.get("omega", spec.omega) <= 0:
        raise ValidationError("forcing.omega", "sinusoidal forcing needs a positive frequency")
    return spec.with_overrides(**kw)


def resolved(cfg: SimConfig, spec: CaseSpec | None = None) -> dict:
    """Every effective setting as a nested table, for the provenance echo."""
    if spec is None:
        spec = case_spec(cfg)
    out = {
        "case": cfg.case,
        "mesh": {"nx": spec.nx, "ny": spec.ny, "domain": [float(x) for x in spec.domain],
                 "perturb": float(spec.perturb), "seed": spec.rng_seed},
        "gas": {"gamma": spec.gas.gamma, "mu": spec.gas.mu, "cpg": spec.gas.cpg},
        "initial": {"left": [float(x) for x in spec.left], "split": float(spec.split)},
        "particles": {"drag": spec.drag, "coupling": spec.coupling, "exchange": spec.exchange},
        "motion": {"mode": spec.motion, "smooth_passes": spec.smooth_passes},
        "dt": {"c_e": spec.dt.c_e, "c_v": spec.dt.c_v, "c_p": spec.dt.c_p,
               "growth": spec.dt.growth},
        "forcing": {"kind": spec.forcing, "accel": float(spec.accel), "omega": float(spec.omega)},
        "run": {"t_end": float(spec.t_end), "max_ring": cfg.get("run.max_ring", 3),
                "serial": cfg.get("run.serial", False)},
        "output": {"formats": list(cfg.output("formats")), "particles": cfg.output("particles"),
                   "slice": cfg.output("slice")},
    }
    if spec.right is not None:
        out["initial"]["right"] = [float(x) for x in spec.right]
    if spec.output_dt is not None:
        out["run"]["output_dt"] = float(spec.output_dt)
    if "mesh.file" in cfg.values:
        out["mesh"]["file"] = cfg.values["mesh.file"]
    if spec.seed is not None:
        s = spec.seed
        p = out["particles"]
        p.update(radius=s.radius, density=s.density, spec_heat=s.spec_heat,
                 velocity=[float(x) for x in s.velocity],
                 max_parcels_per_cell=s.max_parcels_per_cell)
        if s.temp is not None:
            p["temperature"] = s.temp
        if s.fraction is not None:
            p["fraction"] = s.fraction
    if "particles.file" in cfg.values:
        out["particles"]["file"] = cfg.values["particles.file"]
    return out


def dump_config(cfg: SimConfig, spec: CaseSpec | None = None) -> str:
    """Deterministic TOML text of the fully resolved configuration."""
    return tomli_w.dumps(_sorted(resolved(cfg, spec)))


def _sorted(table):
    return {k: _sorted(v) if isinstance(v, dict) else v for k, v in sorted(table.items())}
