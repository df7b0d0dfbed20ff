"""Declarative run configuration.

Configurations are YAML documents. Every key is checked against a fixed
schema, unknown keys are rejected with a suggestion, and physical bounds are
enforced at parse time so that a config that parses can be run.

Example::

    grid: {n: 64}
    physics: {epsilon: 0.1, nu: 1.0, mu: 1.0}
    initial_data: {kind: quasi_homog, band: 4}
    integrator: {scheme: imex_rk3, cfl: 0.4, t_end: 1.0}
    experiment: {kind: run, system: primitive}
    output: {directory: out, timeseries_every: 1, snapshot_every: 0}
    seed: 3
"""

from __future__ import annotations

import difflib
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import yaml

from .dynamics import CoefficientLaw, LimitParams, PhysParams
from .errors import BoundsError, ConfigError, FloorViolation, ParseError, PresetInvalid, SchemaError
from .experiments import InitialDataPreset
from .grid import GridSpec
from .timestepper import IntegratorConfig

__all__ = ["RunConfig", "ExperimentSpec", "OutputSpec", "parse_config", "load_config",
           "default_config_text", "EXPERIMENT_KINDS"]

EXPERIMENT_KINDS = ("run", "sweep_qh", "sweep_nh", "jsweep", "stability", "check")

# common misspellings and synonyms, mapped to schema keys
_ALIASES = {
    "viscosity": "nu",
    "kinematic_viscosity": "nu",
    "resistivity": "mu",
    "diffusivity": "mu",
    "eta": "mu",
    "eps": "epsilon",
    "rossby": "epsilon",
    "rossby_number": "epsilon",
    "epsilons": "epsilon_list",
    "resolution": "n",
    "size": "n",
    "timestep": "dt",
    "time_step": "dt",
    "end_time": "t_end",
    "tmax": "t_end",
    "method": "scheme",
    "preset": "kind",
    "type": "kind",
    "dir": "directory",
    "outdir": "directory",
}

_SCHEMA: dict[str, Any] = {
    "grid": {"n": None, "length": None},
    "physics": {"epsilon": None, "epsilon_list": None, "nu": None, "mu": None,
                "rho_min": None, "rho_star": None, "qh_cancellation": None},
    "initial_data": {"kind": None, "name": None, "band": None, "amplitude": None, "u_amplitude": None,
                     "b_amplitude": None, "r_amplitude": None, "velocity": None, "rho0_amplitude": None},
    "integrator": {"scheme": None, "dt": None, "cfl": None, "t_end": None, "coriolis_dt_factor": None,
                   "dealias": None, "invariant_check_every": None, "dt_max": None},
    "experiment": {"kind": None, "system": None, "norms": None, "samples": None, "workers": None,
                   "j_list": None, "deltas": None, "grids": None},
    "output": {"directory": None, "snapshot_every": None, "timeseries_every": None},
    "seed": None,
}
_LAW_KEYS = {"kind": None, "value": None, "c0": None, "c1": None, "nodes": None, "values": None, "floor": None}


def _suggest(key: str, allowed) -> str | None:
    allowed = list(allowed)
    k = key.lower()
    if k in _ALIASES and _ALIASES[k] in allowed:
        return _ALIASES[k]
    hit = difflib.get_close_matches(k, list(_ALIASES), n=1, cutoff=0.8)
    if hit and _ALIASES[hit[0]] in allowed:
        return _ALIASES[hit[0]]
    hit = difflib.get_close_matches(k, allowed, n=1, cutoff=0.6)
    return hit[0] if hit else None


# ---------------------------------------------------------------------------
# parsing with line tracking


def _node_lines(node, path: str, out: dict[str, int]) -> None:
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for knode, vnode in node.value:
            sub = f"{path}.{knode.value}" if path else str(knode.value)
            out.setdefault(sub, knode.start_mark.line + 1)
            _node_lines(vnode, sub, out)
            out[sub] = knode.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _node_lines(item, f"{path}[{i}]", out)


class _Ctx:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines

    def line(self, path: str) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rsplit(".", 1)[0] if "." in path else ""
        return None

    def schema(self, path: str, msg: str) -> SchemaError:
        return SchemaError(msg, path, self.line(path))

    def bounds(self, path: str, msg: str) -> BoundsError:
        return BoundsError(msg, path, self.line(path))


def _check_keys(ctx: _Ctx, section: dict, allowed: dict, prefix: str) -> None:
    for key in section:
        if key not in allowed:
            path = f"{prefix}.{key}" if prefix else str(key)
            hint = _suggest(str(key), allowed)
            msg = f"unknown key {key!r}" + (f"; did you mean {hint!r}?" if hint else "")
            raise ctx.schema(path, msg)


def _number(ctx: _Ctx, value, path: str, *, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ctx.schema(path, f"expected a number, got {type(value).__name__}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ctx.schema(path, "expected an integer")
        return int(value)
    if not math.isfinite(value):
        raise ctx.bounds(path, "must be finite")
    return float(value)


def _positive(ctx, value, path, *, integer=False, allow_zero=False):
    v = _number(ctx, value, path, integer=integer)
    if v < 0 or (v == 0 and not allow_zero):
        raise ctx.bounds(path, f"must be {'nonnegative' if allow_zero else 'positive'}, got {v}")
    return v


def _bool(ctx, value, path) -> bool:
    if not isinstance(value, bool):
        raise ctx.schema(path, "expected true or false")
    return value


def _num_list(ctx, value, path) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ctx.schema(path, "expected a nonempty list of numbers")
    return [_number(ctx, v, f"{path}[{i}]") for i, v in enumerate(value)]


def _section(ctx, data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ctx.schema(name, "expected a mapping")
    _check_keys(ctx, sec, _SCHEMA[name], name)
    return sec


def _law(ctx, value, path) -> tuple[CoefficientLaw, Any]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        v = _positive(ctx, value, path)
        return CoefficientLaw.constant(v), v
    if not isinstance(value, dict):
        raise ctx.schema(path, "expected a number or a law mapping")
    _check_keys(ctx, value, _LAW_KEYS, path)
    kind = value.get("kind", "constant")
    floor = value.get("floor")
    if floor is not None:
        floor = _positive(ctx, floor, f"{path}.floor")
    try:
        if kind == "constant":
            law = CoefficientLaw("constant", (_positive(ctx, value.get("value"), f"{path}.value"),), floor)
        elif kind == "affine":
            law = CoefficientLaw("affine", (_number(ctx, value.get("c0"), f"{path}.c0"),
                                            _number(ctx, value.get("c1"), f"{path}.c1")), floor)
        elif kind == "table":
            law = CoefficientLaw("table", (_num_list(ctx, value.get("nodes"), f"{path}.nodes"),
                                           _num_list(ctx, value.get("values"), f"{path}.values")), floor)
        else:
            raise ctx.schema(f"{path}.kind", f"unknown law kind {kind!r}; expected constant, affine or table")
    except FloorViolation as exc:
        raise ctx.bounds(path, str(exc)) from None
    except ValueError as exc:
        raise ctx.bounds(path, str(exc)) from None
    norm = {"kind": law.kind, "params": _jsonable(law.params), "floor": law.floor}
    return law, norm


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "run"
    system: str = "primitive"
    norms: tuple = (0.0, -1.0)
    samples: int = 17
    workers: int = 1
    j_list: tuple = (8.0, 16.0, 32.0)
    deltas: tuple = (1e-3, 5e-4, 2.5e-4)
    grids: tuple = (64,)


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    snapshot_every: int = 0
    timeseries_every: int = 1


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration.

    ``normalized`` is the defaults-filled plain-data form used for hashing and
    for the manifest.
    """

    grid: GridSpec
    physics: PhysParams | None
    epsilons: tuple
    limit: LimitParams
    preset: InitialDataPreset
    integrator: IntegratorConfig
    experiment: ExperimentSpec
    output: OutputSpec
    seed: int | None
    normalized: dict = field(compare=False, repr=False)

    def config_hash(self) -> str:
        """sha256 of the canonical form, independent of formatting and output directory."""
        data = json.loads(json.dumps(self.normalized))
        data.get("output", {}).pop("directory", None)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML configuration.

    Raises
    ------
    ParseError
        Malformed YAML.
    SchemaError
        Unknown key, wrong type, or a missing mandatory entry.
    BoundsError
        A value outside its admissible range.
    """
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(str(getattr(exc, "problem", exc)), None, mark.line + 1 if mark else None) from None
    lines: dict[str, int] = {}
    if node is not None:
        _node_lines(node, "", lines)
    ctx = _Ctx(lines)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ctx.schema("", "top level must be a mapping")
    _check_keys(ctx, data, _SCHEMA, "")
    norm: dict[str, Any] = {}

    # grid
    g = _section(ctx, data, "grid")
    if "n" not in g:
        raise ctx.schema("grid.n", "missing mandatory key")
    n = _positive(ctx, g["n"], "grid.n", integer=True)
    length = _positive(ctx, g.get("length", 2 * math.pi), "grid.length")
    if abs(length - 2 * math.pi) > 1e-12:
        raise ctx.bounds("grid.length", "only the 2*pi torus is supported")
    try:
        grid = GridSpec(n)
    except ValueError as exc:
        raise ctx.bounds("grid.n", str(exc)) from None
    norm["grid"] = {"n": n, "length": 2 * math.pi}

    # experiment (needed to decide which physics keys are mandatory)
    e = _section(ctx, data, "experiment")
    kind = e.get("kind", "run")
    if kind not in EXPERIMENT_KINDS:
        raise ctx.schema("experiment.kind", f"unknown experiment {kind!r}; expected one of {EXPERIMENT_KINDS}")
    system = e.get("system", "primitive")
    if system not in ("primitive", "limit"):
        raise ctx.schema("experiment.system", "expected 'primitive' or 'limit'")
    norms = tuple(_num_list(ctx, e["norms"], "experiment.norms")) if "norms" in e else (0.0, -1.0)
    samples = _positive(ctx, e.get("samples", 17), "experiment.samples", integer=True)
    if samples < 2:
        raise ctx.bounds("experiment.samples", "need at least 2 sample times")
    workers = _positive(ctx, e.get("workers", 1), "experiment.workers", integer=True)
    j_list = tuple(_num_list(ctx, e["j_list"], "experiment.j_list")) if "j_list" in e else (8.0, 16.0, 32.0)
    if any(b <= a for a, b in zip(j_list, j_list[1:])) or j_list[0] < 1:
        raise ctx.bounds("experiment.j_list", "must be increasing and >= 1")
    deltas = tuple(_num_list(ctx, e["deltas"], "experiment.deltas")) if "deltas" in e else (1e-3, 5e-4, 2.5e-4)
    if any(d < 0 for d in deltas):
        raise ctx.bounds("experiment.deltas", "must be nonnegative")
    grids = tuple(int(_positive(ctx, v, f"experiment.grids[{i}]", integer=True))
                  for i, v in enumerate(e.get("grids", [64]) or []))
    exp = ExperimentSpec(kind, system, norms, samples, workers, j_list, deltas, grids)
    norm["experiment"] = {"kind": kind, "system": system, "norms": list(norms), "samples": samples,
                          "workers": workers, "j_list": list(j_list), "deltas": list(deltas),
                          "grids": list(grids)}

    # physics
    p = _section(ctx, data, "physics")
    if "epsilon" in p and "epsilon_list" in p:
        raise ctx.schema("physics.epsilon_list", "give either epsilon or epsilon_list, not both")
    if "epsilon_list" in p:
        eps = tuple(_num_list(ctx, p["epsilon_list"], "physics.epsilon_list"))
        path_eps = "physics.epsilon_list"
    elif "epsilon" in p:
        eps = (_number(ctx, p["epsilon"], "physics.epsilon"),)
        path_eps = "physics.epsilon"
    else:
        eps = ()
        path_eps = "physics.epsilon"
    for v in eps:
        if not (0 < v <= 1):
            raise ctx.bounds(path_eps, f"epsilon must lie in (0, 1], got {v}")
    if len(eps) > 1 and any(b >= a for a, b in zip(eps, eps[1:])):
        raise ctx.bounds(path_eps, "epsilons must be strictly decreasing")
    needs_eps = kind in ("sweep_qh", "sweep_nh") or (kind == "run" and system == "primitive")
    if needs_eps and not eps:
        raise ctx.schema(path_eps, "missing mandatory key for this experiment")
    if kind in ("sweep_qh", "sweep_nh") and "epsilon_list" not in p:
        raise ctx.schema("physics.epsilon_list", "sweeps need an epsilon_list")
    nu, nu_n = _law(ctx, p.get("nu", 1.0), "physics.nu")
    mu, mu_n = _law(ctx, p.get("mu", 1.0), "physics.mu")
    rho_min = _positive(ctx, p.get("rho_min", 0.05), "physics.rho_min")
    rho_star = _positive(ctx, p.get("rho_star", 1.5), "physics.rho_star")
    if rho_min > rho_star:
        raise ctx.bounds("physics.rho_min", "must not exceed rho_star")
    qh = _bool(ctx, p.get("qh_cancellation", kind == "sweep_qh"), "physics.qh_cancellation")
    physics = None
    if eps:
        try:
            physics = PhysParams(eps[0], nu, mu, rho_star, rho_min, qh)
        except FloorViolation as exc:
            raise ctx.bounds("physics", str(exc)) from None
    limit = LimitParams(nu.value(1.0), mu.value(1.0))
    norm["physics"] = {"epsilons": list(eps), "nu": nu_n, "mu": mu_n, "rho_min": rho_min,
                       "rho_star": rho_star, "qh_cancellation": qh}

    # seed
    seed = data.get("seed")
    if seed is not None:
        seed = _number(ctx, seed, "seed", integer=True)
        if seed < 0:
            raise ctx.bounds("seed", "must be nonnegative")
    norm["seed"] = seed

    # initial data
    d = _section(ctx, data, "initial_data")
    pkind = d.get("kind", "taylor_green")
    params = {}
    for key, val in d.items():
        if key in ("kind", "name"):
            continue
        if key == "velocity":
            if val not in ("random", "taylor_green"):
                raise ctx.schema("initial_data.velocity", "expected 'random' or 'taylor_green'")
            params[key] = val
        else:
            params[key] = _positive(ctx, val, f"initial_data.{key}", allow_zero=key != "band")
    if pkind != "taylor_green" and seed is not None:
        params["seed"] = seed
    try:
        preset = InitialDataPreset(d.get("name", pkind), pkind, tuple(sorted(params.items())))
    except PresetInvalid as exc:
        raise ctx.schema("initial_data", str(exc)) from None
    if preset.needs_seed() and seed is None:
        raise ctx.schema("seed", f"preset {pkind!r} draws random fields; a seed is mandatory")
    if kind == "sweep_nh" and pkind != "nonhomog":
        raise ctx.schema("initial_data.kind", "sweep_nh needs a nonhomog preset")
    if kind == "sweep_qh" and pkind not in ("quasi_homog", "taylor_green", "random_bandlimited"):
        raise ctx.schema("initial_data.kind", "sweep_qh needs a quasi-homogeneous preset")
    if pkind == "nonhomog":
        a = params.get("rho0_amplitude", 0.5)
        if 1 - a < rho_min or 1 + a > rho_star:
            raise ctx.bounds("initial_data.rho0_amplitude", "reference density leaves [rho_min, rho_star]")
    norm["initial_data"] = {"kind": pkind, "name": preset.name, **{k: v for k, v in params.items() if k != "seed"}}

    # integrator
    it = _section(ctx, data, "integrator")
    kw: dict[str, Any] = {}
    if "scheme" in it:
        if it["scheme"] not in ("imex_rk2", "imex_rk3"):
            raise ctx.schema("integrator.scheme", "expected imex_rk2 or imex_rk3")
        kw["scheme"] = it["scheme"]
    if "dt" in it and "cfl" in it:
        raise ctx.schema("integrator.cfl", "give either dt or cfl, not both")
    if "dt" in it:
        kw["dt"] = _positive(ctx, it["dt"], "integrator.dt")
    if "cfl" in it:
        c = _positive(ctx, it["cfl"], "integrator.cfl")
        if c > 1:
            raise ctx.bounds("integrator.cfl", "must lie in (0, 1]")
        kw["cfl"] = c
    for key in ("t_end", "coriolis_dt_factor", "dt_max"):
        if key in it:
            kw[key] = _positive(ctx, it[key], f"integrator.{key}")
    if "dealias" in it:
        kw["dealias"] = _bool(ctx, it["dealias"], "integrator.dealias")
    if "invariant_check_every" in it:
        kw["invariant_check_every"] = _positive(ctx, it["invariant_check_every"],
                                                "integrator.invariant_check_every", integer=True)
    integ = IntegratorConfig(**kw)
    norm["integrator"] = {"scheme": integ.scheme, "dt": integ.dt, "cfl": integ.cfl, "t_end": integ.t_end,
                          "coriolis_dt_factor": integ.coriolis_dt_factor, "dealias": integ.dealias,
                          "invariant_check_every": integ.invariant_check_every, "dt_max": integ.dt_max}

    # output
    o = _section(ctx, data, "output")
    directory = o.get("directory", "out")
    if not isinstance(directory, str) or not directory:
        raise ctx.schema("output.directory", "expected a nonempty path string")
    out = OutputSpec(directory,
                     _positive(ctx, o.get("snapshot_every", 0), "output.snapshot_every", integer=True, allow_zero=True),
                     _positive(ctx, o.get("timeseries_every", 1), "output.timeseries_every", integer=True))
    norm["output"] = {"directory": out.directory, "snapshot_every": out.snapshot_every,
                      "timeseries_every": out.timeseries_every}

    return RunConfig(grid, physics, eps, limit, preset, integ, exp, out, seed, norm)


def load_config(path: str) -> RunConfig:
    """Read and parse a config file; a missing file raises :class:`ConfigError`."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"config is not valid UTF-8: {exc}") from None
    return parse_config(text)


def default_config_text() -> str:
    return """\
grid:
  n: 64
physics:
  epsilon: 0.1
  nu: 1.0
  mu: 1.0
  rho_min: 0.05
  rho_star: 1.5
initial_data:
  kind: taylor_green
integrator:
  scheme: imex_rk3
  cfl: 0.4
  t_end: 1.0
experiment:
  kind: run
  system: primitive
output:
  directory: out
  timeseries_every: 1
  snapshot_every: 0
"""
