"""Parameter sweeps, twin runs and the standing invariant suite.

Weak convergence has no direct meaning on a finite grid, so distances
between trajectories are measured in negative Sobolev norms (``H^-1`` by
default) and reduced to a sup over equispaced sample times. Any rate or
ratio threshold applied to these numbers is a convention of this package.
"""

from __future__ import annotations

import json
import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from . import littlewood_paley as lp
from .dynamics import (
    CoefficientLaw,
    LimitParams,
    LimitState,
    LimitSystem,
    PhysParams,
    PrimitiveState,
    PrimitiveSystem,
    diagnostics_from_spectral,
    friedrichs_truncate,
    full_tendency,
    pack,
    unpack,
)
from .errors import PresetInvalid, RotMHDError
from .grid import (
    GridSpec,
    ScalarField,
    VectorField,
    corrupted_leray,
    laplacian,
    poisson_solve,
    fwd,
    inv,
    spec_curl,
    spec_div,
    spec_div_tensor,
    spec_grad,
    spec_inner,
    spec_leray,
    spec_norm2,
    spec_perp_grad,
)
from .littlewood_paley import sobolev_norm_spec
from .timestepper import IntegratorConfig, Stepper

__all__ = [
    "InitialDataPreset",
    "SweepPlan",
    "LimitRunConfig",
    "ConvergenceReport",
    "StabilityReport",
    "SuiteConfig",
    "LedgerEntry",
    "Ledger",
    "make_initial_data",
    "reference_density",
    "ndcp_probe",
    "quasi_homog_convergence",
    "nonhomog_constraint_probe",
    "friedrichs_jsweep",
    "stability_twin_run",
    "invariant_suite",
    "sample_times",
]

SAMPLE_COUNT = 17


def sample_times(t_end: float, count: int = SAMPLE_COUNT) -> np.ndarray:
    return np.linspace(0.0, t_end, count)


# ---------------------------------------------------------------------------
# initial data

_PRESET_KEYS = {
    "taylor_green": {"amplitude"},
    "random_bandlimited": {"seed", "band", "amplitude", "b_amplitude", "r_amplitude"},
    "quasi_homog": {"seed", "band", "velocity", "u_amplitude", "b_amplitude", "r_amplitude"},
    "nonhomog": {"seed", "band", "u_amplitude", "b_amplitude", "r_amplitude", "rho0_amplitude"},
}


@dataclass(frozen=True)
class InitialDataPreset:
    """Named recipe for ``(rho0, r0, u0, b0)``.

    Kinds and parameters (defaults in brackets):

    ``taylor_green``
        ``amplitude`` [1]. ``u0 = A (cos x sin y, -sin x cos y)``, ``r0 = b0 = 0``.
    ``random_bandlimited``
        ``seed`` (required), ``band`` [4], ``amplitude`` [1] (rms of ``|u0|``),
        ``b_amplitude`` [0.5], ``r_amplitude`` [1] (max of ``|r0|``).
    ``quasi_homog``
        As above with ``u_amplitude`` [1] and ``velocity`` in
        {'random', 'taylor_green'}; the seed is required whenever a random
        component is nonzero.
    ``nonhomog``
        As ``quasi_homog`` plus ``rho0_amplitude`` [0.5]:
        ``rho0 = 1 + a sin x sin y``.
    """

    name: str
    kind: str
    params: tuple = ()

    def __post_init__(self) -> None:
        if self.kind not in _PRESET_KEYS:
            raise PresetInvalid(f"unknown preset kind {self.kind!r}")
        p = dict(self.params) if not isinstance(self.params, dict) else dict(self.params)
        unknown = set(p) - _PRESET_KEYS[self.kind]
        if unknown:
            raise PresetInvalid(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        object.__setattr__(self, "params", tuple(sorted(p.items())))

    @classmethod
    def make(cls, kind: str, name: str | None = None, **params) -> "InitialDataPreset":
        return cls(name or kind, kind, tuple(sorted(params.items())))

    def get(self, key: str, default=None):
        return dict(self.params).get(key, default)

    def needs_seed(self) -> bool:
        if self.kind == "taylor_green":
            return False
        if self.kind == "random_bandlimited":
            return True
        random_u = self.get("velocity", "random") == "random" and self.get("u_amplitude", 1.0) != 0
        return bool(random_u or self.get("b_amplitude", 0.5) != 0 or self.get("r_amplitude", 1.0) != 0)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def _random_stream(grid: GridSpec, rng: np.random.Generator, band: float, slope: float = -1.5) -> np.ndarray:
    """Half-spectrum of a real random scalar with modes in ``1 <= |k| <= band``."""
    shape = grid.spectral_shape
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k = grid.kmag
    mask = (k >= 1.0) & (k <= band) & grid.dealias_mask
    F = np.where(mask, coef * np.maximum(k, 1.0) ** slope, 0.0)
    return fwd(inv(F, grid.n))  # enforce Hermitian consistency


def random_solenoidal(grid: GridSpec, rng: np.random.Generator, band: float, rms: float) -> np.ndarray:
    """Spectral ``(2, ...)`` divergence-free field with ``rms |v| = rms``."""
    Psi = _random_stream(grid, rng, band)
    V = np.stack(spec_perp_grad(grid, Psi))
    norm = math.sqrt(spec_norm2(grid, V) / grid.area)
    return V * (rms / norm) if norm > 0 else V


def random_scalar(grid: GridSpec, rng: np.random.Generator, band: float, peak: float) -> np.ndarray:
    """Spectral zero-mean scalar with ``max |r| = peak``."""
    R = _random_stream(grid, rng, band, slope=-1.0)
    m = float(np.max(np.abs(inv(R, grid.n))))
    return R * (peak / m) if m > 0 else R


def _taylor_green(grid: GridSpec, amp: float) -> np.ndarray:
    X, Y = grid.coords
    return fwd(np.stack([amp * np.cos(X) * np.sin(Y), -amp * np.sin(X) * np.cos(Y)]))


def reference_density(preset: InitialDataPreset, grid: GridSpec) -> ScalarField:
    """Background density ``rho0`` (identically 1 except for ``nonhomog``)."""
    if preset.kind == "nonhomog":
        X, Y = grid.coords
        a = float(preset.get("rho0_amplitude", 0.5))
        return ScalarField(grid, 1.0 + a * np.sin(X) * np.sin(Y))
    return ScalarField.constant(grid, 1.0)


def _limit_spectral(preset: InitialDataPreset, grid: GridSpec) -> np.ndarray:
    kind = preset.kind
    Y = np.zeros((5,) + grid.spectral_shape, dtype=complex)
    if kind == "taylor_green":
        Y[1:3] = _taylor_green(grid, float(preset.get("amplitude", 1.0)))
        return Y
    seed = preset.get("seed")
    if preset.needs_seed() and seed is None:
        raise PresetInvalid(f"preset {preset.name!r} draws random fields and needs a seed")
    band = float(preset.get("band", 4))
    if band < 1:
        raise PresetInvalid("band must be >= 1")
    u_amp = float(preset.get("amplitude" if kind == "random_bandlimited" else "u_amplitude", 1.0))
    b_amp = float(preset.get("b_amplitude", 0.5))
    r_amp = float(preset.get("r_amplitude", 1.0))
    if kind != "random_bandlimited" and preset.get("velocity", "random") == "taylor_green":
        Y[1:3] = _taylor_green(grid, u_amp)
    elif u_amp:
        Y[1:3] = random_solenoidal(grid, _rng(seed, 0), band, u_amp)
    if b_amp:
        Y[3:5] = random_solenoidal(grid, _rng(seed, 1), band, b_amp)
    if r_amp:
        Y[0] = random_scalar(grid, _rng(seed, 2), band, r_amp)
    return Y


def ndcp_probe(rho0: ScalarField, deltas: Sequence[float]) -> list[float]:
    """Fraction of grid points where ``|grad rho0| <= delta``, for each delta."""
    grid = rho0.grid
    G = inv(np.stack(spec_grad(grid, fwd(rho0.values))), grid.n)
    mag = np.sqrt(G[0] ** 2 + G[1] ** 2)
    return [float(np.mean(mag <= d)) for d in deltas]


def _ndcp_admissible(rho0: ScalarField) -> tuple[bool, list[float]]:
    grid = rho0.grid
    G = inv(np.stack(spec_grad(grid, fwd(rho0.values))), grid.n)
    top = float(np.sqrt(np.max(G[0] ** 2 + G[1] ** 2)))
    if top == 0.0:
        return False, [1.0, 1.0, 1.0, 1.0]
    curve = ndcp_probe(rho0, [top * f for f in (0.3, 0.1, 0.03, 0.01)])
    ok = all(b <= a for a, b in zip(curve, curve[1:])) and curve[-1] <= 0.05
    return ok, curve


def make_initial_data(preset: InitialDataPreset, grid: GridSpec, epsilon: float | None = None,
                      params: PhysParams | None = None):
    """Build the initial state of a preset.

    Returns a :class:`LimitState` ``(r0, u0, b0)`` when ``epsilon`` is None,
    otherwise a :class:`PrimitiveState` with ``rho = rho0 + epsilon * r0``.
    Random components are drawn from independent streams of the preset seed.
    """
    Y = _limit_spectral(preset, grid)
    a = inv(Y, grid.n)
    rho0 = reference_density(preset, grid)
    if preset.kind == "nonhomog":
        ok, curve = _ndcp_admissible(rho0)
        if not ok:
            raise PresetInvalid(f"reference density fails the critical-point measure check {curve}")
    lo = float(rho0.values.min())
    if lo <= 0:
        raise PresetInvalid("reference density must be positive")
    if params is not None:
        if lo < params.rho_min or float(rho0.values.max()) > params.rho_star:
            raise PresetInvalid("reference density outside [rho_min, rho_star]")
    r = ScalarField._wrap(grid, a[0])
    u = VectorField._wrap(grid, a[1], a[2])
    b = VectorField._wrap(grid, a[3], a[4])
    if epsilon is None:
        return LimitState(0.0, r, u, b)
    return PrimitiveState(0.0, ScalarField._wrap(grid, rho0.values + epsilon * a[0]), u, b)


# ---------------------------------------------------------------------------
# reports


@dataclass
class ConvergenceReport:
    """Per-member metrics of a sweep.

    ``metrics[name][i]`` belongs to ``parameters[i]`` (NaN for failed
    members). Distance metrics are named ``'<field>:H^<s>'``.
    """

    kind: str
    parameter_name: str
    parameters: list[float]
    metrics: dict[str, list[float]] = field(default_factory=dict)
    curves: dict[str, list[list[float]]] = field(default_factory=dict)
    runs: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def ratios(self, name: str) -> list[float]:
        v = self.metrics[name]
        return [b / a if a > 0 else math.nan for a, b in zip(v, v[1:])]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratios"] = {k: self.ratios(k) for k in self.metrics}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, default=_json_default)


def _json_default(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


@dataclass
class StabilityReport:
    """Twin-run perturbation growth.

    For each perturbation size: step times, ``E(t) = |du|^2 + |db|^2 + |dr|^2``,
    the dissipation integral ``int_0^t (|grad du|^2 + |grad db|^2)`` and
    ``sup_t E(t)/E(0)``. ``envelope_constant`` is
    ``sup_t (E + int D)/E(0)`` of the first member.
    """

    deltas: list[float]
    times: list[list[float]]
    energy: list[list[float]]
    dissipation: list[list[float]]
    sup_ratio: list[float]
    envelope_constant: float
    envelope_ok: list[bool]

    def ratio_spread(self) -> float:
        """``(max - min)/min`` of ``sup_ratio`` over the members."""
        v = [x for x in self.sup_ratio if math.isfinite(x)]
        return (max(v) - min(v)) / min(v) if v else math.nan

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_json_default)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepPlan:
    """An epsilon sweep.

    Parameters
    ----------
    epsilons : sequence of float
        Strictly decreasing, all positive.
    grid : GridSpec
    params : PhysParams
        Template; its epsilon is replaced per member.
    preset : InitialDataPreset
    t_end : float
    norms : tuple of float
        Sobolev exponents of the reported distances.
    integrator : IntegratorConfig
    samples : int
        Number of equispaced comparison times in ``[0, t_end]``.
    workers : int
        Parallel member processes (1 runs in-process).
    """

    epsilons: tuple
    grid: GridSpec
    params: PhysParams
    preset: InitialDataPreset
    t_end: float = 1.0
    norms: tuple = (0.0, -1.0)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    samples: int = SAMPLE_COUNT
    workers: int = 1

    def __post_init__(self) -> None:
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("epsilons must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "norms", tuple(float(s) for s in self.norms))


@dataclass(frozen=True)
class LimitRunConfig:
    """Settings for limit-system studies (truncation sweeps, twin runs)."""

    grid: GridSpec
    preset: InitialDataPreset
    params: LimitParams = field(default_factory=LimitParams)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    t_end: float = 1.0
    norms: tuple = (0.0,)
    samples: int = SAMPLE_COUNT
    workers: int = 1


def _sampled_run(state, params, config: IntegratorConfig, times: np.ndarray,
                 on_step: Callable | None = None) -> tuple[list[np.ndarray], Stepper]:
    st = Stepper(state, params, config)
    out = [st.Y.copy()]
    for t in times[1:]:
        st.advance_to(float(t), on_step=on_step)
        out.append(st.Y.copy())
    return out, st


def _member(fn: Callable, *args) -> dict:
    """Run a sweep member, capturing package errors as a failed status."""
    t0 = _time.perf_counter()
    try:
        result = fn(*args)
        result["status"] = "ok"
    except (RotMHDError, FloatingPointError, ValueError) as exc:
        result = {"status": "failed", "reason": f"{type(exc).__name__}: {exc}"}
    result["wall_clock"] = _time.perf_counter() - t0
    return result


def _map(fn: Callable, jobs: list[tuple], workers: int) -> list[dict]:
    if workers <= 1 or len(jobs) <= 1:
        return [_member(fn, *job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_member, fn, *job) for job in jobs]
        return [f.result() for f in futures]


def _distance(grid: GridSpec, A: list[np.ndarray], B: list[np.ndarray], comps: slice, s: float) -> float:
    return max(sobolev_norm_spec(grid, a[comps] - b[comps], s) for a, b in zip(A, B))


def _limit_member(grid, preset, params, integ, times) -> dict:
    state = make_initial_data(preset, grid)
    samples, st = _sampled_run(state, params, integ, times)
    return {"samples": samples, "steps": st.steps,
            "records": [asdict(diagnostics_from_spectral(st.system, Y, t, None)) for Y, t in zip(samples, times)]}


def _qh_member(grid, preset, params, integ, times) -> dict:
    state = make_initial_data(preset, grid, params.epsilon, params)
    samples, st = _sampled_run(state, params, integ, times)
    eps = params.epsilon
    records = [asdict(diagnostics_from_spectral(st.system, Y, t, None)) for Y, t in zip(samples, times)]
    conv = []
    for Y in samples:
        Z = Y.copy()
        Z[0, 0, 0] -= 1.0
        Z[0] /= eps  # r = (rho - 1)/eps
        conv.append(Z)
    return {"samples": conv, "steps": st.steps, "records": records}


def quasi_homog_convergence(plan: SweepPlan) -> ConvergenceReport:
    """Compare primitive runs ``rho = 1 + eps r`` with one limit run.

    Each member uses the quasi-homogeneous Coriolis evaluation unless the
    template parameters disable it. Reports ``D_s = sup_t ||X_eps - X_lim||_{H^s}``
    for ``X`` in ``r, u, b``.
    """
    if plan.preset.kind not in ("quasi_homog", "taylor_green", "random_bandlimited"):
        raise PresetInvalid("quasi-homogeneous sweep needs a quasi_homog preset")
    grid = plan.grid
    times = sample_times(plan.t_end, plan.samples)
    lim = LimitParams(plan.params.nu.value(1.0), plan.params.mu.value(1.0))
    jobs = [(grid, plan.preset, lim, plan.integrator, times)]
    jobs_eps = [(grid, plan.preset, plan.params.with_epsilon(e), plan.integrator, times) for e in plan.epsilons]
    results = _map(_dispatch, [("limit",) + j for j in jobs] + [("qh",) + j for j in jobs_eps], plan.workers)
    ref = results[0]
    report = ConvergenceReport("sweep_qh", "epsilon", list(plan.epsilons))
    report.notes.append("distances are sup over sample times of H^s norms; decrease thresholds are conventions")
    report.runs.append(_manifest_entry("limit", ref))
    if ref["status"] != "ok":
        raise RuntimeError(f"limit reference run failed: {ref['reason']}")
    names = []
    for s in plan.norms:
        for fld, comps in (("r", slice(0, 1)), ("u", slice(1, 3)), ("b", slice(3, 5))):
            names.append((f"{fld}:H^{s:g}", comps, s))
    for name, _, _ in names:
        report.metrics[name] = []
    for e, res in zip(plan.epsilons, results[1:]):
        report.runs.append(_manifest_entry(f"epsilon={e:g}", res))
        for name, comps, s in names:
            if res["status"] == "ok":
                report.metrics[name].append(_distance(grid, res["samples"], ref["samples"], comps, s))
            else:
                report.metrics[name].append(math.nan)
    report.curves["records"] = [r.get("records", []) for r in results]
    return report


def _manifest_entry(name: str, res: dict) -> dict:
    entry = {"name": name, "status": res["status"], "wall_clock": res.get("wall_clock", 0.0)}
    if "steps" in res:
        entry["steps"] = res["steps"]
    if res["status"] != "ok":
        entry["reason"] = res["reason"]
    return entry


def _nh_member(grid, preset, params, integ, times) -> dict:
    eps = params.epsilon
    state = make_initial_data(preset, grid, eps, params)
    rho0 = reference_density(preset, grid).values
    acc = {"U": np.zeros((2,) + grid.spectral_shape, dtype=complex), "norm": 0.0,
           "prevU": None, "prevN": None, "t": 0.0}

    def constraint(U: np.ndarray) -> float:
        V = fwd(rho0 * inv(U, grid.n))
        return sobolev_norm_spec(grid, spec_div(grid, V[0], V[1]), -1.0)

    def on_step(st: Stepper, rep) -> None:
        U = st.Y[1:3]
        c = constraint(U)
        dt = rep.dt_used
        acc["U"] += 0.5 * dt * (acc["prevU"] + U)
        acc["norm"] += 0.5 * dt * (acc["prevN"] + c)
        acc["prevU"] = U.copy()
        acc["prevN"] = c

    Y0 = pack(state)
    acc["prevU"] = Y0[1:3].copy()
    acc["prevN"] = constraint(Y0[1:3])
    samples, st = _sampled_run(state, params, integ, times, on_step)
    T = times[-1]
    R0 = fwd(rho0)
    sigma, dev, cons = [], [], []
    for Y in samples:
        D = Y[0] - R0
        sigma.append(sobolev_norm_spec(grid, D / eps, -3.1))
        dev.append(sobolev_norm_spec(grid, D, -1.5))
        cons.append(constraint(Y[1:3]))
    records = [asdict(diagnostics_from_spectral(st.system, Y, t, rho0)) for Y, t in zip(samples, times)]
    return {
        "steps": st.steps,
        "constraint_time_avg": constraint(acc["U"] / T),
        "constraint_norm_avg": float(acc["norm"] / T),
        "sigma_sup": max(sigma),
        "sigma_min": min(sigma),
        "density_deviation_sup": max(dev),
        "constraint_samples": cons,
        "sigma_samples": sigma,
        "records": records,
    }


def nonhomog_constraint_probe(plan: SweepPlan) -> ConvergenceReport:
    """Constraint and density-fluctuation diagnostics for ``rho = rho0 + eps r``.

    Per member:

    * ``constraint_time_avg``: ``||div(rho0 <u>)||_{H^-1}`` where ``<u>`` is
      the time average over ``[0, t_end]`` accumulated every step
      (trapezoidal rule) -- the weak-in-time proxy;
    * ``constraint_norm_avg``: time average of ``||div(rho0 u)||_{H^-1}``;
    * ``sigma_sup``: ``sup_t ||(rho - rho0)/eps||_{H^-3.1}``;
    * ``density_deviation_sup``: ``sup_t ||rho - rho0||_{H^-1.5}``.
    """
    if plan.preset.kind != "nonhomog":
        raise PresetInvalid("non-homogeneous probe needs a nonhomog preset")
    grid = plan.grid
    times = sample_times(plan.t_end, plan.samples)
    params = replace(plan.params, qh_cancellation=False)
    jobs = [("nh", grid, plan.preset, params.with_epsilon(e), plan.integrator, times) for e in plan.epsilons]
    results = _map(_dispatch, jobs, plan.workers)
    report = ConvergenceReport("sweep_nh", "epsilon", list(plan.epsilons))
    report.notes.append("time average accumulated every step; H^-1 is the weak-convergence proxy")
    keys = ("constraint_time_avg", "constraint_norm_avg", "sigma_sup", "sigma_min", "density_deviation_sup")
    for k in keys:
        report.metrics[k] = [res.get(k, math.nan) if res["status"] == "ok" else math.nan for res in results]
    report.curves["constraint_samples"] = [res.get("constraint_samples", []) for res in results]
    report.curves["sigma_samples"] = [res.get("sigma_samples", []) for res in results]
    report.curves["records"] = [res.get("records", []) for res in results]
    for e, res in zip(plan.epsilons, results):
        report.runs.append(_manifest_entry(f"epsilon={e:g}", res))
    return report


def _truncated_member(grid, preset, params, integ, times) -> dict:
    state = make_initial_data(preset, grid)
    j = params.friedrichs_j
    if j is not None:
        Y = pack(state)
        keep = grid.kmag <= j
        Y[1:5] *= keep
        if int(j) <= lp.j_top(grid):  # S_j is the identity beyond the top block
            Y[0] *= lp._cutoff_symbol(grid, int(j), lp.DEFAULT_PROFILE)
        state = unpack(grid, Y, 0.0, primitive=False)
    samples, st = _sampled_run(state, params, integ, times)
    return {"samples": samples, "steps": st.steps}


def _dispatch(kind: str, *args) -> dict:
    fn = {"limit": _limit_member, "qh": _qh_member, "nh": _nh_member, "trunc": _truncated_member}[kind]
    return fn(*args)


def friedrichs_jsweep(j_list: Sequence[float], config: LimitRunConfig) -> ConvergenceReport:
    """Distance of truncated limit runs to the untruncated reference.

    Member ``j`` starts from ``(S_j r0, A_j u0, A_j b0)`` and truncates every
    nonlinear tendency to ``|k| <= j``. The same integer serves as the sharp
    radius of ``A_j`` and the dyadic index of ``S_j``, so ``S_j r0 = r0`` once
    ``2^j`` passes the grid's largest wavenumber.
    """
    js = [float(j) for j in j_list]
    if any(b <= a for a, b in zip(js, js[1:])):
        raise ValueError("j_list must be increasing")
    grid = config.grid
    times = sample_times(config.t_end, config.samples)
    base = replace(config.params, friedrichs_j=None)
    jobs = [("trunc", grid, config.preset, base, config.integrator, times)]
    jobs += [("trunc", grid, config.preset, friedrichs_truncate(base, j), config.integrator, times) for j in js]
    results = [_member(_dispatch, *job) for job in jobs] if config.workers <= 1 else _map(_dispatch, jobs, config.workers)
    ref = results[0]
    if ref["status"] != "ok":
        raise RuntimeError(f"reference run failed: {ref['reason']}")
    report = ConvergenceReport("jsweep", "j", js)
    report.runs.append(_manifest_entry("reference", ref))
    for s in config.norms:
        for fld, comps in (("r", slice(0, 1)), ("u", slice(1, 3)), ("b", slice(3, 5))):
            report.metrics[f"{fld}:H^{s:g}"] = [
                _distance(grid, res["samples"], ref["samples"], comps, s) if res["status"] == "ok" else math.nan
                for res in results[1:]
            ]
    for j, res in zip(js, results[1:]):
        report.runs.append(_manifest_entry(f"j={j:g}", res))
    return report


def stability_twin_run(base: LimitState, deltas: Sequence[float], params: LimitParams,
                       config: IntegratorConfig, t_end: float = 1.0, seed: int = 0) -> StabilityReport:
    """Evolve ``base`` and ``base + delta * p`` in lockstep for each delta.

    ``p`` is a seeded smooth perturbation of ``(r, u, b)`` (divergence-free in
    ``u`` and ``b``) with unit ``||p_r||^2 + ||p_u||^2 + ||p_b||^2``. All
    members share one fixed step: ``config.dt`` if given, else the adaptive
    bound of the base state at ``t = 0``.
    """
    grid = base.grid
    P = np.zeros((5,) + grid.spectral_shape, dtype=complex)
    P[0] = random_scalar(grid, _rng(seed, 10), 4.0, 1.0)
    P[1:3] = random_solenoidal(grid, _rng(seed, 11), 4.0, 1.0)
    P[3:5] = random_solenoidal(grid, _rng(seed, 12), 4.0, 1.0)
    P /= math.sqrt(spec_norm2(grid, P))
    if config.dt is None:
        probe = Stepper(base, params, config)
        config = replace(config, cfl=None, dt=probe.next_dt())
    Yb = pack(base)
    base_st = Stepper(base, params, config)
    members = [Stepper(unpack(grid, Yb + d * P, base.time, False), params, config) for d in deltas]

    def measures(st: Stepper) -> tuple[float, float]:
        dY = st.Y - base_st.Y
        E = spec_norm2(grid, dY)
        grads = np.stack([*spec_grad(grid, dY[1]), *spec_grad(grid, dY[2]),
                          *spec_grad(grid, dY[3]), *spec_grad(grid, dY[4])])
        return E, spec_norm2(grid, grads)

    times = [[base.time] for _ in deltas]
    energy, dissip, rates = [], [], []
    for st in members:
        E, Dr = measures(st)
        energy.append([E])
        dissip.append([0.0])
        rates.append(Dr)
    dt = config.dt
    t = base.time
    while t < t_end - 1e-12 * max(1.0, t_end):
        h = min(dt, t_end - t)
        base_st.step(h)
        for i, st in enumerate(members):
            st.step(h)
            E, Dr = measures(st)
            energy[i].append(E)
            dissip[i].append(dissip[i][-1] + 0.5 * h * (rates[i] + Dr))
            rates[i] = Dr
            times[i].append(base_st.time)
        t = base_st.time
    sup_ratio = []
    for E in energy:
        sup_ratio.append(max(E) / E[0] if E[0] > 0 else math.nan)
    if energy and energy[0][0] > 0:
        C = max((e + q) / energy[0][0] for e, q in zip(energy[0], dissip[0]))
    else:
        C = math.nan
    env = []
    for E, Q in zip(energy, dissip):
        if E[0] > 0:
            env.append(all(e + q <= C * E[0] for e, q in zip(E, Q)))
        else:
            env.append(max(E) <= 1e-12)
    return StabilityReport(list(map(float, deltas)), times, energy, dissip, sup_ratio, C, env)


# ---------------------------------------------------------------------------
# invariant suite


@dataclass(frozen=True)
class SuiteConfig:
    """Invariant-suite settings; ``corrupt_leray_seed`` enables fault injection."""

    grids: tuple = (64,)
    seed: int = 7
    corrupt_leray_seed: int | None = None
    run_time: float = 0.05


@dataclass(frozen=True)
class LedgerEntry:
    name: str
    n: int
    value: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  n={self.n:<4d} {self.name:<34s} value={self.value:.3e}  tol={self.tolerance:.1e}"


@dataclass
class Ledger:
    entries: list[LedgerEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def text(self) -> str:
        return "\n".join(e.line() for e in self.entries)


def _rel(a: float, b: float) -> float:
    return abs(a) / b if b > 0 else abs(a)


def _suite_checks(n: int, seed: int, run_time: float) -> list[tuple[str, float, float]]:
    grid = GridSpec(n)
    rng = np.random.default_rng([seed, n])
    out: list[tuple[str, float, float]] = []
    a = rng.standard_normal((n, n))
    A = fwd(a)
    out.append(("transform round trip", float(np.linalg.norm(inv(A, n) - a) / np.linalg.norm(a)), 1e-12))
    out.append(("Parseval", _rel(spec_norm2(grid, A) - grid.area * float(np.mean(a * a)),
                                 grid.area * float(np.mean(a * a))), 1e-12))
    # random band-limited vector fields
    V = np.stack([fwd(lp.random_field(grid, rng, n / 3).values) for _ in range(2)])
    W = np.stack([fwd(lp.random_field(grid, rng, n / 3).values) for _ in range(2)])
    PV = np.stack(spec_leray(grid, *V))
    PW = np.stack(spec_leray(grid, *W))
    PPV = np.stack(spec_leray(grid, *PV))
    vn = math.sqrt(spec_norm2(grid, V))
    out.append(("projection idempotent", math.sqrt(spec_norm2(grid, PPV - PV)) / vn, 1e-12))
    sa = spec_inner(grid, PV, W) - spec_inner(grid, V, PW)
    out.append(("projection self-adjoint", abs(sa) / (vn * math.sqrt(spec_norm2(grid, W))), 1e-12))
    out.append(("projection divergence", math.sqrt(spec_norm2(grid, spec_div(grid, *PV))) / vn, 1e-12))
    curl = math.sqrt(spec_norm2(grid, spec_curl(grid, *PV)))
    grad = math.sqrt(spec_norm2(grid, np.stack([*spec_grad(grid, PV[0]), *spec_grad(grid, PV[1])])))
    out.append(("curl-gradient equality", abs(curl - grad) / grad, 1e-12))
    # Poisson
    f = lp.random_field(grid, rng, n / 3)
    p = poisson_solve(f)
    out.append(("Poisson residual", float(np.linalg.norm(laplacian(p).values - f.values) / np.linalg.norm(f.values)), 1e-10))
    # Littlewood-Paley
    g = lp.random_field(grid, rng, n / 3)
    J = lp.j_top(grid)
    total = sum(lp.block_Dj(g, j).values for j in range(-1, J + 1))
    gn = float(np.linalg.norm(g.values))
    out.append(("block partition of unity", float(np.linalg.norm(total - g.values)) / gn, 1e-10))
    s3 = sum(lp.block_Dj(g, j).values for j in range(-1, 3))
    out.append(("S_j equals block sum", float(np.linalg.norm(lp.cutoff_Sj(g, 3).values - s3)) / gn, 1e-10))
    bony = lp.paraproduct(f, g).values + lp.paraproduct(g, f).values + lp.remainder(f, g).values
    fg = f.values * g.values
    out.append(("Bony reconstruction", float(np.linalg.norm(bony - fg) / np.linalg.norm(fg)), 1e-10))
    c = lp.commutator_Sj(ScalarField.constant(grid, 2.5), g, 2)
    out.append(("commutator with constant", float(np.max(np.abs(c.values))), 1e-12))
    mono = [lp.sobolev_norm(g, s) for s in (-2.0, -1.0, 0.0, 1.0)]
    out.append(("Sobolev norm monotone in s", float(sum(max(0.0, x - y) for x, y in zip(mono, mono[1:]))), 0.0))
    # dynamics identities on band-limited divergence-free data
    U = random_solenoidal(grid, rng, n / 3, 1.0)
    B = random_solenoidal(grid, rng, n / 3, 0.5)
    R = random_scalar(grid, rng, n / 3, 1.0)
    u = inv(U, n)
    b = inv(B, n)
    mask = grid.dealias_mask
    cor = fwd(np.stack([-u[1], u[0]]))
    out.append(("Coriolis does no work", abs(spec_inner(grid, U, cor)) / spec_norm2(grid, U), 1e-10))
    T = fwd(np.stack([b[0] * b[0], b[0] * b[1], b[1] * b[1]])) * mask
    lor = np.stack(spec_div_tensor(grid, *T))
    Ehat = fwd(u[0] * b[1] - u[1] * b[0]) * mask
    ind = np.stack(spec_perp_grad(grid, -Ehat))
    x1, x2 = spec_inner(grid, U, lor), spec_inner(grid, B, ind)
    out.append(("Lorentz energy exchange", abs(x1 + x2) / max(abs(x1), 1e-300), 1e-8))
    Tu = fwd(np.stack([u[0] * u[0], u[0] * u[1], u[1] * u[1]])) * mask
    adv = np.stack(spec_div_tensor(grid, *Tu))
    half = np.stack(spec_grad(grid, fwd(0.5 * (u[0] ** 2 + u[1] ** 2)) * mask))
    om = inv(spec_curl(grid, *U), n)
    rot = fwd(np.stack([-om * u[1], om * u[0]])) * mask
    out.append(("advection identity", math.sqrt(spec_norm2(grid, adv - half - rot) / spec_norm2(grid, adv)), 1e-8))
    # semi-discrete energy law and conservation
    lim = LimitSystem(grid, LimitParams(0.7, 0.3))
    Y = np.concatenate([R[None], U, B])
    K = full_tendency(lim, Y)
    dE = spec_inner(grid, Y[1:5], K[1:5])
    Dl = lim.dissipation(Y)
    out.append(("energy law, limit system", abs(dE + Dl) / Dl, 1e-8))
    out.append(("scalar mean conserved, limit", abs(K[0, 0, 0]), 1e-14))
    prim = PrimitiveSystem(grid, PhysParams(0.1, CoefficientLaw.constant(0.7), CoefficientLaw.constant(0.3)))
    Yp = Y.copy()
    Yp[0] = 0.0
    Yp[0, 0, 0] = 1.0
    Kp = full_tendency(prim, Yp)
    dEp = spec_inner(grid, Yp[1:5], Kp[1:5])
    Dp = prim.dissipation(Yp)
    out.append(("energy law, uniform density", abs(dEp + Dp) / Dp, 1e-8))
    Yq = Y.copy()
    Yq[0] *= 0.1
    Yq[0, 0, 0] += 1.0
    Kq = full_tendency(prim, Yq)
    out.append(("mass conserved, primitive", abs(Kq[0, 0, 0]), 1e-14))
    out.append(("magnetic mean conserved", float(np.max(np.abs(Kq[3:5, 0, 0]))), 1e-14))
    # short runs
    Ys = np.concatenate([random_scalar(grid, rng, 4.0, 1.0)[None], random_solenoidal(grid, rng, 4.0, 1.0),
                         random_solenoidal(grid, rng, 4.0, 0.5)])
    st = Stepper(LimitState(0.0, *_unpack3(grid, Ys)), LimitParams(0.7, 0.3), IntegratorConfig(dt=2e-3))
    r0 = math.sqrt(spec_norm2(grid, st.Y[0]))
    worst_div, excess = 0.0, -math.inf
    st_e0 = st.energy0
    while st.time < run_time - 1e-12:
        rep = st.step(min(2e-3, run_time - st.time))
        worst_div = max(worst_div, *rep.div_residuals)
        excess = max(excess, (st.energy + st.dissipated - st_e0) / st_e0)
    out.append(("energy inequality, short run", max(excess, 0.0), 1e-6))
    out.append(("scalar L2 drift, short run", abs(math.sqrt(spec_norm2(grid, st.Y[0])) - r0) / r0, 1e-6))
    out.append(("divergence after steps", worst_div, 1e-10))
    return out


def _unpack3(grid: GridSpec, Y: np.ndarray):
    a = inv(Y, grid.n)
    return (ScalarField._wrap(grid, a[0]), VectorField._wrap(grid, a[1], a[2]),
            VectorField._wrap(grid, a[3], a[4]))


def invariant_suite(config: SuiteConfig = SuiteConfig()) -> Ledger:
    """Run every standing invariant on each grid and collect a pass/fail ledger."""
    ledger = Ledger()
    for n in config.grids:
        if config.corrupt_leray_seed is not None:
            with corrupted_leray(config.corrupt_leray_seed):
                checks = _suite_checks(int(n), config.seed, config.run_time)
        else:
            checks = _suite_checks(int(n), config.seed, config.run_time)
        for name, value, tol in checks:
            ok = bool(np.isfinite(value)) and value <= tol
            ledger.entries.append(LedgerEntry(name, int(n), float(value), float(tol), ok))
    return ledger
