"""Execute a validated :class:`RunConfig` and persist its results."""

from __future__ import annotations

import json
import time as _time
from pathlib import Path

from . import __version__
from .config import RunConfig
from .dynamics import DiagnosticsRecord, diagnostics_from_spectral
from .experiments import (
    LimitRunConfig,
    SuiteConfig,
    SweepPlan,
    friedrichs_jsweep,
    invariant_suite,
    make_initial_data,
    nonhomog_constraint_probe,
    quasi_homog_convergence,
    reference_density,
    stability_twin_run,
)
from .io import RunManifest, atomic_write_text, write_snapshot, write_timeseries
from .timestepper import Stepper

__all__ = ["execute"]


def _record(d: dict) -> DiagnosticsRecord:
    d = dict(d)
    d["lp_norms_of_r"] = tuple(d["lp_norms_of_r"])
    return DiagnosticsRecord(**d)


def _run_single(cfg: RunConfig, out: Path) -> list[dict]:
    grid = cfg.grid
    if cfg.experiment.system == "primitive":
        params = cfg.physics
        state = make_initial_data(cfg.preset, grid, params.epsilon, params)
        rho0 = reference_density(cfg.preset, grid).values
    else:
        params = cfg.limit
        state = make_initial_data(cfg.preset, grid)
        rho0 = None
    st = Stepper(state, params, cfg.integrator)
    records = [diagnostics_from_spectral(st.system, st.Y, st.time, rho0)]
    every_ts = cfg.output.timeseries_every
    every_snap = cfg.output.snapshot_every
    t_end = cfg.integrator.t_end

    def on_step(s: Stepper, rep) -> None:
        last = s.time >= t_end
        if s.steps % every_ts == 0 or last:
            records.append(diagnostics_from_spectral(s.system, s.Y, s.time, rho0))
        if every_snap and s.steps % every_snap == 0:
            write_snapshot(out / "snapshots" / f"step_{s.steps:07d}.rmhd", s.state())

    t0 = _time.perf_counter()
    st.advance_to(t_end, on_step=on_step)
    write_timeseries(records, out / "timeseries.csv")
    write_snapshot(out / "final.rmhd", st.state())
    return [{"name": "run", "status": "ok", "steps": st.steps, "wall_clock": _time.perf_counter() - t0}]


def _write_member_series(report, out: Path) -> None:
    recs = report.curves.pop("records", [])
    labels = ["limit"] if report.kind == "sweep_qh" else []
    labels += [f"{report.parameter_name}_{p:g}" for p in report.parameters]
    for label, rows in zip(labels, recs):
        if rows:
            write_timeseries([_record(r) for r in rows], out / "members" / label / "timeseries.csv")


def execute(cfg: RunConfig, out: Path | str | None = None) -> tuple[int, RunManifest]:
    """Run the configured experiment; returns ``(exit_code, manifest)``.

    Exit code 0 means success, 2 a failed member, 3 a failed invariant.
    """
    out = Path(out if out is not None else cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.config_hash(), __version__)
    t0 = _time.perf_counter()
    code = 0
    exp = cfg.experiment
    kind = exp.kind
    atomic_write_text(out / "config.json", json.dumps(cfg.normalized, indent=1, sort_keys=True) + "\n")
    if kind == "run":
        manifest.runs = _run_single(cfg, out)
    elif kind in ("sweep_qh", "sweep_nh"):
        plan = SweepPlan(cfg.epsilons, cfg.grid, cfg.physics, cfg.preset, cfg.integrator.t_end,
                         exp.norms, cfg.integrator, exp.samples, exp.workers)
        report = quasi_homog_convergence(plan) if kind == "sweep_qh" else nonhomog_constraint_probe(plan)
        _write_member_series(report, out)
        atomic_write_text(out / "report.json", report.to_json() + "\n")
        manifest.runs = report.runs
    elif kind == "jsweep":
        lrc = LimitRunConfig(cfg.grid, cfg.preset, cfg.limit, cfg.integrator, cfg.integrator.t_end,
                             exp.norms, exp.samples, exp.workers)
        report = friedrichs_jsweep(exp.j_list, lrc)
        atomic_write_text(out / "report.json", report.to_json() + "\n")
        manifest.runs = report.runs
    elif kind == "stability":
        base = make_initial_data(cfg.preset, cfg.grid)
        rep = stability_twin_run(base, exp.deltas, cfg.limit, cfg.integrator, cfg.integrator.t_end,
                                 cfg.seed or 0)
        atomic_write_text(out / "report.json", rep.to_json() + "\n")
        lines = ["time," + ",".join(f"E_delta_{d:g}" for d in rep.deltas)]
        for i, t in enumerate(rep.times[0] if rep.times else []):
            lines.append(",".join(["%.17g" % t] + ["%.17g" % E[i] for E in rep.energy]))
        atomic_write_text(out / "stability.csv", "\n".join(lines) + "\n")
        manifest.runs = [{"name": f"delta={d:g}", "status": "ok", "sup_ratio": r}
                         for d, r in zip(rep.deltas, rep.sup_ratio)]
    elif kind == "check":
        ledger = invariant_suite(SuiteConfig(exp.grids, cfg.seed if cfg.seed is not None else 7))
        atomic_write_text(out / "ledger.txt", ledger.text() + "\n")
        manifest.runs = [{"name": "invariant_suite", "status": "ok" if ledger.passed else "failed"}]
        code = 0 if ledger.passed else 3
    if any(r.get("status") == "failed" for r in manifest.runs) and code == 0:
        code = 2
    manifest.wall_clock = _time.perf_counter() - t0
    manifest.inventory(out)
    manifest.write(out)
    return code, manifest
