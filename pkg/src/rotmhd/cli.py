"""Command-line entry point ``rotmhd``.

Exit codes: 0 success, 1 invalid input (bad config, missing file, bad
preset), 2 runtime failure, 3 invariant-suite failure.
"""

from __future__ import annotations

import argparse
import os
import platform
import sys
from pathlib import Path

from . import __version__
from .config import EXPERIMENT_KINDS, default_config_text, load_config
from .errors import ConfigError, PresetInvalid, RotMHDError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

_FAMILIES = {
    "run": None,
    "sweep": ("sweep_qh", "sweep_nh"),
    "jsweep": ("jsweep",),
    "stability": ("stability",),
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rotmhd", description="Rotating MHD pseudo-spectral suite.")
    p.add_argument("--version", action="version", version=f"rotmhd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run any configured experiment"),
                        ("sweep", "epsilon sweep (experiment.kind sweep_qh or sweep_nh)"),
                        ("jsweep", "truncation sweep of the limit system"),
                        ("stability", "twin-run stability experiment")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", help="YAML configuration file")
        s.add_argument("-o", "--output", help="override output.directory")
    c = sub.add_parser("check", help="run the invariant suite")
    c.add_argument("--grid", type=int, action="append", help="grid size (repeatable; default 64)")
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("--corrupt-leray", type=int, metavar="SEED", help="fault injection: perturb the projection")
    sub.add_parser("info", help="print version, build info and the default config")
    return p


def _info() -> int:
    import numpy
    import scipy
    print(f"rotmhd {__version__}")
    print(f"python {platform.python_version()} ({platform.platform()})")
    print(f"numpy {numpy.__version__}, scipy {scipy.__version__}")
    print(f"fft threads (ROTMHD_THREADS): {os.environ.get('ROTMHD_THREADS', '1')}")
    print(f"experiment kinds: {', '.join(EXPERIMENT_KINDS)}")
    print("default config:")
    print(default_config_text(), end="")
    return EXIT_OK


def _check(args) -> int:
    from .experiments import SuiteConfig, invariant_suite
    grids = tuple(args.grid) if args.grid else (64,)
    ledger = invariant_suite(SuiteConfig(grids, args.seed, args.corrupt_leray))
    print(ledger.text())
    n_fail = sum(not e.passed for e in ledger.entries)
    print(f"{len(ledger.entries) - n_fail} passed, {n_fail} failed")
    return EXIT_OK if ledger.passed else EXIT_CHECK


def cli(argv: list[str] | None = None) -> int:
    """Run the command line and return the exit code."""
    args = _parser().parse_args(argv)
    try:
        if args.command == "info":
            return _info()
        if args.command == "check":
            return _check(args)
        from .runner import execute
        cfg = load_config(args.config)
        family = _FAMILIES[args.command]
        if family is not None and cfg.experiment.kind not in family:
            raise ConfigError(f"'{args.command}' needs experiment.kind in {family}, "
                              f"config has {cfg.experiment.kind!r}", "experiment.kind")
        out = Path(args.output) if args.output else Path(cfg.output.directory)
        code, manifest = execute(cfg, out)
        for run in manifest.runs:
            extra = f" ({run['reason']})" if "reason" in run else ""
            print(f"{run['name']}: {run['status']}{extra}")
        print(f"results in {out}")
        return code
    except (ConfigError, PresetInvalid) as exc:
        print(f"rotmhd: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RotMHDError, FloatingPointError, OSError, RuntimeError) as exc:
        print(f"rotmhd: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
