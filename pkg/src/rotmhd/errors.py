"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class RotMHDError(Exception):
    """Base class for every error raised by the package."""


class GridMismatch(RotMHDError, ValueError):
    """Two operands live on different grids."""


class NonFinite(RotMHDError, FloatingPointError):
    """A field or state contains NaN or Inf."""


class MeanNotZero(RotMHDError, ValueError):
    """A Poisson right-hand side has a nonzero spatial mean."""


class FloorViolation(RotMHDError, ValueError):
    """A coefficient law drops below its declared floor."""


class DensityFloorBreach(RotMHDError, RuntimeError):
    """Density left the admissible band [rho_min, 2 rho_star]."""


class CflViolation(RotMHDError, RuntimeError):
    """A prescribed time step exceeds a stability bound."""


class SolverError(RotMHDError, RuntimeError):
    """An inner linear solve did not converge."""


class PresetInvalid(RotMHDError, ValueError):
    """An initial-data preset is malformed or fails its admissibility checks."""


class ConfigError(RotMHDError, ValueError):
    """Base class for configuration problems.

    Parameters
    ----------
    message : str
        Human readable description.
    path : str, optional
        Dotted key path of the offending entry.
    line : int, optional
        1-based line number in the source text, when known.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path:
            where += f"{path}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)


class ParseError(ConfigError):
    """The configuration text is not well-formed."""


class SchemaError(ConfigError):
    """Unknown key, wrong type, or missing mandatory entry."""


class BoundsError(ConfigError):
    """A value is outside its admissible range."""


class IoError(RotMHDError, OSError):
    """Reading or writing a result file failed."""
