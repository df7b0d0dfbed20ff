"""Uniform periodic grid on the two-torus and exact spectral operators.

Samples are stored with ``x`` along axis 0 and ``y`` along axis 1. The real
transform keeps the half spectrum ``k2 >= 0``; the missing half follows from
Hermitian symmetry. The forward transform divides by ``n**2`` so that the
zero mode is the spatial mean.

Two layers are exposed:

* field-level operations (:func:`gradient`, :func:`leray_project`, ...) on
  immutable :class:`ScalarField` / :class:`VectorField` objects, which check
  grid compatibility and finiteness;
* array kernels (``spec_*`` functions and :func:`fwd` / :func:`inv`) used by
  the solvers, which work on raw spectral arrays and skip all checks.

References
----------
.. [1] Canuto, Hussaini, Quarteroni, Zang, "Spectral Methods: Fundamentals in
   Single Domains", Springer (2006), ch. 2-3.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Union

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatch, MeanNotZero, NonFinite

__all__ = [
    "GridSpec",
    "ScalarField",
    "VectorField",
    "SpectralScalar",
    "SpectralVector",
    "transform",
    "inverse",
    "gradient",
    "divergence",
    "laplacian",
    "curl2d",
    "perp",
    "leray_project",
    "dealias",
    "poisson_solve",
    "inner",
    "l2_norm",
    "corrupted_leray",
]


def _fft_workers() -> int:
    raw = os.environ.get("ROTMHD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


_WORKERS = _fft_workers()


@dataclass(frozen=True)
class GridSpec:
    """Square periodic grid with ``n`` points per direction.

    Parameters
    ----------
    n : int
        Points per dimension, even and at least 16.
    length : float
        Period of the domain in both directions.
    """

    n: int
    length: float = 2.0 * math.pi

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise TypeError("grid size n must be an integer")
        if self.n < 16 or self.n % 2:
            raise ValueError(f"grid size n must be even and >= 16, got {self.n}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError("grid length must be positive and finite")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))

    # geometry -----------------------------------------------------------
    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def area(self) -> float:
        return self.length * self.length

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample coordinates ``(X, Y)`` with ``indexing='ij'``."""
        x = np.arange(self.n) * self.h
        X, Y = np.meshgrid(x, x, indexing="ij")
        X.flags.writeable = False
        Y.flags.writeable = False
        return X, Y

    # wavenumbers --------------------------------------------------------
    @cached_property
    def _index(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        i1 = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)[:, None]
        i2 = np.arange(n // 2 + 1, dtype=np.int64)[None, :]
        return i1, i2

    @property
    def k_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer mode indices ``(k1, k2)`` broadcastable to the spectral shape."""
        return self._index

    @cached_property
    def _scale(self) -> float:
        return 2.0 * math.pi / self.length

    @cached_property
    def kd(self) -> tuple[np.ndarray, np.ndarray]:
        """Derivative wavenumbers with the Nyquist row/column zeroed."""
        i1, i2 = self._index
        half = self.n // 2
        k1 = np.where(np.abs(i1) == half, 0, i1) * self._scale
        k2 = np.where(i2 == half, 0, i2) * self._scale
        return k1.astype(float), k2.astype(float)

    @cached_property
    def kmag(self) -> np.ndarray:
        """Physical modulus ``|k|`` on the half spectrum, Nyquist included."""
        i1, i2 = self._index
        return np.sqrt((i1 * self._scale) ** 2 + (i2 * self._scale) ** 2)

    @cached_property
    def lap_symbol(self) -> np.ndarray:
        k1, k2 = self.kd
        return -(k1 * k1 + k2 * k2)

    @cached_property
    def inv_lap_symbol(self) -> np.ndarray:
        sym = self.lap_symbol
        out = np.zeros_like(sym)
        nz = sym != 0
        out[nz] = 1.0 / sym[nz]
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        i1, i2 = self._index
        cut = self.n // 3
        return (np.abs(i1) <= cut) & (np.abs(i2) <= cut)

    @cached_property
    def hermitian_weight(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full spectrum."""
        w = np.full(self.spectral_shape, 2.0)
        w[:, 0] = 1.0
        w[:, -1] = 1.0
        return w

    @cached_property
    def kmax_dealiased(self) -> float:
        """Largest ``|k|^2`` among modes kept by the 2/3 rule, square-rooted."""
        k1, k2 = self.kd
        return float(np.sqrt(np.max((k1 * k1 + k2 * k2)[self.dealias_mask])))


# ---------------------------------------------------------------------------
# array kernels


def fwd(a: np.ndarray) -> np.ndarray:
    """Forward real transform over the last two axes, normalized by ``n**2``."""
    return sfft.rfft2(a, axes=(-2, -1), norm="forward", workers=_WORKERS)


def inv(A: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`fwd` for an ``n x n`` grid."""
    return sfft.irfft2(A, s=(n, n), axes=(-2, -1), norm="forward", workers=_WORKERS)


def spec_inner(grid: GridSpec, A: np.ndarray, B: np.ndarray) -> float:
    """``int a*b`` over the domain from half-spectrum coefficients."""
    return float(grid.area * np.sum(grid.hermitian_weight * (A.conj() * B).real))


def spec_norm2(grid: GridSpec, A: np.ndarray) -> float:
    return float(grid.area * np.sum(grid.hermitian_weight * (A.real**2 + A.imag**2)))


def spec_grad(grid: GridSpec, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k1, k2 = grid.kd
    return 1j * k1 * F, 1j * k2 * F


def spec_div(grid: GridSpec, V1: np.ndarray, V2: np.ndarray) -> np.ndarray:
    k1, k2 = grid.kd
    return 1j * (k1 * V1 + k2 * V2)


def spec_curl(grid: GridSpec, V1: np.ndarray, V2: np.ndarray) -> np.ndarray:
    k1, k2 = grid.kd
    return 1j * (k1 * V2 - k2 * V1)


def spec_perp_grad(grid: GridSpec, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(-d2 F, d1 F)``."""
    k1, k2 = grid.kd
    return -1j * k2 * F, 1j * k1 * F


def spec_div_tensor(
    grid: GridSpec, T11: np.ndarray, T12: np.ndarray, T22: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Divergence of a symmetric tensor, ``(d_j T_1j, d_j T_2j)``."""
    k1, k2 = grid.kd
    return 1j * (k1 * T11 + k2 * T12), 1j * (k1 * T12 + k2 * T22)


_leray_noise: contextvars.ContextVar[Callable[[GridSpec], np.ndarray] | None] = (
    contextvars.ContextVar("rotmhd_leray_noise", default=None)
)


def spec_leray(grid: GridSpec, V1: np.ndarray, V2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fourier-multiplier projection onto divergence-free fields."""
    k1, k2 = grid.kd
    sym = -grid.inv_lap_symbol  # 1/|k|^2, zero where the symbol vanishes
    noise = _leray_noise.get()
    if noise is not None:
        sym = sym * noise(grid)
    q = (k1 * V1 + k2 * V2) * sym
    return V1 - k1 * q, V2 - k2 * q


@contextlib.contextmanager
def corrupted_leray(seed: int, strength: float = 0.1) -> Iterator[None]:
    """Fault-injection hook: perturb the projection symbol inside the block.

    Every mode's gradient-removal weight is scaled by a seeded random factor
    in ``[1 - strength, 1]``, so the result is no longer divergence-free.
    Only affects the calling context.
    """
    cache: dict[GridSpec, np.ndarray] = {}

    def noise(grid: GridSpec) -> np.ndarray:
        if grid not in cache:
            rng = np.random.default_rng(seed)
            cache[grid] = 1.0 - strength * rng.random(grid.spectral_shape)
        return cache[grid]

    token = _leray_noise.set(noise)
    try:
        yield
    finally:
        _leray_noise.reset(token)


# ---------------------------------------------------------------------------
# fields


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{what} contains non-finite values")


def _same_grid(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise GridMismatch(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a scalar on a :class:`GridSpec`.

    The sample array is copied on construction and made read-only.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float, copy=True)
        n = self.grid.n
        if arr.shape != (n, n):
            raise ValueError(f"expected samples of shape {(n, n)}, got {arr.shape}")
        _check_finite(arr, "scalar field")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def _wrap(cls, grid: GridSpec, arr: np.ndarray) -> "ScalarField":
        # trusted fast path: no copy, still checked
        obj = object.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=float)
        _check_finite(arr, "scalar field")
        arr.flags.writeable = False
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "values", arr)
        return obj

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ScalarField":
        X, Y = grid.coords
        return cls(grid, np.broadcast_to(fn(X, Y), (grid.n, grid.n)))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ScalarField":
        return cls._wrap(grid, np.full((grid.n, grid.n), float(c)))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls.constant(grid, 0.0)

    def mean(self) -> float:
        return float(self.values.mean())

    def integral(self) -> float:
        return self.mean() * self.grid.area

    def _binary(self, other, op):
        if isinstance(other, ScalarField):
            _same_grid(self.grid, other.grid)
            return ScalarField._wrap(self.grid, op(self.values, other.values))
        if np.isscalar(other):
            return ScalarField._wrap(self.grid, op(self.values, float(other)))
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return ScalarField._wrap(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Pair of :class:`ScalarField` components on a common grid."""

    x: ScalarField
    y: ScalarField

    def __post_init__(self) -> None:
        _same_grid(self.x.grid, self.y.grid)

    @property
    def grid(self) -> GridSpec:
        return self.x.grid

    @classmethod
    def from_arrays(cls, grid: GridSpec, ax: np.ndarray, ay: np.ndarray) -> "VectorField":
        return cls(ScalarField(grid, ax), ScalarField(grid, ay))

    @classmethod
    def _wrap(cls, grid: GridSpec, ax: np.ndarray, ay: np.ndarray) -> "VectorField":
        return cls(ScalarField._wrap(grid, ax), ScalarField._wrap(grid, ay))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "VectorField":
        X, Y = grid.coords
        ax, ay = fn(X, Y)
        shape = (grid.n, grid.n)
        return cls.from_arrays(grid, np.broadcast_to(ax, shape), np.broadcast_to(ay, shape))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        z = ScalarField.zeros(grid)
        return cls(z, z)

    def stack(self) -> np.ndarray:
        """Components as a fresh ``(2, n, n)`` array."""
        return np.stack([self.x.values, self.y.values])

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.x.values, self.y.values)

    def _binary(self, other, op):
        if isinstance(other, VectorField):
            _same_grid(self.grid, other.grid)
            return VectorField(op(self.x, other.x), op(self.y, other.y))
        if np.isscalar(other) or isinstance(other, ScalarField):
            return VectorField(op(self.x, other), op(self.y, other))
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(-self.x, -self.y)


@dataclass(frozen=True, eq=False)
class SpectralScalar:
    """Half-spectrum coefficients of a real scalar field.

    ``modes[i1, i2]`` holds the coefficient of ``exp(i (k1 x + k2 y))`` with
    ``k1 = fftfreq`` index ``i1`` and ``k2 = i2 >= 0``; coefficients with
    ``k2 < 0`` are the complex conjugates of ``(-k1, -k2)``.
    """

    grid: GridSpec
    modes: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.modes, dtype=complex, copy=True)
        if arr.shape != self.grid.spectral_shape:
            raise ValueError(f"expected modes of shape {self.grid.spectral_shape}, got {arr.shape}")
        _check_finite(arr, "spectral field")
        arr.flags.writeable = False
        object.__setattr__(self, "modes", arr)

    @classmethod
    def _wrap(cls, grid: GridSpec, arr: np.ndarray) -> "SpectralScalar":
        obj = object.__new__(cls)
        arr.flags.writeable = False
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "modes", arr)
        return obj

    def mode(self, k1: int, k2: int) -> complex:
        """Coefficient of the integer wavevector ``(k1, k2)``."""
        n = self.grid.n
        if max(abs(k1), abs(k2)) > n // 2:
            raise IndexError(f"wavevector {(k1, k2)} outside the grid band")
        if k2 < 0:
            return complex(np.conj(self.modes[(-k1) % n, -k2]))
        return complex(self.modes[k1 % n, k2])

    def nonzero_modes(self, tol: float = 1e-14) -> list[tuple[int, int]]:
        """All wavevectors (both Hermitian partners) with modulus above ``tol``."""
        i1, i2 = self.grid.k_index
        found = set()
        for a, b in zip(*np.nonzero(np.abs(self.modes) > tol)):
            k1, k2 = int(i1[a, 0]), int(i2[0, b])
            found.add((k1, k2))
            found.add((-k1, -k2))
        return sorted(found)


@dataclass(frozen=True, eq=False)
class SpectralVector:
    """Half-spectrum coefficients of both components of a vector field."""

    x: SpectralScalar
    y: SpectralScalar

    def __post_init__(self) -> None:
        _same_grid(self.x.grid, self.y.grid)

    @property
    def grid(self) -> GridSpec:
        return self.x.grid


Field = Union[ScalarField, VectorField]


# ---------------------------------------------------------------------------
# field-level operations


def transform(field):
    """Forward transform of a scalar or vector field."""
    if isinstance(field, VectorField):
        return SpectralVector(transform(field.x), transform(field.y))
    return SpectralScalar._wrap(field.grid, fwd(field.values))


def inverse(spec):
    """Inverse transform back to real samples."""
    if isinstance(spec, SpectralVector):
        return VectorField(inverse(spec.x), inverse(spec.y))
    return ScalarField._wrap(spec.grid, inv(spec.modes, spec.grid.n))


def _vec_spec(v: VectorField) -> tuple[np.ndarray, np.ndarray]:
    return fwd(v.x.values), fwd(v.y.values)


def _vec_out(grid: GridSpec, A: np.ndarray, B: np.ndarray) -> VectorField:
    n = grid.n
    return VectorField._wrap(grid, inv(A, n), inv(B, n))


def gradient(f: ScalarField) -> VectorField:
    A, B = spec_grad(f.grid, fwd(f.values))
    return _vec_out(f.grid, A, B)


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    return ScalarField._wrap(g, inv(spec_div(g, *_vec_spec(v)), g.n))


def laplacian(f: ScalarField) -> ScalarField:
    g = f.grid
    return ScalarField._wrap(g, inv(g.lap_symbol * fwd(f.values), g.n))


def curl2d(v: VectorField) -> ScalarField:
    """Scalar curl ``d1 v2 - d2 v1``."""
    g = v.grid
    return ScalarField._wrap(g, inv(spec_curl(g, *_vec_spec(v)), g.n))


def perp(v: VectorField) -> VectorField:
    """Pointwise rotation by a quarter turn, ``(v1, v2) -> (-v2, v1)``."""
    return VectorField(-v.y, v.x)


def leray_project(v: VectorField) -> VectorField:
    A, B = spec_leray(v.grid, *_vec_spec(v))
    return _vec_out(v.grid, A, B)


def dealias(spec):
    """2/3-rule truncation; accepts spectral scalars or vectors."""
    if isinstance(spec, SpectralVector):
        return SpectralVector(dealias(spec.x), dealias(spec.y))
    return SpectralScalar._wrap(spec.grid, spec.modes * spec.grid.dealias_mask)


def poisson_solve(f: ScalarField, zero_mean: bool = True, rtol: float = 1e-10) -> ScalarField:
    """Solve ``laplacian(p) = f`` for a zero-mean ``p``.

    Parameters
    ----------
    f : ScalarField
        Right-hand side.
    zero_mean : bool
        If True (default) a right-hand side whose mean exceeds
        ``rtol * max|f|`` raises :class:`MeanNotZero`. If False the mean is
        discarded and the compatible problem is solved.
    """
    g = f.grid
    F = fwd(f.values)
    scale = float(np.max(np.abs(f.values))) if f.values.size else 0.0
    if zero_mean and abs(F[0, 0]) > rtol * max(scale, 1e-300) and abs(F[0, 0]) > 0:
        raise MeanNotZero(f"right-hand side has mean {F[0, 0].real:.3e}")
    return ScalarField._wrap(g, inv(g.inv_lap_symbol * F, g.n))


def inner(a: Field, b: Field) -> float:
    """L2 inner product over the domain."""
    if isinstance(a, VectorField) and isinstance(b, VectorField):
        return inner(a.x, b.x) + inner(a.y, b.y)
    if isinstance(a, ScalarField) and isinstance(b, ScalarField):
        _same_grid(a.grid, b.grid)
        return float(np.mean(a.values * b.values) * a.grid.area)
    raise TypeError("inner product needs two scalar or two vector fields")


def l2_norm(a: Field) -> float:
    return math.sqrt(max(inner(a, a), 0.0))
