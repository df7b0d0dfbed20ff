"""Discrete Littlewood-Paley calculus on the periodic grid.

Dyadic blocks are radial Fourier multipliers built from a cutoff ``chi``
that equals 1 near the unit ball and vanishes outside the ball of radius 2:

* ``S_j = chi(2^-j |D|)``                 (low-frequency cutoff)
* ``Delta_-1 = chi(|D|)``,
  ``Delta_j = chi(2^-(j+1) |D|) - chi(2^-j |D|)`` for ``j >= 0``
* ``A_j = 1{|D| <= j}``                    (sharp cutoff)

With this convention ``S_j = sum_{k <= j-1} Delta_k`` exactly and the blocks
sum to the identity. Products in the paraproduct/remainder/commutator
operators are taken pointwise on the grid without dealiasing: the Bony
identity is algebraic, so it then holds to round-off for any pair of fields.

References
----------
.. [1] Bahouri, Chemin, Danchin, "Fourier Analysis and Nonlinear Partial
   Differential Equations", Springer (2011), ch. 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .grid import GridSpec, ScalarField, VectorField, _same_grid, fwd, inv, spec_grad

__all__ = [
    "smooth_step_chi",
    "DyadicProfile",
    "DEFAULT_PROFILE",
    "BesovIndex",
    "j_max",
    "j_top",
    "cutoff_Sj",
    "block_Dj",
    "sharp_cutoff_Aj",
    "sobolev_norm",
    "besov_norm",
    "lp_sobolev_equivalence",
    "paraproduct",
    "remainder",
    "commutator_Sj",
    "ProbeReport",
    "inequality_probe",
    "random_field",
]


def smooth_step_chi(r: np.ndarray, inner: float = 1.1, outer: float = 1.9) -> np.ndarray:
    """Radial cutoff: 1 for ``r <= inner``, 0 for ``r >= outer``.

    In between, ``exp(1 - 1/(1 - t^2))`` with ``t = (r - inner)/(outer - inner)``.
    """
    r = np.asarray(r, dtype=float)
    t = (r - inner) / (outer - inner)
    out = np.zeros_like(t)
    out[t <= 0.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - tm * tm))
    return out


@dataclass(frozen=True)
class DyadicProfile:
    """Radial cutoff pair ``(chi, phi)`` with ``phi(r) = chi(r/2) - chi(r)``."""

    chi_fn: Callable[[np.ndarray], np.ndarray] = smooth_step_chi

    def chi(self, r) -> np.ndarray:
        return self.chi_fn(np.asarray(r, dtype=float))

    def phi(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.chi(0.5 * r) - self.chi(r)

    def partition_defect(self, radii, blocks: int = 64) -> float:
        """Max of ``|chi(r) + sum_j phi(2^-j r) - 1|`` over the given radii."""
        r = np.asarray(radii, dtype=float)
        total = self.chi(r)
        for j in range(blocks):
            total = total + self.phi(r * 2.0**-j)
        return float(np.max(np.abs(total - 1.0)))


DEFAULT_PROFILE = DyadicProfile()


@dataclass(frozen=True)
class BesovIndex:
    """Regularity ``s``, integrability ``p`` and summability ``r``."""

    s: float
    p: float = 2.0
    r: float = 2.0

    def __post_init__(self) -> None:
        if self.p not in (1.0, 2.0, 4.0, math.inf):
            raise ValueError(f"integrability p must be one of 1, 2, 4, inf; got {self.p}")
        if not (self.r >= 1.0):
            raise ValueError(f"summability r must lie in [1, inf]; got {self.r}")


def j_max(grid: GridSpec) -> int:
    """Top block used in norm sums: ``floor(log2(k_cut))`` with ``k_cut = n/3`` on a 2*pi torus."""
    kcut = (grid.n / 3.0) * (2.0 * math.pi / grid.length)
    return int(math.floor(math.log2(kcut)))


@lru_cache(maxsize=64)
def j_top(grid: GridSpec, profile: DyadicProfile = DEFAULT_PROFILE) -> int:
    """Smallest ``J`` such that blocks ``-1..J`` sum to the identity on every grid mode."""
    kmax = float(grid.kmag.max())
    J = -1
    while float(profile.chi(kmax * 2.0 ** -(J + 1))) != 1.0:
        J += 1
    return J


@lru_cache(maxsize=512)
def _cutoff_symbol(grid: GridSpec, j: int, profile: DyadicProfile) -> np.ndarray:
    return profile.chi(grid.kmag * 2.0**-j)


@lru_cache(maxsize=512)
def _block_symbol(grid: GridSpec, j: int, profile: DyadicProfile) -> np.ndarray:
    if j == -1:
        return profile.chi(grid.kmag)
    return profile.phi(grid.kmag * 2.0**-j)


def _apply(f, symbol: np.ndarray):
    if isinstance(f, VectorField):
        return VectorField(_apply(f.x, symbol), _apply(f.y, symbol))
    g = f.grid
    return ScalarField._wrap(g, inv(symbol * fwd(f.values), g.n))


def cutoff_Sj(f, j: int, profile: DyadicProfile = DEFAULT_PROFILE):
    """Low-frequency cutoff ``chi(2^-j |D|) f``."""
    if j < 0:
        raise ValueError("cutoff index j must be >= 0")
    grid = f.grid
    return _apply(f, _cutoff_symbol(grid, int(j), profile))


def block_Dj(f, j: int, profile: DyadicProfile = DEFAULT_PROFILE):
    """Dyadic block ``Delta_j f`` for ``j >= -1``."""
    if j < -1:
        raise ValueError("block index j must be >= -1")
    return _apply(f, _block_symbol(f.grid, int(j), profile))


def sharp_cutoff_Aj(f, j: float):
    """Keep modes with ``|k| <= j``; zero the rest."""
    if j < 1:
        raise ValueError("sharp cutoff radius j must be >= 1")
    return _apply(f, (f.grid.kmag <= j).astype(float))


def sobolev_norm(f, s: float) -> float:
    """``(area * sum (1+|k|^2)^s |f_k|^2)^(1/2)``; vectors sum their components."""
    if isinstance(f, VectorField):
        return math.hypot(sobolev_norm(f.x, s), sobolev_norm(f.y, s))
    return sobolev_norm_spec(f.grid, fwd(f.values), s)


def sobolev_norm_spec(grid: GridSpec, F: np.ndarray, s: float) -> float:
    """Sobolev norm from half-spectrum coefficients (any leading axes are summed)."""
    w = grid.hermitian_weight * (1.0 + grid.kmag**2) ** s
    return math.sqrt(grid.area * float(np.sum(w * (F.real**2 + F.imag**2))))


def _lp(grid: GridSpec, a: np.ndarray, p: float) -> float:
    if p == math.inf:
        return float(np.max(np.abs(a)))
    return float((grid.area * np.mean(np.abs(a) ** p)) ** (1.0 / p))


def besov_norm(f: ScalarField, idx: BesovIndex, profile: DyadicProfile = DEFAULT_PROFILE) -> float:
    """``|| (2^{js} ||Delta_j f||_{L^p})_j ||_{l^r}`` over ``j = -1..J_max``."""
    grid = f.grid
    F = fwd(f.values)
    terms = []
    for j in range(-1, j_max(grid) + 1):
        blk = inv(_block_symbol(grid, j, profile) * F, grid.n)
        terms.append(2.0 ** (j * idx.s) * _lp(grid, blk, idx.p))
    a = np.asarray(terms)
    if idx.r == math.inf:
        return float(a.max())
    return float(np.sum(a**idx.r) ** (1.0 / idx.r))


def lp_sobolev_equivalence(
    grid: GridSpec, s: float, profile: DyadicProfile = DEFAULT_PROFILE
) -> tuple[float, float]:
    """Exact bounds ``(lo, hi)`` with ``lo <= ||f||_{B^s_{2,2}} / ||f||_{H^s} <= hi``.

    Both norms are diagonal in Fourier space, so the extreme ratios over the
    modes the block sum covers (up to ``J_max``) are sharp for this grid.
    """
    num = np.zeros(grid.spectral_shape)
    for j in range(-1, j_max(grid) + 1):
        num += 4.0 ** (j * s) * _block_symbol(grid, j, profile) ** 2
    den = (1.0 + grid.kmag**2) ** s
    covered = _cutoff_symbol(grid, j_max(grid) + 1, profile) == 1.0
    ratio = np.sqrt(num[covered] / den[covered])
    return float(ratio.min()), float(ratio.max())


def _blocks(f: ScalarField, J: int, profile: DyadicProfile) -> list[np.ndarray]:
    grid = f.grid
    F = fwd(f.values)
    return [inv(_block_symbol(grid, j, profile) * F, grid.n) for j in range(-1, J + 1)]


def paraproduct(u: ScalarField, v: ScalarField, profile: DyadicProfile = DEFAULT_PROFILE) -> ScalarField:
    """``T_u v = sum_j S_{j-1} u * Delta_j v``."""
    _same_grid(u.grid, v.grid)
    J = j_top(u.grid, profile)
    bu = _blocks(u, J, profile)
    bv = _blocks(v, J, profile)
    out = np.zeros_like(u.values)
    low = np.zeros_like(u.values)  # S_{j-1} u, built by partial sums
    # block list index i corresponds to j = i - 1
    for i in range(2, len(bv)):
        low = low + bu[i - 2]
        out += low * bv[i]
    return ScalarField._wrap(u.grid, out)


def remainder(u: ScalarField, v: ScalarField, profile: DyadicProfile = DEFAULT_PROFILE) -> ScalarField:
    """``R(u, v) = sum_{|j-j'| <= 1} Delta_j u * Delta_j' v``."""
    _same_grid(u.grid, v.grid)
    J = j_top(u.grid, profile)
    bu = _blocks(u, J, profile)
    bv = _blocks(v, J, profile)
    out = np.zeros_like(u.values)
    m = len(bu)
    for i in range(m):
        near = bv[i] + (bv[i - 1] if i > 0 else 0.0) + (bv[i + 1] if i + 1 < m else 0.0)
        out += bu[i] * near
    return ScalarField._wrap(u.grid, out)


def commutator_Sj(f: ScalarField, g: ScalarField, j: int, profile: DyadicProfile = DEFAULT_PROFILE) -> ScalarField:
    """``[S_j, f] g = S_j(f g) - f S_j g`` with grid products."""
    _same_grid(f.grid, g.grid)
    grid = f.grid
    sym = _cutoff_symbol(grid, int(j), profile)
    fg = inv(sym * fwd(f.values * g.values), grid.n)
    sg = inv(sym * fwd(g.values), grid.n)
    return ScalarField._wrap(grid, fg - f.values * sg)


# ---------------------------------------------------------------------------
# random fields and inequality probes


def random_field(
    grid: GridSpec,
    rng: np.random.Generator,
    band: float,
    slope: float = 0.0,
    kmin: float = 1.0,
    zero_mean: bool = True,
) -> ScalarField:
    """Gaussian random field with modes in ``kmin <= |k| <= band``.

    Coefficient amplitudes scale as ``|k|^slope``. Only modes kept by the 2/3
    rule are populated, so products of two such fields are alias-free.
    """
    shape = grid.spectral_shape
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k = grid.kmag
    mask = (k >= kmin) & (k <= band) & grid.dealias_mask
    amp = np.where(mask, np.where(k > 0, k, 1.0) ** slope, 0.0)
    F = coef * amp
    if not zero_mean:
        F[0, 0] = rng.standard_normal()
    a = inv(F, grid.n)
    rms = float(np.sqrt(np.mean(a * a)))
    if rms > 0:
        a = a / rms
    return ScalarField._wrap(grid, a)


@dataclass
class ProbeReport:
    """Empirical constant of an inequality over random samples."""

    kind: str
    samples: int
    seed: int
    max_ratio: float
    mean_ratio: float
    violations: int
    min_ratio: float = field(default=math.nan, compare=False)

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("min_ratio")
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProbeReport":
        return cls(**json.loads(text))


def _gn_ratio(f: ScalarField, p: float) -> float:
    grid = f.grid
    F = fwd(f.values)
    l2 = math.sqrt(grid.area * np.mean(f.values**2))
    G1, G2 = spec_grad(grid, F)
    grad = math.sqrt(grid.area * np.mean(inv(G1, grid.n) ** 2 + inv(G2, grid.n) ** 2))
    lp = _lp(grid, f.values, p)
    return lp / (l2 ** (2.0 / p) * grad ** (1.0 - 2.0 / p))


def _linfty_ratio(f: ScalarField) -> float:
    grid = f.grid
    l2 = math.sqrt(grid.area * np.mean(f.values**2))
    lap = inv(grid.lap_symbol * fwd(f.values), grid.n)
    l2lap = math.sqrt(grid.area * np.mean(lap**2))
    return float(np.max(np.abs(f.values))) / math.sqrt(l2 * l2lap)


def _bernstein_ratio(f: ScalarField, lam: float) -> float:
    grid = f.grid
    F = fwd(f.values)
    G1, G2 = spec_grad(grid, F)
    grad = math.sqrt(grid.area * np.mean(inv(G1, grid.n) ** 2 + inv(G2, grid.n) ** 2))
    l2 = math.sqrt(grid.area * np.mean(f.values**2))
    return grad / (lam * l2)


def inequality_probe(
    kind: str,
    samples: int,
    seed: int,
    n: int = 64,
    p: float = 4.0,
    annulus: tuple[float, float] = (0.75, 2.0),
) -> ProbeReport:
    """Measure the empirical constant of a functional inequality.

    Parameters
    ----------
    kind : {'bernstein', 'gagliardo_nirenberg', 'linfty_interp'}
        ``gagliardo_nirenberg`` uses the ratio
        ``||f||_p / (||f||_2^{2/p} ||grad f||_2^{1-2/p})``; ``linfty_interp``
        uses ``||f||_inf / (||f||_2 ||lap f||_2)^{1/2}``; ``bernstein`` uses
        ``||grad f||_2 / (lam ||f||_2)`` for fields supported in the annulus
        ``lam * [annulus[0], annulus[1]]``.
    samples : int
        Number of random fields; sample ``i`` draws from the stream
        ``(seed, i)``.
    seed : int
    n : int
        Grid size.

    Returns
    -------
    ProbeReport
        ``violations`` counts non-finite ratios only.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    grid = GridSpec(n)
    kcut = grid.n // 3
    ratios = []
    for i in range(samples):
        rng = np.random.default_rng([seed, i])
        if kind == "gagliardo_nirenberg":
            band = rng.uniform(2.0, kcut)
            f = random_field(grid, rng, band, slope=rng.uniform(-2.0, 0.0))
            ratios.append(_gn_ratio(f, p))
        elif kind == "linfty_interp":
            band = rng.uniform(2.0, kcut)
            f = random_field(grid, rng, band, slope=rng.uniform(-2.0, 0.0))
            ratios.append(_linfty_ratio(f))
        elif kind == "bernstein":
            lo, hi = annulus
            lam = rng.uniform(2.0, kcut / hi)
            f = random_field(grid, rng, hi * lam, slope=rng.uniform(-2.0, 1.0), kmin=lo * lam)
            ratios.append(_bernstein_ratio(f, lam))
        else:
            raise ValueError(f"unknown probe kind {kind!r}")
    arr = np.asarray(ratios, dtype=float)
    finite = np.isfinite(arr)
    good = arr[finite]
    return ProbeReport(
        kind=kind,
        samples=samples,
        seed=seed,
        max_ratio=float(good.max()) if good.size else math.nan,
        mean_ratio=float(good.mean()) if good.size else math.nan,
        violations=int((~finite).sum()),
        min_ratio=float(good.min()) if good.size else math.nan,
    )
