"""Right-hand sides and diagnostics for rotating, density-dependent MHD.

Two systems are assembled pseudo-spectrally on the torus.

Primitive system, in velocity form (the momentum balance divided by the
density, which is kept above a floor ``rho_min``)::

    d_t rho = -div(rho u)
    d_t u   = P_rho[ -div(u (x) u) - u^perp/eps
                     + (1/rho) (div(nu(rho) grad u) + div(b (x) b)) ]
    d_t b   = perp_grad( mu(rho) curl b - u x b )

``P_rho f = f - (1/rho) grad phi`` with ``div((1/rho) grad phi) = div f`` is
the density-weighted projection: it removes exactly the pressure term
``(1/rho) grad(pi/eps + |b|^2/2)`` of the momentum equation. The elliptic
problem is solved by conjugate gradients preconditioned with the
mean-coefficient Laplacian.

Limit system (homogeneous MHD driven by a transported scalar)::

    d_t r = -div(r u)
    d_t u = P[-div(u (x) u) - r u^perp + div(b (x) b)] + nu1 lap u
    d_t b = -div(u (x) b - b (x) u) + mu1 lap b

All quadratic products are dealiased with the 2/3 rule.

Internally every state is a spectral array of shape ``(5, n, n//2+1)``
holding ``(rho or r, u1, u2, b1, b2)``. The time stepper splits each system
into a linear part it integrates exactly (floor diffusion and, for the
primitive system, the inertial rotation of the mean velocity at rate
``1/eps``) and an explicit remainder returned by ``explicit()``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DensityFloorBreach, FloorViolation, GridMismatch, NonFinite, SolverError
from .grid import (
    GridSpec,
    ScalarField,
    VectorField,
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

__all__ = [
    "CoefficientLaw",
    "PhysParams",
    "LimitParams",
    "PrimitiveState",
    "LimitState",
    "DiagnosticsRecord",
    "coefficient_eval",
    "primitive_rhs",
    "limit_rhs",
    "friedrichs_truncate",
    "pressure_recover",
    "diagnostics_compute",
    "weighted_poisson_solve",
    "PrimitiveSystem",
    "LimitSystem",
]


# ---------------------------------------------------------------------------
# coefficient laws and parameters


@dataclass(frozen=True)
class CoefficientLaw:
    """Density-dependent transport coefficient with a positive floor.

    Parameters
    ----------
    kind : {'constant', 'affine', 'table'}
    params : tuple
        ``(c,)`` for constant, ``(c0, c1)`` for ``c0 + c1*rho``, or
        ``(rho_nodes, values)`` for piecewise-linear interpolation between
        increasing nodes (held constant outside the table).
    floor : float, optional
        Lower bound of the law. Defaults to the constant value, ``c0`` for an
        affine law with ``c1 >= 0`` and the smallest table value otherwise.
    """

    kind: str
    params: tuple
    floor: float | None = None

    def __post_init__(self) -> None:
        kind = self.kind
        if kind == "constant":
            (c,) = self.params
            params = (float(c),)
            default_floor = float(c)
        elif kind == "affine":
            c0, c1 = self.params
            params = (float(c0), float(c1))
            default_floor = float(c0) if c1 >= 0 else math.nan
        elif kind == "table":
            nodes, vals = self.params
            nodes = tuple(float(x) for x in nodes)
            vals = tuple(float(x) for x in vals)
            if len(nodes) < 2 or len(nodes) != len(vals):
                raise ValueError("table law needs at least two nodes and matching values")
            if any(b <= a for a, b in zip(nodes, nodes[1:])):
                raise ValueError("table nodes must be strictly increasing")
            params = (nodes, vals)
            default_floor = min(vals)
        else:
            raise ValueError(f"unknown coefficient law kind {kind!r}")
        object.__setattr__(self, "params", params)
        floor = default_floor if self.floor is None else float(self.floor)
        if not (floor > 0 and math.isfinite(floor)):
            raise FloorViolation(f"coefficient floor must be positive, got {floor}")
        object.__setattr__(self, "floor", floor)

    @classmethod
    def constant(cls, value: float, floor: float | None = None) -> "CoefficientLaw":
        return cls("constant", (value,), floor)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind == "constant":
            return np.full_like(rho, self.params[0])
        if self.kind == "affine":
            c0, c1 = self.params
            return c0 + c1 * rho
        nodes, vals = self.params
        return np.interp(rho, nodes, vals)

    def value(self, rho: float) -> float:
        return float(self(np.asarray([rho]))[0])

    def check_range(self, rho_hi: float) -> None:
        """Raise :class:`FloorViolation` if the law dips below its floor on ``[0, rho_hi]``."""
        probe = np.linspace(0.0, rho_hi, 2049)
        if self.kind == "table":
            nodes = np.asarray(self.params[0])
            probe = np.concatenate([probe, nodes[(nodes >= 0) & (nodes <= rho_hi)]])
        lo = float(np.min(self(probe)))
        if lo < self.floor * (1 - 1e-12):
            raise FloorViolation(f"{self.kind} law reaches {lo:.6g} below its floor {self.floor:.6g}")


@dataclass(frozen=True)
class PhysParams:
    """Physical parameters of the primitive system.

    Parameters
    ----------
    epsilon : float
        Rossby number, ``0 < epsilon <= 1``.
    nu, mu : CoefficientLaw
        Viscosity and resistivity laws; their floors are the diffusivities
        integrated exactly by the time stepper.
    rho_star : float
        Density scale; admissible densities lie in ``[rho_min, 2 rho_star]``.
    rho_min : float
        Numerical density floor.
    qh_cancellation : bool
        Quasi-homogeneous switch: evaluate the Coriolis force through
        ``r = (rho - 1)/eps`` so its singular gradient part cancels
        analytically. Meaningful when ``rho = 1 + eps r``.
    """

    epsilon: float
    nu: CoefficientLaw = field(default_factory=lambda: CoefficientLaw.constant(1.0))
    mu: CoefficientLaw = field(default_factory=lambda: CoefficientLaw.constant(1.0))
    rho_star: float = 1.5
    rho_min: float = 0.05
    qh_cancellation: bool = False

    def __post_init__(self) -> None:
        if not (0 < self.epsilon <= 1):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not (0 < self.rho_min <= self.rho_star):
            raise ValueError("need 0 < rho_min <= rho_star")
        self.nu.check_range(2 * self.rho_star)
        self.mu.check_range(2 * self.rho_star)

    def with_epsilon(self, eps: float) -> "PhysParams":
        return replace(self, epsilon=eps)


@dataclass(frozen=True)
class LimitParams:
    """Assembly settings of the limit system.

    ``friedrichs_j`` set to a radius truncates every nonlinear tendency to
    modes ``|k| <= j``.
    """

    nu1: float = 1.0
    mu1: float = 1.0
    friedrichs_j: float | None = None

    def __post_init__(self) -> None:
        if not (self.nu1 > 0 and self.mu1 > 0):
            raise ValueError("nu1 and mu1 must be positive")
        if self.friedrichs_j is not None and self.friedrichs_j < 1:
            raise ValueError("truncation radius must be >= 1")


# ---------------------------------------------------------------------------
# states


def _check_grids(*fields) -> GridSpec:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatch("state components live on different grids")
    return grid


@dataclass(frozen=True, eq=False)
class PrimitiveState:
    """``(rho, u, b)`` at time ``time``."""

    time: float
    rho: ScalarField
    u: VectorField
    b: VectorField

    def __post_init__(self) -> None:
        _check_grids(self.rho, self.u, self.b)

    @property
    def grid(self) -> GridSpec:
        return self.rho.grid


@dataclass(frozen=True, eq=False)
class LimitState:
    """``(r, u, b)`` at time ``time``."""

    time: float
    r: ScalarField
    u: VectorField
    b: VectorField

    def __post_init__(self) -> None:
        _check_grids(self.r, self.u, self.b)

    @property
    def grid(self) -> GridSpec:
        return self.r.grid


def pack(state) -> np.ndarray:
    """State -> spectral array ``(5, n, n//2+1)``."""
    s = state.rho if isinstance(state, PrimitiveState) else state.r
    stack = np.stack([s.values, state.u.x.values, state.u.y.values, state.b.x.values, state.b.y.values])
    return fwd(stack)


def unpack(grid: GridSpec, Y: np.ndarray, time: float, primitive: bool):
    a = inv(Y, grid.n)
    s = ScalarField._wrap(grid, a[0])
    u = VectorField._wrap(grid, a[1], a[2])
    b = VectorField._wrap(grid, a[3], a[4])
    if primitive:
        return PrimitiveState(time, s, u, b)
    return LimitState(time, s, u, b)


# ---------------------------------------------------------------------------
# variable-coefficient projection


def weighted_poisson_solve(
    grid: GridSpec,
    a: np.ndarray,
    G: np.ndarray,
    rtol: float = 1e-13,
    maxiter: int = 500,
) -> np.ndarray:
    """Solve ``div(a grad phi) = g`` for zero-mean ``phi``.

    Parameters
    ----------
    a : ndarray
        Positive coefficient samples.
    G : ndarray
        Half-spectrum of ``g``; must be orthogonal to the operator's null
        space (true whenever ``g`` is a spectral divergence).

    Returns
    -------
    ndarray
        Half-spectrum of ``phi``.

    Notes
    -----
    Conjugate gradients on ``-div(a grad .)``, which is symmetric for the
    grid inner product, preconditioned by ``-mean(a) lap``.
    """
    n = grid.n
    abar = float(a.mean())
    precond = -grid.inv_lap_symbol / abar
    w = grid.hermitian_weight
    k1, k2 = grid.kd

    def apply(P: np.ndarray) -> np.ndarray:
        g = inv(np.stack([1j * k1 * P, 1j * k2 * P]), n)
        F = fwd(a * g)
        return -1j * (k1 * F[0] + k2 * F[1])

    def dot(X: np.ndarray, Y: np.ndarray) -> float:
        return float(np.sum(w * (X.conj() * Y).real))

    b = -G
    bnorm = math.sqrt(dot(b, b))
    phi = precond * b
    if bnorm == 0.0:
        return np.zeros_like(G)
    res = b - apply(phi)
    z = precond * res
    p = z.copy()
    rz = dot(res, z)
    for _ in range(maxiter):
        if math.sqrt(dot(res, res)) <= rtol * bnorm:
            return phi
        Ap = apply(p)
        alpha = rz / dot(p, Ap)
        phi = phi + alpha * p
        res = res - alpha * Ap
        z = precond * res
        rz_new = dot(res, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if math.sqrt(dot(res, res)) <= rtol * bnorm * 10:
        return phi
    raise SolverError("density-weighted projection did not converge")


# ---------------------------------------------------------------------------
# spectral systems


class PrimitiveSystem:
    """Pseudo-spectral assembly of the primitive system on a fixed grid."""

    primitive = True

    def __init__(self, grid: GridSpec, params: PhysParams, dealias: bool = True):
        self.grid = grid
        self.params = params
        self.dealias = dealias
        self.nu_star = params.nu.floor
        self.mu_star = params.mu.floor
        lap = grid.lap_symbol
        self.decay = np.stack([np.zeros_like(lap), self.nu_star * lap, self.nu_star * lap,
                               self.mu_star * lap, self.mu_star * lap])
        self.mean_rotation = 1.0 / params.epsilon
        self.stiff = not params.qh_cancellation
        self._mask = grid.dealias_mask if dealias else None

    # helpers -----------------------------------------------------------
    def _D(self, A: np.ndarray) -> np.ndarray:
        return A * self._mask if self._mask is not None else A

    def density(self, Y: np.ndarray) -> np.ndarray:
        rho = inv(Y[0], self.grid.n)
        self._check_density(rho)
        return rho

    def _check_density(self, rho: np.ndarray) -> None:
        if not np.all(np.isfinite(rho)):
            raise NonFinite("density is not finite")
        lo = float(rho.min())
        if lo < self.params.rho_min * (1 - 1e-6):
            raise DensityFloorBreach(f"density {lo:.6g} below floor {self.params.rho_min}")
        hi = float(rho.max())
        if hi > 2 * self.params.rho_star * (1 + 1e-6):
            raise DensityFloorBreach(f"density {hi:.6g} above ceiling {2 * self.params.rho_star}")

    def momentum_forcing(self, Y: np.ndarray, phys: np.ndarray, direct_mean: bool):
        """Unprojected momentum tendency ``F`` (spectral) and ``1/rho``.

        ``direct_mean`` keeps the rotation of the mean velocity in ``F``;
        otherwise it is left to the exact linear part.
        """
        g = self.grid
        p = self.params
        rho, u1, u2, b1, b2 = phys
        D = self._D
        arho = 1.0 / rho
        # advection and Lorentz force in conservative form
        T = fwd(np.stack([u1 * u1, u1 * u2, u2 * u2, b1 * b1, b1 * b2, b2 * b2]))
        T = D(T)
        A1, A2 = spec_div_tensor(g, T[0], T[1], T[2])
        L1, L2 = spec_div_tensor(g, T[3], T[4], T[5])
        # viscous stress div(nu(rho) grad u)
        if p.nu.is_constant:
            nu = p.nu.params[0]
            V1, V2 = nu * g.lap_symbol * Y[1], nu * g.lap_symbol * Y[2]
        else:
            nur = p.nu(rho)
            G = inv(np.stack([*spec_grad(g, Y[1]), *spec_grad(g, Y[2])]), g.n)
            S = D(fwd(nur * G))
            V1 = spec_div(g, S[0], S[1])
            V2 = spec_div(g, S[2], S[3])
        force = inv(np.stack([V1 + L1, V2 + L2]), g.n) * arho
        F = D(fwd(force))
        F[0] -= A1
        F[1] -= A2
        # Coriolis
        eps = p.epsilon
        ubar1, ubar2 = Y[1, 0, 0].real, Y[2, 0, 0].real
        if p.qh_cancellation:
            # rho u^perp/eps = grad(..) + ubar^perp/eps + r u^perp ; the gradient
            # is absorbed by the projection
            r_over_rho = (rho - 1.0) / eps * arho
            C = D(fwd(np.stack([-(u2 - ubar2) * r_over_rho, (u1 - ubar1) * r_over_rho])))
        else:
            C = np.stack([-Y[2], Y[1]]) / eps
            C[:, 0, 0] = 0.0
        if direct_mean:
            C[0, 0, 0] += -ubar2 / eps
            C[1, 0, 0] += ubar1 / eps
        F -= C
        return F, arho

    def project(self, F: np.ndarray, arho: np.ndarray, rtol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
        """Density-weighted projection; returns ``(P_rho F, phi)`` spectrally."""
        g = self.grid
        Phi = weighted_poisson_solve(g, arho, spec_div(g, F[0], F[1]), rtol=rtol)
        grad = inv(np.stack(spec_grad(g, Phi)), g.n) * arho
        out = F - fwd(grad)
        o1, o2 = spec_leray(g, out[0], out[1])
        return np.stack([o1, o2]), Phi

    def explicit(self, Y: np.ndarray, want_dissipation: bool = False):
        """Explicit remainder of the tendency (spectral) and optionally the dissipation rate."""
        g = self.grid
        p = self.params
        D = self._D
        phys = inv(Y, g.n)
        rho, u1, u2, b1, b2 = phys
        self._check_density(rho)
        out = np.empty_like(Y)
        # mass
        M = D(fwd(np.stack([rho * u1, rho * u2])))
        out[0] = -spec_div(g, M[0], M[1])
        # momentum
        F, arho = self.momentum_forcing(Y, phys, direct_mean=False)
        PF, _ = self.project(F, arho)
        out[1:3] = D(PF) - self.decay[1:3] * Y[1:3]
        # induction: d_t b = perp_grad(mu curl b - (u1 b2 - u2 b1))
        E = fwd(u1 * b2 - u2 * b1)
        if p.mu.is_constant:
            Q = p.mu.params[0] * spec_curl(g, Y[3], Y[4]) - E
        else:
            cb = inv(spec_curl(g, Y[3], Y[4]), g.n)
            Q = fwd(p.mu(rho) * cb) - E
        Q = D(Q)
        B1, B2 = spec_perp_grad(g, Q)
        out[3] = B1 - self.decay[3] * Y[3]
        out[4] = B2 - self.decay[4] * Y[4]
        if not want_dissipation:
            return out, 0.0
        return out, self.dissipation(Y, rho)

    def dissipation(self, Y: np.ndarray, rho: np.ndarray | None = None) -> float:
        """``int nu(rho)|grad u|^2 + int mu(rho)|curl b|^2``."""
        visc, resis = self.dissipation_parts(Y, rho)
        return visc + resis

    def dissipation_parts(self, Y: np.ndarray, rho: np.ndarray | None = None) -> tuple[float, float]:
        g = self.grid
        p = self.params
        grads = np.stack([*spec_grad(g, Y[1]), *spec_grad(g, Y[2])])
        curlb = spec_curl(g, Y[3], Y[4])
        if p.nu.is_constant:
            visc = p.nu.params[0] * spec_norm2(g, grads)
        else:
            if rho is None:
                rho = inv(Y[0], g.n)
            G = inv(grads, g.n)
            visc = g.area * float(np.mean(p.nu(rho) * np.sum(G * G, axis=0)))
        if p.mu.is_constant:
            resis = p.mu.params[0] * spec_norm2(g, curlb)
        else:
            if rho is None:
                rho = inv(Y[0], g.n)
            cb = inv(curlb, g.n)
            resis = g.area * float(np.mean(p.mu(rho) * cb * cb))
        return visc, resis

    def energy(self, Y: np.ndarray) -> float:
        g = self.grid
        a = inv(Y[:3], g.n)
        ke = 0.5 * g.area * float(np.mean(a[0] * (a[1] ** 2 + a[2] ** 2)))
        return ke + 0.5 * spec_norm2(g, Y[3:5])

    def speeds(self, Y: np.ndarray) -> tuple[float, float, float]:
        """``(max|u|, max|b|, max(nu(rho) - nu*) )`` for step-size control."""
        g = self.grid
        a = inv(Y, g.n)
        umax = float(np.sqrt(np.max(a[1] ** 2 + a[2] ** 2)))
        bmax = float(np.sqrt(np.max(a[3] ** 2 + a[4] ** 2)))
        excess = 0.0
        for law, star in ((self.params.nu, self.nu_star), (self.params.mu, self.mu_star)):
            if not law.is_constant:
                excess = max(excess, float(np.max(law(a[0]))) - star)
            else:
                excess = max(excess, law.params[0] - star)
        return umax, bmax, excess


class LimitSystem:
    """Pseudo-spectral assembly of the limit system on a fixed grid.

    The spatial mean of the velocity is held constant. In the rotating
    system the mean momentum turns at rate ``1/eps``, so the mean velocity
    of a zero-mean start stays ``O(eps)``; letting the mean of ``r u^perp``
    drive it would open an ``O(1)`` gap with the ``eps -> 0`` dynamics. For
    zero-mean velocities the energy law is unaffected.
    """

    primitive = False
    stiff = False
    mean_rotation = 0.0

    def __init__(self, grid: GridSpec, params: LimitParams, dealias: bool = True):
        self.grid = grid
        self.params = params
        self.dealias = dealias
        lap = grid.lap_symbol
        self.decay = np.stack([np.zeros_like(lap), params.nu1 * lap, params.nu1 * lap,
                               params.mu1 * lap, params.mu1 * lap])
        self._mask = grid.dealias_mask if dealias else None
        j = params.friedrichs_j
        self._trunc = None if j is None else (grid.kmag <= j)

    def _D(self, A: np.ndarray) -> np.ndarray:
        return A * self._mask if self._mask is not None else A

    def explicit(self, Y: np.ndarray, want_dissipation: bool = False):
        g = self.grid
        D = self._D
        phys = inv(Y, g.n)
        if not np.all(np.isfinite(phys)):
            raise NonFinite("limit state is not finite")
        r, u1, u2, b1, b2 = phys
        P = D(fwd(np.stack([r * u1, r * u2, u1 * u1, u1 * u2, u2 * u2,
                            b1 * b1, b1 * b2, b2 * b2, -r * u2, r * u1, u1 * b2 - u2 * b1])))
        out = np.empty_like(Y)
        out[0] = -spec_div(g, P[0], P[1])
        A1, A2 = spec_div_tensor(g, P[2], P[3], P[4])
        L1, L2 = spec_div_tensor(g, P[5], P[6], P[7])
        F1 = -A1 - P[8] + L1
        F2 = -A2 - P[9] + L2
        B1, B2 = spec_perp_grad(g, -P[10])
        if self._trunc is not None:
            F1, F2, B1, B2 = (X * self._trunc for X in (F1, F2, B1, B2))
        out[1], out[2] = spec_leray(g, F1, F2)
        # the mean velocity is slaved by the fast rotation; hold it fixed
        out[1:3, 0, 0] = 0.0
        out[3], out[4] = B1, B2
        if not want_dissipation:
            return out, 0.0
        return out, self.dissipation(Y)

    def dissipation_parts(self, Y: np.ndarray, rho=None) -> tuple[float, float]:
        g = self.grid
        grads = np.stack([*spec_grad(g, Y[1]), *spec_grad(g, Y[2])])
        return (self.params.nu1 * spec_norm2(g, grads),
                self.params.mu1 * spec_norm2(g, spec_curl(g, Y[3], Y[4])))

    def dissipation(self, Y: np.ndarray, rho=None) -> float:
        return sum(self.dissipation_parts(Y))

    def energy(self, Y: np.ndarray) -> float:
        return 0.5 * spec_norm2(self.grid, Y[1:5])

    def speeds(self, Y: np.ndarray) -> tuple[float, float, float]:
        a = inv(Y[1:5], self.grid.n)
        umax = float(np.sqrt(np.max(a[0] ** 2 + a[1] ** 2)))
        bmax = float(np.sqrt(np.max(a[2] ** 2 + a[3] ** 2)))
        return umax, bmax, 0.0


def make_system(grid: GridSpec, params, dealias: bool = True):
    if isinstance(params, PhysParams):
        return PrimitiveSystem(grid, params, dealias)
    if isinstance(params, LimitParams):
        return LimitSystem(grid, params, dealias)
    raise TypeError(f"unsupported parameter object {type(params).__name__}")


def full_tendency(system, Y: np.ndarray) -> np.ndarray:
    """Explicit remainder plus the exactly integrated linear part."""
    K, _ = system.explicit(Y)
    K = K + system.decay * Y
    if system.mean_rotation:
        w = system.mean_rotation
        u1, u2 = Y[1, 0, 0], Y[2, 0, 0]
        K[1, 0, 0] += w * u2
        K[2, 0, 0] += -w * u1
    return K


# ---------------------------------------------------------------------------
# public field-level API


def coefficient_eval(law: CoefficientLaw, rho: ScalarField) -> ScalarField:
    """Pointwise ``law(rho)``; raises :class:`FloorViolation` below the floor."""
    vals = law(rho.values)
    if np.any(vals < law.floor * (1 - 1e-12)):
        raise FloorViolation(f"{law.kind} law evaluates to {vals.min():.6g} below floor {law.floor:.6g}")
    return ScalarField(rho.grid, vals)


def _unpack_tendency(grid: GridSpec, K: np.ndarray):
    a = inv(K, grid.n)
    return (ScalarField._wrap(grid, a[0]), VectorField._wrap(grid, a[1], a[2]),
            VectorField._wrap(grid, a[3], a[4]))


def primitive_rhs(state: PrimitiveState, params: PhysParams, dealias: bool = True):
    """Time derivatives ``(drho/dt, du/dt, db/dt)`` of the primitive system."""
    system = PrimitiveSystem(state.grid, params, dealias)
    return _unpack_tendency(state.grid, full_tendency(system, pack(state)))


def limit_rhs(state: LimitState, nu1: float, mu1: float, friedrichs_j: float | None = None,
              dealias: bool = True):
    """Time derivatives ``(dr/dt, du/dt, db/dt)`` of the limit system."""
    system = LimitSystem(state.grid, LimitParams(nu1, mu1, friedrichs_j), dealias)
    return _unpack_tendency(state.grid, full_tendency(system, pack(state)))


def friedrichs_truncate(params: LimitParams, j: float) -> LimitParams:
    """Limit-system assembly with nonlinear tendencies cut to ``|k| <= j``.

    The transported scalar enters the truncated system at the current
    iterate (simultaneous coupling).
    """
    if j < 1:
        raise ValueError("truncation radius must be >= 1")
    return replace(params, friedrichs_j=float(j))


def pressure_recover(state: PrimitiveState, params: PhysParams, dealias: bool = True) -> ScalarField:
    """Total pressure ``Pi = pi/eps + |b|^2/2`` of the primitive system.

    ``Pi`` is the zero-mean solution of ``div((1/rho) grad Pi) = div F``,
    ``F`` being the momentum tendency before projection (Coriolis force
    included in its direct form).
    """
    grid = state.grid
    system = PrimitiveSystem(grid, replace(params, qh_cancellation=False), dealias)
    Y = pack(state)
    phys = inv(Y, grid.n)
    system._check_density(phys[0])
    F, arho = system.momentum_forcing(Y, phys, direct_mean=True)
    Phi = weighted_poisson_solve(grid, arho, spec_div(grid, F[0], F[1]))
    return ScalarField._wrap(grid, inv(Phi, grid.n))


# ---------------------------------------------------------------------------
# diagnostics


CSV_COLUMNS = (
    "time",
    "kinetic_energy",
    "magnetic_energy",
    "viscous_dissipation",
    "resistive_dissipation",
    "div_u_norm",
    "div_b_norm",
    "r_l2",
    "r_l4",
    "r_linf",
    "sigma_sobolev_proxy",
    "rho0u_constraint",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Scalar diagnostics of one state.

    ``lp_norms_of_r`` holds the L2, L4 and Linf norms of the transported
    scalar: ``r`` for limit states, ``(rho - rho0)/eps`` for primitive ones.
    """

    time: float
    kinetic_energy: float
    magnetic_energy: float
    viscous_dissipation: float
    resistive_dissipation: float
    div_u_norm: float
    div_b_norm: float
    lp_norms_of_r: tuple[float, float, float]
    sigma_sobolev_proxy: float
    rho0u_constraint: float

    def row(self) -> tuple[float, ...]:
        return (self.time, self.kinetic_energy, self.magnetic_energy, self.viscous_dissipation,
                self.resistive_dissipation, self.div_u_norm, self.div_b_norm, *self.lp_norms_of_r,
                self.sigma_sobolev_proxy, self.rho0u_constraint)


def diagnostics_from_spectral(system, Y: np.ndarray, time: float, rho0: np.ndarray | None,
                              delta: float = 0.1) -> DiagnosticsRecord:
    g = system.grid
    phys = inv(Y, g.n)
    if rho0 is None:
        rho0 = np.ones((g.n, g.n))
    if system.primitive:
        eps = system.params.epsilon
        r = (phys[0] - rho0) / eps
        rho = phys[0]
    else:
        r = phys[0]
        rho = None
    visc, resis = system.dissipation_parts(Y, rho)
    R = fwd(r)
    div_u = spec_div(g, Y[1], Y[2])
    div_b = spec_div(g, Y[3], Y[4])
    rho0u = fwd(rho0 * phys[1:3])
    lp = (math.sqrt(g.area * float(np.mean(r * r))),
          (g.area * float(np.mean(r**4))) ** 0.25,
          float(np.max(np.abs(r))))
    return DiagnosticsRecord(
        time=float(time),
        kinetic_energy=system.energy(Y) - 0.5 * spec_norm2(g, Y[3:5]),
        magnetic_energy=0.5 * spec_norm2(g, Y[3:5]),
        viscous_dissipation=visc,
        resistive_dissipation=resis,
        div_u_norm=math.sqrt(spec_norm2(g, div_u)),
        div_b_norm=math.sqrt(spec_norm2(g, div_b)),
        lp_norms_of_r=lp,
        sigma_sobolev_proxy=sobolev_norm_spec(g, R, -3.0 - delta),
        rho0u_constraint=sobolev_norm_spec(g, spec_div(g, rho0u[0], rho0u[1]), -1.0),
    )


def diagnostics_compute(state, params, rho0: ScalarField | None = None, delta: float = 0.1) -> DiagnosticsRecord:
    """Energies, dissipation rates, residuals and weak-norm proxies of a state.

    Parameters
    ----------
    state : PrimitiveState or LimitState
    params : PhysParams or LimitParams
        Must match the state type.
    rho0 : ScalarField, optional
        Reference density (default 1).
    delta : float
        The density fluctuation proxy uses the ``H^(-3-delta)`` norm.
    """
    system = make_system(state.grid, params)
    if system.primitive != isinstance(state, PrimitiveState):
        raise TypeError("state and parameter types do not match")
    ref = None if rho0 is None else rho0.values
    return diagnostics_from_spectral(system, pack(state), state.time, ref, delta)
