"""Integrating-factor Runge-Kutta time stepping.

The linear part ``L`` of each system (floor diffusion and, for the primitive
system, the inertial rotation of the mean velocity) is integrated exactly
through ``exp(tau L)``; the remainder ``N`` is advanced by an explicit
Runge-Kutta scheme in Lawson form::

    U_i   = exp(c_i h L) y + h sum_j a_ij exp((c_i - c_j) h L) N(U_j)
    y_new = exp(h L) y     + h sum_j b_j  exp((1 - c_j) h L)  N(U_j)

``imex_rk2`` uses Heun's tableau and ``imex_rk3`` Kutta's third-order
tableau; both only need ``exp`` at nonnegative multiples of ``h``. The
dissipation integral is accumulated with the same weights, so the energy
budget ``E(t) + int_0^t D`` is consistent to the order of the scheme.

References
----------
.. [1] Lawson, "Generalized Runge-Kutta processes for stable systems with
   large Lipschitz constants", SIAM J. Numer. Anal. 4 (1967).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import LimitState, PrimitiveState, make_system, pack, unpack
from .errors import CflViolation, NonFinite
from .grid import spec_div, spec_leray, spec_norm2

__all__ = [
    "IntegratorConfig",
    "StepReport",
    "Stepper",
    "imex_step",
    "cfl_dt",
    "advance_to",
]

_TABLEAUX = {
    # c, a (lower triangular rows), b
    "imex_rk2": ((0.0, 1.0), ((), (1.0,)), (0.5, 0.5)),
    "imex_rk3": ((0.0, 0.5, 1.0), ((), (0.5,), (-1.0, 2.0)), (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)),
}


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-integration settings.

    Exactly one of ``dt`` (fixed step) and ``cfl`` (adaptive step) is used;
    with neither given, ``cfl = 0.4``.
    """

    scheme: str = "imex_rk3"
    dt: float | None = None
    cfl: float | None = None
    t_end: float = 1.0
    coriolis_dt_factor: float = 0.5
    dealias: bool = True
    invariant_check_every: int = 1
    dt_max: float = 5e-3

    def __post_init__(self) -> None:
        if self.scheme not in _TABLEAUX:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dt is not None and self.cfl is not None:
            raise ValueError("set either dt or cfl, not both")
        if self.dt is None and self.cfl is None:
            object.__setattr__(self, "cfl", 0.4)
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.cfl is not None and not (0 < self.cfl <= 1):
            raise ValueError("cfl must lie in (0, 1]")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.coriolis_dt_factor > 0:
            raise ValueError("coriolis_dt_factor must be positive")
        if self.invariant_check_every < 1:
            raise ValueError("invariant_check_every must be >= 1")


@dataclass(frozen=True)
class StepReport:
    """Bookkeeping for one accepted step."""

    time: float
    dt_used: float
    energy_balance_residual: float
    div_residuals: tuple[float, float]
    floor_margin: float


class Stepper:
    """Advances one trajectory held as a spectral array.

    Parameters
    ----------
    state : PrimitiveState or LimitState
    params : PhysParams or LimitParams
    config : IntegratorConfig

    Attributes
    ----------
    Y : ndarray
        Current spectral state.
    time : float
    dissipated : float
        Accumulated ``int D dt`` since construction.
    energy0 : float
        Energy at construction.
    """

    def __init__(self, state, params, config: IntegratorConfig):
        self.grid = state.grid
        self.params = params
        self.config = config
        self.system = make_system(self.grid, params, config.dealias)
        if self.system.primitive != isinstance(state, PrimitiveState):
            raise TypeError("state and parameter types do not match")
        self.Y = pack(state)
        self.time = float(state.time)
        self.dissipated = 0.0
        self.energy0 = self.system.energy(self.Y)
        self.energy = self.energy0
        self.steps = 0
        self._c, self._a, self._b = _TABLEAUX[config.scheme]
        self._exp_cache: dict[float, np.ndarray] = {}

    # state access -----------------------------------------------------
    def state(self):
        return unpack(self.grid, self.Y, self.time, self.system.primitive)

    # linear part ------------------------------------------------------
    def _expo(self, tau: float) -> np.ndarray:
        e = self._exp_cache.get(tau)
        if e is None:
            if len(self._exp_cache) > 8:
                self._exp_cache.clear()
            e = np.exp(tau * self.system.decay)
            self._exp_cache[tau] = e
        return e

    def _apply_exp(self, X: np.ndarray, tau: float) -> np.ndarray:
        if tau == 0.0:
            return X.copy()
        out = X * self._expo(tau)
        w = self.system.mean_rotation
        if w:
            c, s = math.cos(tau * w), math.sin(tau * w)
            u1, u2 = out[1, 0, 0], out[2, 0, 0]
            out[1, 0, 0] = c * u1 + s * u2
            out[2, 0, 0] = c * u2 - s * u1
        return out

    # step size --------------------------------------------------------
    def stability_bound(self, cfl: float) -> float:
        umax, bmax, excess = self.system.speeds(self.Y)
        h = self.grid.h
        bound = math.inf
        if umax > 0:
            bound = min(bound, cfl * h / umax)
        if bmax > 0:
            bound = min(bound, cfl * h / bmax)
        if excess > 0:
            bound = min(bound, cfl / (excess * self.grid.kmax_dealiased**2))
        if self.system.stiff:
            bound = min(bound, self.config.coriolis_dt_factor * self.params.epsilon)
        return bound

    def next_dt(self) -> float:
        cfg = self.config
        if cfg.dt is not None:
            return cfg.dt
        return min(self.stability_bound(cfg.cfl), cfg.dt_max)

    def check_dt(self, dt: float) -> None:
        """Reject a prescribed step that violates a hard stability bound."""
        cap = self.stability_bound(1.0)
        if dt > cap * (1 + 1e-12):
            raise CflViolation(f"dt={dt:.3e} exceeds the stability bound {cap:.3e}")

    # stepping ---------------------------------------------------------
    def step(self, dt: float) -> StepReport:
        if not (dt > 0 and math.isfinite(dt)):
            raise ValueError("dt must be positive and finite")
        if self.config.dt is not None:
            self.check_dt(dt)
        Y0 = self.Y
        c, a, b = self._c, self._a, self._b
        N = self.system.explicit
        K: list[np.ndarray] = []
        D: list[float] = []
        for i in range(len(c)):
            if i == 0:
                U = Y0
            else:
                U = self._apply_exp(Y0, c[i] * dt)
                for j, aij in enumerate(a[i]):
                    if aij:
                        U = U + (dt * aij) * self._apply_exp(K[j], (c[i] - c[j]) * dt)
            k, d = N(U, want_dissipation=True)
            K.append(k)
            D.append(d)
        Y = self._apply_exp(Y0, dt)
        for j, bj in enumerate(b):
            Y = Y + (dt * bj) * self._apply_exp(K[j], (1.0 - c[j]) * dt)
        # remove round-off divergence
        g = self.grid
        Y[1], Y[2] = spec_leray(g, Y[1], Y[2])
        Y[3], Y[4] = spec_leray(g, Y[3], Y[4])
        if not np.all(np.isfinite(Y)):
            raise NonFinite(f"non-finite state after step at t={self.time:.6g}")
        dQ = dt * sum(bj * dj for bj, dj in zip(b, D))
        e_new = self.system.energy(Y)
        scale = max(self.energy0, 1e-300)
        residual = (e_new + dQ - self.energy) / scale
        self.Y = Y
        self.time += dt
        self.dissipated += dQ
        self.energy = e_new
        self.steps += 1
        div_u = math.sqrt(spec_norm2(g, spec_div(g, Y[1], Y[2])))
        div_b = math.sqrt(spec_norm2(g, spec_div(g, Y[3], Y[4])))
        margin = math.inf
        if self.system.primitive:
            margin = float(self.system.density(Y).min()) - self.params.rho_min
        return StepReport(self.time, dt, residual, (div_u, div_b), margin)

    def advance_to(self, t_end: float, sink: Optional[Callable] = None,
                   on_step: Optional[Callable] = None) -> "Stepper":
        """Step until ``t_end``, clipping the last step to land on it exactly.

        ``sink(state, report)`` is called every ``invariant_check_every``
        steps and after the final step; ``on_step(stepper, report)`` after
        every step with no state construction.
        """
        if t_end < self.time:
            raise ValueError("t_end precedes the current time")
        every = self.config.invariant_check_every
        while self.time < t_end:
            dt = self.next_dt()
            last = self.time + dt >= t_end * (1 - 1e-14) or t_end - (self.time + dt) < 1e-12 * max(1.0, t_end)
            if last:
                dt = t_end - self.time
            rep = self.step(dt)
            if last:
                self.time = float(t_end)
                rep = StepReport(self.time, rep.dt_used, rep.energy_balance_residual,
                                 rep.div_residuals, rep.floor_margin)
            if on_step is not None:
                on_step(self, rep)
            if sink is not None and (self.steps % every == 0 or last):
                sink(self.state(), rep)
        return self


def imex_step(state, params, config: IntegratorConfig, dt: float | None = None):
    """Advance by one step; returns ``(new_state, StepReport)``."""
    st = Stepper(state, params, config)
    rep = st.step(st.next_dt() if dt is None else dt)
    return st.state(), rep


def cfl_dt(state, params, config: IntegratorConfig) -> float:
    """Adaptive step from the advective, Alfvenic, excess-diffusion and rotation bounds."""
    st = Stepper(state, params, config)
    cfl = config.cfl if config.cfl is not None else 0.4
    return min(st.stability_bound(cfl), config.dt_max)


def advance_to(state, params, config: IntegratorConfig, t_end: float | None = None,
               sink: Optional[Callable] = None):
    """Integrate to ``t_end`` (default ``config.t_end``) and return the final state."""
    t_end = config.t_end if t_end is None else t_end
    if t_end == state.time:
        return state
    st = Stepper(state, params, config)
    st.advance_to(t_end, sink)
    return st.state()
