"""Decoupled fixed-point integrator in the rescaled variables.

The densities are rescaled by ``s = sigma / R``, with ``R = r_upper``:
``u_hat = u / s`` and ``v_hat = v / s``.  On each time slab the map

    (u_hat, v_hat) -> (solve_linear_u(v_new, u_hat), v_new := solve_linear_v(u_hat, v_hat))

is iterated until successive slab trajectories agree to ``fp_tol``.  Each
inner problem is linear in the unknown: the other species is frozen, and
the quadratic self-limitation term lags one factor to the previous iterate.
Frozen coefficients are sampled at the new time level, so the fixed point
couples the two species implicitly within a step.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .grid import Grid, div_flux_upwind, taxis_rate
from .imex import (
    BlowUp,
    CflViolation,
    Observer,
    SolverError,
    State,
    StepControl,
    resolve_blowup_threshold,
    solve_diffusion_implicit,
    time_levels,
)
from .model import DerivedConstants, ModelParams
from .trace import BLOWUP, SOLVER_FAILURE, NormRecord, NormTrace, Termination

log = logging.getLogger(__name__)


class PicardConvergenceError(SolverError):
    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = residuals
        self.residual = residuals[-1] if residuals else math.nan


@dataclass(frozen=True)
class PicardControl(StepControl):
    slab_steps: int = 1
    fp_tol: float = 1e-10
    fp_max_iter: int = 50

    def __post_init__(self):
        super().__post_init__()
        if self.slab_steps < 1:
            raise ValueError("slab_steps must be >= 1")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")
        if self.fp_max_iter < 1:
            raise ValueError("fp_max_iter must be >= 1")


@dataclass(frozen=True)
class ScaledState:
    u_hat: np.ndarray
    v_hat: np.ndarray
    t: float
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "u_hat", self.grid.check(self.u_hat))
        object.__setattr__(self, "v_hat", self.grid.check(self.v_hat))
        object.__setattr__(self, "t", float(self.t))


class SlabResult(NamedTuple):
    state: ScaledState
    iterations: int
    residuals: list[float]


def scale_factor(dc: DerivedConstants) -> float:
    return dc.sigma / dc.r_upper


def scale_to_hat(s: State, dc: DerivedConstants) -> ScaledState:
    k = scale_factor(dc)
    return ScaledState(s.u / k, s.v / k, s.t, s.grid)


def scale_from_hat(s: ScaledState, dc: DerivedConstants) -> State:
    k = scale_factor(dc)
    return State(s.u_hat * k, s.v_hat * k, s.t, s.grid)


def _check_cfl(potential, coeff, dt, grid, cfl_safety):
    rate = taxis_rate(potential, coeff, grid)
    if rate > 0.0 and dt * rate > cfl_safety * (1.0 + 1e-12):
        raise CflViolation(dt, cfl_safety / rate)


def solve_linear_v(
    u_frozen: np.ndarray,
    v_coeff: np.ndarray,
    v_init: np.ndarray,
    times: np.ndarray,
    grid: Grid,
    p: ModelParams,
    dc: DerivedConstants,
    cfl_safety: float = 0.5,
) -> np.ndarray:
    """Prey trajectory for frozen predator ``u_frozen`` (all in hat variables).

    Solves v_t = d2 Δv + (σξ/R) ∇·(v ∇u) + (a2 - (σ/R) u - (σ b2/R) v_coeff) v
    with the taxis written in flux form, which is the same operator as the
    split advection/source form and keeps the update positive.  Trajectories
    have shape ``(len(times), *grid.shape)``.
    """
    k = scale_factor(dc)
    coeff = k * p.xi
    out = np.empty((len(times),) + grid.shape)
    out[0] = v_init
    for j in range(len(times) - 1):
        dt = float(times[j + 1] - times[j])
        uf, vc, v = u_frozen[j + 1], v_coeff[j + 1], out[j]
        _check_cfl(uf, coeff, dt, grid, cfl_safety)
        w = v + dt * div_flux_upwind(v, uf, coeff, grid)
        w = w * (1.0 + dt * p.a2) / (1.0 + dt * (k * uf + k * p.b2 * vc))
        out[j + 1] = solve_diffusion_implicit(w, p.d2, dt, grid)
    return out


def solve_linear_u(
    v_frozen: np.ndarray,
    u_coeff: np.ndarray,
    u_init: np.ndarray,
    times: np.ndarray,
    grid: Grid,
    p: ModelParams,
    dc: DerivedConstants,
    cfl_safety: float = 0.5,
) -> np.ndarray:
    """Predator trajectory for frozen prey ``v_frozen``; mirror of :func:`solve_linear_v`.

    u_t = d1 Δu - (σχ/R) ∇·(u ∇v) + (-a1 + (σ c1/R) v - (σ b1/R) u_coeff) u
    """
    k = scale_factor(dc)
    coeff = -k * p.chi
    out = np.empty((len(times),) + grid.shape)
    out[0] = u_init
    for j in range(len(times) - 1):
        dt = float(times[j + 1] - times[j])
        vf, uc, u = v_frozen[j + 1], u_coeff[j + 1], out[j]
        _check_cfl(vf, coeff, dt, grid, cfl_safety)
        w = u + dt * div_flux_upwind(u, vf, coeff, grid)
        w = w * (1.0 + dt * k * p.c1 * vf) / (1.0 + dt * (p.a1 + k * p.b1 * uc))
        out[j + 1] = solve_diffusion_implicit(w, p.d1, dt, grid)
    return out


def picard_slab(
    s: ScaledState,
    p: ModelParams,
    dc: DerivedConstants,
    ctl: PicardControl,
    times: Optional[np.ndarray] = None,
) -> SlabResult:
    """Iterate the decoupled solve map over one slab until it settles.

    The first guess holds ``s`` constant across the slab.  Convergence is
    declared when both slab trajectories move by less than ``ctl.fp_tol``
    in the sup norm.  The test is on hat variables, so the unscaled
    iterates agree to ``fp_tol * scale_factor(dc)``.

    Raises
    ------
    PicardConvergenceError
        If ``ctl.fp_max_iter`` is exhausted, or the residual grows after the
        second iteration.
    """
    if times is None:
        times = s.t + ctl.dt * np.arange(ctl.slab_steps + 1)
    times = np.asarray(times, dtype=float)
    grid = s.grid
    U = np.broadcast_to(s.u_hat, (len(times),) + grid.shape)
    V = np.broadcast_to(s.v_hat, (len(times),) + grid.shape)
    residuals: list[float] = []
    for it in range(1, ctl.fp_max_iter + 1):
        V_new = solve_linear_v(U, V, s.v_hat, times, grid, p, dc, ctl.cfl_safety)
        U_new = solve_linear_u(V_new, U, s.u_hat, times, grid, p, dc, ctl.cfl_safety)
        with np.errstate(invalid="ignore"):
            res = float(max(np.max(np.abs(U_new - U)), np.max(np.abs(V_new - V))))
        residuals.append(res)
        U, V = U_new, V_new
        if not math.isfinite(res):
            end = ScaledState(U[-1], V[-1], times[-1], grid)
            raise BlowUp(float(times[-1]), end, math.inf)
        if res < ctl.fp_tol:
            return SlabResult(ScaledState(U[-1], V[-1], times[-1], grid), it, residuals)
        if it > 2 and res > residuals[-2]:
            log.warning("fixed-point residual grew at t=%r: %r", s.t, residuals)
            raise PicardConvergenceError(
                f"fixed-point residual increased at iteration {it} (t={s.t!r}): {residuals[-2]!r} -> {res!r}",
                residuals,
            )
    raise PicardConvergenceError(
        f"no fixed point after {ctl.fp_max_iter} iterations at t={s.t!r}; last residual {residuals[-1]!r}",
        residuals,
    )


def run_picard(
    s0: State,
    p: ModelParams,
    dc: DerivedConstants,
    ctl: PicardControl,
    observers: Iterable[Observer] = (),
) -> NormTrace:
    """Integrate slab by slab; records carry the iteration count per slab.

    Observers receive the unscaled state at every slab end; norms are
    recorded every ``ctl.record_stride`` slabs and at the last one.
    """
    observers = tuple(observers)
    threshold = resolve_blowup_threshold(ctl, dc)
    trace = NormTrace()
    levels = time_levels(s0.t, ctl.max_time, ctl.dt)
    n = len(levels) - 1
    hat = scale_to_hat(s0, dc)
    state = s0
    starts = range(0, n, ctl.slab_steps)
    for count, k in enumerate(starts, start=1):
        times = levels[k : min(k + ctl.slab_steps, n) + 1]
        try:
            hat, iters, _ = picard_slab(hat, p, dc, ctl, times)
            state = scale_from_hat(hat, dc)
            if not (state.finite and state.sup <= threshold):
                raise BlowUp(state.t, state, state.sup)
        except BlowUp as exc:
            bad = exc.state if isinstance(exc.state, State) else scale_from_hat(exc.state, dc)
            trace.append(NormRecord.measure(bad.u, bad.v, exc.t, s0.grid))
            trace.termination = Termination(BLOWUP, exc.t, str(exc))
            for obs in observers:
                obs(bad)
            return trace
        except SolverError as exc:
            trace.termination = Termination(SOLVER_FAILURE, state.t, str(exc))
            return trace
        for obs in observers:
            obs(state)
        if count % ctl.record_stride == 0 or count == len(starts):
            trace.append(NormRecord.measure(state.u, state.v, state.t, s0.grid, iters))
    trace.termination = Termination(time=state.t)
    return trace


def integrate_picard(s0: State, p: ModelParams, dc: DerivedConstants, ctl: PicardControl) -> tuple[State, NormTrace]:
    last = [s0]

    def keep(state: State) -> None:
        last[0] = state

    trace = run_picard(s0, p, dc, ctl, observers=[keep])
    return last[0], trace


def picard_control_from(ctl: StepControl, **changes) -> PicardControl:
    """Lift plain step controls to Picard controls with default slab settings."""
    fields = {f.name: getattr(ctl, f.name) for f in dataclasses.fields(StepControl)}
    fields.update(changes)
    return PicardControl(**fields)
