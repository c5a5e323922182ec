"""Monolithic IMEX integrator.

One step is a fixed Lie splitting: explicit donor-cell taxis, then the
reaction with explicit gains and implicit (Patankar) losses, then implicit
diffusion for each species.  Every stage maps non-negative fields to
non-negative fields as long as the taxis CFL bound holds.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, div_flux_upwind, taxis_rate
from .model import DerivedConstants, ModelParams
from .trace import BLOWUP, SOLVER_FAILURE, NormRecord, NormTrace, Termination

log = logging.getLogger(__name__)

CG_RTOL = 1e-10
DEFAULT_BLOWUP_THRESHOLD = 1e9


class SolverError(RuntimeError):
    """A step could not be completed (linear solve, CFL, fixed point)."""


class DiffusionSolveError(SolverError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"implicit diffusion solve did not converge: relative residual {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


class CflViolation(SolverError):
    def __init__(self, dt: float, admissible_dt: float):
        super().__init__(f"dt={dt!r} violates the taxis CFL bound; admissible dt <= {admissible_dt!r}")
        self.dt = dt
        self.admissible_dt = admissible_dt


class BlowUp(Exception):
    """Raised when a state turns non-finite or exceeds the sup-norm cap."""

    def __init__(self, t: float, state, sup: float):
        super().__init__(f"blow-up at t={t!r}: sup norm {sup!r}")
        self.t = t
        self.state = state
        self.sup = sup


@dataclass(frozen=True)
class State:
    """Predator density ``u`` and prey density ``v`` at time ``t``."""

    u: np.ndarray
    v: np.ndarray
    t: float
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "u", self.grid.check(self.u))
        object.__setattr__(self, "v", self.grid.check(self.v))
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def homogeneous(cls, grid: Grid, u: float, v: float, t: float = 0.0) -> "State":
        return cls(grid.full(u), grid.full(v), t, grid)

    def replace(self, **changes) -> "State":
        return dataclasses.replace(self, **changes)

    @property
    def sup(self) -> float:
        with np.errstate(invalid="ignore"):
            return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))


@dataclass(frozen=True)
class StepControl:
    dt: float
    max_time: float
    cfl_safety: float = 0.5
    blowup_threshold: Optional[float] = None
    record_stride: int = 1
    max_substeps: int = 1024

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.max_time) and self.max_time >= 0):
            raise ValueError(f"max_time must be >= 0, got {self.max_time!r}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety!r}")
        if self.blowup_threshold is not None and not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if self.record_stride < 1 or self.max_substeps < 1:
            raise ValueError("record_stride and max_substeps must be >= 1")


Observer = Callable[[State], None]


def resolve_blowup_threshold(ctl: StepControl, dc: Optional[DerivedConstants] = None) -> float:
    if ctl.blowup_threshold is not None:
        return ctl.blowup_threshold
    if dc is not None:
        return 1e6 * max(dc.sigma**2, dc.sigma)
    return DEFAULT_BLOWUP_THRESHOLD


def time_levels(t0: float, max_time: float, dt: float) -> np.ndarray:
    """t0, t0 + dt, ..., t0 + max_time; the last interval may be shorter."""
    n = max(0, math.ceil(max_time / dt - 1e-9))
    levels = t0 + np.minimum(np.arange(n + 1) * dt, max_time)
    if n:
        levels[-1] = t0 + max_time
    return levels


@lru_cache(maxsize=64)
def _banded_operator(grid: Grid, k: float) -> np.ndarray:
    n = grid.cells[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = -k
    ab[2, :-1] = -k
    ab[1, :] = 1.0 + 2.0 * k
    ab[1, 0] = ab[1, -1] = 1.0 + k
    return ab


def _neumann_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


@lru_cache(maxsize=64)
def _sparse_operator(grid: Grid, coef: float) -> sp.csr_matrix:
    (nx, ny), (hx, hy) = grid.cells, grid.spacing
    lap = sp.kron(_neumann_1d(nx, hx), sp.identity(ny)) + sp.kron(sp.identity(nx), _neumann_1d(ny, hy))
    return (sp.identity(grid.size) - coef * lap).tocsr()


def solve_diffusion_implicit(f: np.ndarray, d: float, dt: float, grid: Grid) -> np.ndarray:
    """Solve (I - dt d Δ_h) g = f with the Neumann stencil.

    1D uses a banded direct solve.  2D uses conjugate gradients to a
    relative residual of 1e-10, capped at 10 iterations per cell.
    """
    if not (d > 0 and dt > 0):
        raise ValueError("diffusivity and dt must be positive")
    f = grid.check(f)
    if grid.dim == 1:
        ab = _banded_operator(grid, dt * d / grid.spacing[0] ** 2)
        return scipy.linalg.solve_banded((1, 1), ab, f, check_finite=False)
    A = _sparse_operator(grid, dt * d)
    b = f.ravel()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(f)
    maxiter = 10 * grid.size
    g, info = spla.cg(A, b, x0=b.copy(), rtol=CG_RTOL, atol=0.0, maxiter=maxiter)
    residual = float(np.linalg.norm(b - A @ g)) / bnorm
    if info != 0 or residual > CG_RTOL * 10:
        raise DiffusionSolveError(residual, maxiter if info > 0 else 0)
    return g.reshape(grid.shape)


def admissible_dt(s: State, p: ModelParams, cfl_safety: float) -> float:
    rate = max(taxis_rate(s.v, -p.chi, s.grid), taxis_rate(s.u, p.xi, s.grid))
    return math.inf if rate == 0.0 else cfl_safety / rate


def _check_blowup(state: State, threshold: float) -> State:
    sup = state.sup
    if not (state.finite and sup <= threshold):
        raise BlowUp(state.t, state, sup)
    return state


def step_imex(
    s: State,
    p: ModelParams,
    ctl: StepControl,
    dt: Optional[float] = None,
    dc: Optional[DerivedConstants] = None,
) -> State:
    """Advance one step of size ``dt`` (default ``ctl.dt``).

    Raises
    ------
    CflViolation
        If ``dt`` exceeds the donor-cell bound for the current state.
    BlowUp
        If the new state is non-finite or above the sup-norm cap.
    """
    dt = ctl.dt if dt is None else dt
    limit = admissible_dt(s, p, ctl.cfl_safety)
    if dt > limit * (1.0 + 1e-12):
        raise CflViolation(dt, limit)
    grid = s.grid
    u, v = s.u, s.v
    u1 = u + dt * div_flux_upwind(u, v, -p.chi, grid)
    v1 = v + dt * div_flux_upwind(v, u, p.xi, grid)
    u2 = u1 * (1.0 + dt * p.c1 * v1) / (1.0 + dt * (p.a1 + p.b1 * u1))
    v2 = v1 * (1.0 + dt * p.a2) / (1.0 + dt * (p.b2 * v1 + u1))
    new = State(
        solve_diffusion_implicit(u2, p.d1, dt, grid),
        solve_diffusion_implicit(v2, p.d2, dt, grid),
        s.t + dt,
        grid,
    )
    return _check_blowup(new, resolve_blowup_threshold(ctl, dc))


def _advance(s: State, p: ModelParams, ctl: StepControl, t_target: float, dc) -> State:
    """Reach ``t_target``, splitting the step into equal pieces on CFL rejection."""
    span = t_target - s.t
    pieces = 1
    while True:
        try:
            state = s
            for _ in range(pieces):
                state = step_imex(state, p, ctl, span / pieces, dc)
            return state.replace(t=t_target)
        except CflViolation as exc:
            needed = max(2 * pieces, math.ceil(span / exc.admissible_dt))
            if needed > ctl.max_substeps:
                raise SolverError(
                    f"CFL sub-cycling at t={s.t!r} needs {needed} pieces (cap {ctl.max_substeps}); "
                    f"admissible dt {exc.admissible_dt!r}"
                ) from exc
            log.debug("t=%r: CFL rejection, retrying with %d pieces", s.t, needed)
            pieces = needed


def run_imex(
    s0: State,
    p: ModelParams,
    ctl: StepControl,
    observers: Iterable[Observer] = (),
    dc: Optional[DerivedConstants] = None,
) -> NormTrace:
    """Integrate to ``s0.t + ctl.max_time`` and return the norm trace.

    Observers are called with every completed state; norms are recorded
    every ``ctl.record_stride`` steps and at the final step.  A step whose
    ``dt`` violates the CFL bound is retried as equal sub-steps, up to
    ``ctl.max_substeps`` pieces.
    """
    observers = tuple(observers)
    trace = NormTrace()
    levels = time_levels(s0.t, ctl.max_time, ctl.dt)
    n = len(levels) - 1
    state = s0
    for k in range(1, n + 1):
        try:
            state = _advance(state, p, ctl, float(levels[k]), dc)
        except BlowUp as exc:
            trace.append(NormRecord.measure(exc.state.u, exc.state.v, exc.t, s0.grid))
            trace.termination = Termination(BLOWUP, exc.t, str(exc))
            for obs in observers:
                obs(exc.state)
            return trace
        except SolverError as exc:
            trace.termination = Termination(SOLVER_FAILURE, state.t, str(exc))
            return trace
        for obs in observers:
            obs(state)
        if k % ctl.record_stride == 0 or k == n:
            trace.append(NormRecord.measure(state.u, state.v, state.t, s0.grid))
    trace.termination = Termination(time=state.t)
    return trace


def integrate_imex(s0: State, p: ModelParams, ctl: StepControl, dc=None) -> tuple[State, NormTrace]:
    """Convenience wrapper returning the terminal state alongside the trace."""
    last = [s0]

    def keep(state: State) -> None:
        last[0] = state

    trace = run_imex(s0, p, ctl, observers=[keep], dc=dc)
    return last[0], trace
