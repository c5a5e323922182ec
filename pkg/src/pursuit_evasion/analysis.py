"""Checkable inequalities: super-solution residuals, a priori bounds,
twin-run energy separation and grid-convergence estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import (
    Grid,
    c2_norm_proxy,
    face_gradient,
    laplacian_neumann,
    _with_zero_ends,
)
from .imex import State, StepControl, run_imex, step_imex
from .model import DerivedConstants, ModelParams, reaction_u, reaction_v
from .picard import (
    PicardControl,
    picard_control_from,
    picard_slab,
    run_picard,
    scale_from_hat,
    scale_to_hat,
)
from .trace import BLOWUP, COMPLETED, NormTrace

NEGATIVITY_TOL = 1e-12


def supersolution_residual_v(u: np.ndarray, grid: Grid, p: ModelParams, dc: DerivedConstants) -> np.ndarray:
    """Residual of the constant prey super-solution ``R`` for a frozen predator ``u``.

    r = ((σξ/R) Δu + a2 - (σ/R) u - σ b2) R, with ``u`` in hat variables.
    Non-positive whenever ξ <= R/3, 0 <= u <= σR and |Δu| <= ρ.
    """
    R, sig = dc.r_upper, dc.sigma
    return ((sig * p.xi / R) * laplacian_neumann(u, grid) + p.a2 - (sig / R) * u - sig * p.b2) * R


def supersolution_residual_u(v: np.ndarray, grid: Grid, p: ModelParams, dc: DerivedConstants) -> np.ndarray:
    """Residual of the constant predator super-solution ``σR`` for a frozen prey ``v``.

    r = (-(σχ/R) Δv - a1 + (σ c1/R) v - σ² b1) σR.
    """
    R, sig = dc.r_upper, dc.sigma
    lap = laplacian_neumann(v, grid)
    return (-(sig * p.chi / R) * lap - p.a1 + (sig * p.c1 / R) * v - sig**2 * p.b1) * sig * R


def random_admissible_field(
    grid: Grid,
    rng: np.random.Generator,
    sup_cap: float,
    c2_cap: float,
    modes: int = 5,
) -> np.ndarray:
    """Random non-negative cosine series with sup <= sup_cap and C² proxy <= c2_cap.

    Cosine modes satisfy the Neumann condition, so the scaling is not
    dominated by boundary artefacts.
    """
    ks = np.arange(modes)
    if grid.dim == 1:
        (x,) = grid.coords
        amp = rng.standard_normal(modes) / (1.0 + ks**2)
        g = sum(a * np.cos(k * np.pi * x / grid.extents[0]) for k, a in zip(ks, amp))
    else:
        x, y = grid.coords
        amp = rng.standard_normal((modes, modes)) / (1.0 + ks[:, None] ** 2 + ks[None, :] ** 2)
        g = sum(
            amp[k, l] * np.cos(k * np.pi * x / grid.extents[0]) * np.cos(l * np.pi * y / grid.extents[1])
            for k in ks
            for l in ks
        )
    g = g - g.min()
    g = g + rng.uniform(0.0, 1.0) * max(float(g.max()), 1.0)
    scale = min(sup_cap / float(g.max()), c2_cap / c2_norm_proxy(g, grid))
    return g * scale * rng.uniform(0.05, 1.0)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    bound: float
    observed: float
    first_violation: Optional[float]
    enforced: bool = True

    @property
    def violated(self) -> bool:
        return self.first_violation is not None


@dataclass(frozen=True)
class BoundReport:
    checks: tuple[BoundCheck, ...]
    verdict: str
    termination: str = COMPLETED

    def format(self) -> str:
        lines = [f"verdict: {self.verdict}", f"termination: {self.termination}"]
        for c in self.checks:
            tag = "" if c.enforced else " (reported only)"
            when = "none" if c.first_violation is None else repr(c.first_violation)
            lines.append(f"{c.name}: bound={c.bound!r} observed={c.observed!r} first_violation={when}{tag}")
        return "\n".join(lines) + "\n"


def _first_time(times: np.ndarray, bad: np.ndarray) -> Optional[float]:
    idx = np.flatnonzero(bad)
    return float(times[idx[0]]) if idx.size else None


def bound_monitor(
    trace: NormTrace,
    dc: DerivedConstants,
    slack: float = 0.05,
    c2_horizon: Optional[float] = None,
) -> BoundReport:
    """Check 0 <= u <= σ² and 0 <= v <= σ along a trace (with relative slack).

    The C² proxy sum is compared with ``c2_horizon`` when given, but only
    reported: the uniform constant of the global bound is not computable.
    """
    t = trace.column("t")
    checks = []
    with np.errstate(invalid="ignore"):
        for name, col in (("min_u >= 0", "min_u"), ("min_v >= 0", "min_v")):
            vals = trace.column(col)
            checks.append(
                BoundCheck(
                    name,
                    -NEGATIVITY_TOL,
                    float(np.min(vals)) if vals.size else 0.0,
                    _first_time(t, ~(vals >= -NEGATIVITY_TOL)),
                )
            )
        for name, col, bound in (
            ("sup_u <= sigma^2", "sup_u", dc.sigma**2 * (1.0 + slack)),
            ("sup_v <= sigma", "sup_v", dc.sigma * (1.0 + slack)),
        ):
            vals = trace.column(col)
            checks.append(
                BoundCheck(name, bound, float(np.max(vals)) if vals.size else 0.0, _first_time(t, ~(vals <= bound)))
            )
        c2 = trace.column("c2proxy_u") + trace.column("c2proxy_v")
        horizon = math.inf if c2_horizon is None else c2_horizon
        checks.append(
            BoundCheck(
                "c2proxy_u + c2proxy_v <= C",
                horizon,
                float(np.max(c2)) if c2.size else 0.0,
                _first_time(t, ~(c2 <= horizon)),
                enforced=False,
            )
        )
    reason = trace.termination.reason
    if reason == BLOWUP:
        verdict = "blowup"
    elif any(c.violated for c in checks if c.enforced):
        verdict = "violated"
    else:
        verdict = "pass"
    return BoundReport(tuple(checks), verdict, reason)


def energy_distance(s1: State, s2: State) -> float:
    """Volume-weighted ∫ (u1 - u2)² + (v1 - v2)²."""
    if s1.grid != s2.grid:
        raise ValueError("states live on different grids")
    du = s1.u - s2.u
    dv = s1.v - s2.v
    return float(np.sum(du * du + dv * dv)) * s1.grid.cell_volume


def fit_growth_rate(times: Sequence[float], energies: Sequence[float]) -> float:
    """Least-squares λ in log E(t) = log E(t0) + λ (t - t0)."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    if t.size < 2 or np.any(e <= 0):
        raise ValueError("need at least two strictly positive energies")
    dt = t[1:] - t[0]
    y = np.log(e[1:]) - np.log(e[0])
    return float(np.dot(dt, y) / np.dot(dt, dt))


def log_energy_curvature(times: Sequence[float], energies: Sequence[float]) -> float:
    """Largest second difference of log E over one sample, per unit time.

    Positive values mean the separation rate is speeding up; an exponential
    gives zero.  Returns 0 when there are fewer than three samples.
    """
    t = np.asarray(times, dtype=float)
    y = np.log(np.asarray(energies, dtype=float))
    if t.size < 3:
        return 0.0
    slopes = np.diff(y) / np.diff(t)
    return float(np.max(np.diff(slopes)))


@dataclass
class GrowthReport:
    delta: float
    times: np.ndarray
    energies: np.ndarray
    identical: bool
    lambda_hat: Optional[float] = None
    gronwall_rate: Optional[float] = None
    envelope_ok: Optional[bool] = None
    curvature: Optional[float] = None
    superexponential: Optional[bool] = None
    samples_used: int = 0
    noise_floor: float = 0.0
    inconclusive: bool = False
    reason: str = ""
    absorption: Optional[float] = None
    absorption_bound: Optional[float] = None
    notes: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "delta": self.delta,
            "identical": self.identical,
            "lambda_hat": self.lambda_hat,
            "gronwall_rate": self.gronwall_rate,
            "envelope_ok": self.envelope_ok,
            "curvature": self.curvature,
            "superexponential": self.superexponential,
            "samples_used": self.samples_used,
            "noise_floor": self.noise_floor,
            "inconclusive": self.inconclusive,
            "reason": self.reason,
            "absorption": self.absorption,
            "absorption_bound": self.absorption_bound,
        }


def analyse_energy(
    times: Sequence[float],
    energies: Sequence[float],
    delta: float = math.nan,
    noise_floor: float = 0.0,
    curvature_tol: float = 1e-3,
    envelope_factor: float = 1.1,
) -> GrowthReport:
    """Fit the separation rate of an energy history and test its shape.

    Only the leading run of samples above ``noise_floor`` is analysed; once
    the twins agree to round-off the logarithm carries no information.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    report = GrowthReport(delta, t, e, identical=bool(np.all(e == 0.0)), noise_floor=noise_floor)
    if report.identical:
        report.notes.append("zero separation: growth rate undefined")
        return report
    above = e > noise_floor
    n = int(np.argmin(above)) if not above.all() else e.size
    if n < 2:
        report.inconclusive = True
        report.reason = "fewer than two samples above the noise floor"
        return report
    t, e = t[:n], e[:n]
    report.samples_used = n
    report.lambda_hat = fit_growth_rate(t, e)
    span = t[1:] - t[0]
    report.gronwall_rate = float(np.max(np.log(e[1:] / e[0]) / span))
    envelope = e[0] * np.exp(report.lambda_hat * (t - t[0])) * envelope_factor
    report.envelope_ok = bool(np.all(e <= envelope))
    report.curvature = log_energy_curvature(t, e)
    report.superexponential = bool(report.curvature > curvature_tol)
    return report


def absorption_coefficients(
    p: ModelParams, sup_u: float, sup_v: float, dc: Optional[DerivedConstants] = None
) -> tuple[float, Optional[float]]:
    """Gradient coefficient of the twin energy estimate.

    Young's inequality on the cross-taxis terms leaves
    ``-ρ/2 + χ sup u / 2 + ξ sup v / 2`` in front of ∫|∇w|² + |∇z|².
    The first value uses the sups the discrete run attains, the second the
    a priori bounds u <= σ², v <= σ (``None`` without ``dc``).  Both are
    informational: the discrete energy identity differs from the
    continuous one by O(dx).
    """
    rho = min(p.d1, p.d2, p.b1, p.b2)
    observed = -rho / 2 + (p.chi * sup_u + p.xi * sup_v) / 2
    if dc is None:
        return observed, None
    return observed, -rho / 2 + (p.chi * dc.sigma**2 + p.xi * dc.sigma) / 2


def smooth_perturbation(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Non-negative Neumann-compatible direction 1 + cos(π x / L) in both species."""
    e = 1.0 + np.cos(np.pi * grid.coords[0] / grid.extents[0])
    return e, e.copy()


def _one_step(solver: str, p: ModelParams, ctl: StepControl, dc: Optional[DerivedConstants]):
    if solver == "imex":
        return lambda s: step_imex(s, p, ctl, dc=dc)
    pctl = ctl if isinstance(ctl, PicardControl) else picard_control_from(ctl)

    def step(s: State) -> State:
        times = np.array([s.t, s.t + pctl.dt])
        return scale_from_hat(picard_slab(scale_to_hat(s, dc), p, dc, pctl, times).state, dc)

    return step


def dominant_mode_direction(
    base: State,
    p: ModelParams,
    ctl: StepControl,
    solver: str = "imex",
    dc: Optional[DerivedConstants] = None,
    mode: int = 1,
    eps: float = 1e-7,
) -> tuple[np.ndarray, np.ndarray]:
    """Slowest-decaying direction of the linearised one-step map on cos(mode π x / L).

    ``base`` must be spatially homogeneous, so the step map leaves the
    two-dimensional space spanned by the cosine mode in ``u`` and in ``v``
    invariant to first order.  The 2x2 restriction is estimated by finite
    differences; a separation started along its dominant eigenvector grows
    or decays as a single exponential.

    Raises
    ------
    ValueError
        If ``base`` is not homogeneous or the dominant eigenvalues are complex.
    """
    if np.ptp(base.u) != 0 or np.ptp(base.v) != 0:
        raise ValueError("base state must be spatially homogeneous")
    step = _one_step(solver, p, ctl, dc)
    phi = np.cos(mode * np.pi * base.grid.coords[0] / base.grid.extents[0])
    ref = step(base)
    h = eps * max(float(base.u.flat[0]), float(base.v.flat[0]), 1.0)
    cols = []
    for du, dv in ((phi, 0.0 * phi), (0.0 * phi, phi)):
        moved = step(base.replace(u=base.u + h * du, v=base.v + h * dv))
        cols.append([np.vdot(moved.u - ref.u, phi) / np.vdot(phi, phi) / h,
                     np.vdot(moved.v - ref.v, phi) / np.vdot(phi, phi) / h])
    M = np.array(cols).T
    vals, vecs = np.linalg.eig(M)
    i = int(np.argmax(np.abs(vals)))
    if abs(vals[i].imag) > 1e-12 * abs(vals[i]):
        raise ValueError(f"dominant eigenvalues of mode {mode} are complex: {vals}")
    w = np.real(vecs[:, i])
    w = w / np.max(np.abs(w))
    return w[0] * phi, w[1] * phi


def gronwall_twin_test(
    s0: State,
    delta: float,
    p: ModelParams,
    ctl: StepControl,
    solver: str = "imex",
    dc: Optional[DerivedConstants] = None,
    curvature_tol: float = 1e-3,
    direction: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> GrowthReport:
    """Run the solver from ``s0`` and from ``s0 + delta * direction`` and compare.

    ``direction`` defaults to :func:`smooth_perturbation`.  E(t) is sampled
    every ``ctl.record_stride`` steps.  With ``delta = 0`` the twins must
    agree bit for bit.  Samples whose separation amplitude is within about
    1e6 ulp of the state scale are dropped before the fit.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if solver not in ("imex", "picard"):
        raise ValueError(f"unknown solver {solver!r}")
    if solver == "picard" and dc is None:
        raise ValueError("the picard solver needs derived constants")
    eu, ev = smooth_perturbation(s0.grid) if direction is None else direction
    twin0 = State(s0.u + delta * eu, s0.v + delta * ev, s0.t, s0.grid)

    def run(start: State, observer) -> NormTrace:
        if solver == "imex":
            return run_imex(start, p, ctl, [observer], dc=dc)
        pctl = ctl if isinstance(ctl, PicardControl) else picard_control_from(ctl)
        return run_picard(start, p, dc, pctl, [observer])

    base: list[State] = []
    step = [0]

    def keep(state: State) -> None:
        step[0] += 1
        if step[0] % ctl.record_stride == 0:
            base.append(state)

    trace_a = run(s0, keep)
    times = [s0.t]
    energies = [energy_distance(s0, twin0)]
    step[0] = 0

    def compare(state: State) -> None:
        step[0] += 1
        if step[0] % ctl.record_stride == 0 and len(times) <= len(base):
            ref = base[len(times) - 1]
            times.append(state.t)
            energies.append(energy_distance(ref, state))

    trace_b = run(twin0, compare)
    scale = max(float(np.max(np.abs(s0.u))), float(np.max(np.abs(s0.v))), 1.0)
    floor = (1e6 * np.finfo(float).eps * scale) ** 2 * s0.grid.volume
    if trace_a.termination.reason != COMPLETED or trace_b.termination.reason != COMPLETED:
        report = GrowthReport(delta, np.array(times), np.array(energies), identical=False, noise_floor=floor)
        report.inconclusive = True
        report.reason = f"twin runs ended with {trace_a.termination.reason}/{trace_b.termination.reason}"
        return report
    report = analyse_energy(times, energies, delta, noise_floor=floor, curvature_tol=curvature_tol)
    sup_u = max(float(np.max(s0.u)), float(np.max(trace_a.column("sup_u"), initial=0.0)))
    sup_v = max(float(np.max(s0.v)), float(np.max(trace_a.column("sup_v"), initial=0.0)))
    report.absorption, report.absorption_bound = absorption_coefficients(p, sup_u, sup_v, dc)
    return report


def convergence_order(errors: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(error) against log(h)."""
    if len(errors) < 3:
        raise ValueError("need at least three (h, error) pairs")
    h = np.array([e[0] for e in errors], dtype=float)
    err = np.array([e[1] for e in errors], dtype=float)
    if np.any(err <= 0) or np.any(h <= 0):
        raise ValueError("step sizes and errors must be positive")
    ratios = h[:-1] / h[1:]
    if np.any(ratios <= 1) or not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise ValueError("h must decrease by a constant factor")
    slope, _ = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope)


def _div_flux_centered(carrier: np.ndarray, potential: np.ndarray, coeff: float, grid: Grid) -> np.ndarray:
    out = np.zeros_like(carrier)
    for axis, h in enumerate(grid.spacing):
        avg = 0.5 * (np.delete(carrier, -1, axis=axis) + np.delete(carrier, 0, axis=axis))
        flux = _with_zero_ends(coeff * face_gradient(potential, grid, axis) * avg, axis)
        out += np.diff(flux, axis=axis) / h
    return out


def pde_residual(prev: State, new: State, p: ModelParams) -> float:
    """Sup of the time-centred, second-order-in-space residual of the PDE system.

    Evaluated on two consecutive discrete states; for a consistent first
    order scheme it decays like O(dt + dx).
    """
    grid = prev.grid
    dt = new.t - prev.t
    u = 0.5 * (prev.u + new.u)
    v = 0.5 * (prev.v + new.v)
    ru = (new.u - prev.u) / dt - (
        p.d1 * laplacian_neumann(u, grid) + _div_flux_centered(u, v, -p.chi, grid) + reaction_u(u, v, p)
    )
    rv = (new.v - prev.v) / dt - (
        p.d2 * laplacian_neumann(v, grid) + _div_flux_centered(v, u, p.xi, grid) + reaction_v(u, v, p)
    )
    return float(max(np.max(np.abs(ru)), np.max(np.abs(rv))))
