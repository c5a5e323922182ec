"""Model coefficients, reaction kinetics and derived constants.

The simulated system is the diffusive predator-prey model with prey-taxis
and predator-taxis (pursuit-evasion),

    u_t = d1 Δu - χ ∇·(u ∇v) + u (-a1 - b1 u + c1 v)
    v_t = d2 Δv + ξ ∇·(v ∇u) + v (a2 - b2 v - u)

with homogeneous Neumann data, where ``u`` is the predator and ``v`` the
prey density.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np


class DerivationError(ArithmeticError):
    """A derived constant came out non-finite or non-positive."""

    def __init__(self, field: str, value: float):
        super().__init__(f"derived constant {field!r} is not usable: {value!r}")
        self.field = field
        self.value = value


@dataclass(frozen=True)
class ModelParams:
    """The nine coefficients of the reaction-taxis-diffusion system.

    ``chi`` and ``xi`` may be zero (taxis-free runs) or arbitrarily large
    (blow-up exploration); their admissibility is reported separately by
    :func:`check_taxis_admissible`.
    """

    d1: float
    d2: float
    chi: float
    xi: float
    a1: float
    b1: float
    a2: float
    b2: float
    c1: float

    POSITIVE = ("d1", "d2", "b1", "b2")
    NON_NEGATIVE = ("chi", "xi", "a1", "a2", "c1")

    def __post_init__(self):
        for name in self.POSITIVE + self.NON_NEGATIVE:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        for name in self.POSITIVE:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in self.NON_NEGATIVE:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)!r}")

    def replace(self, **changes) -> "ModelParams":
        values = asdict(self)
        values.update(changes)
        return ModelParams(**values)


@dataclass(frozen=True)
class InitialDataNorms:
    """User-supplied bounds for the C^{2+alpha} norms of the initial data."""

    norm_u0_c2alpha: float
    norm_v0_c2alpha: float
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        for name in ("norm_u0_c2alpha", "norm_v0_c2alpha"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")


@dataclass(frozen=True)
class DerivedConstants:
    """Constants entering the smallness conditions on the taxis coefficients.

    ``r_upper`` is only the first (computable) branch of the minimum that
    defines the true smallness radius, so it is an upper bound for it.
    ``schauder_p`` is an opaque placeholder: it is carried for reporting and
    never used to gate a simulation.
    """

    rho: float
    sigma: float
    h1: float
    h2: float
    h3: float
    h4: float
    r_upper: float
    chi_max: float
    xi_max: float
    schauder_p: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AdmissibilityReport:
    chi_ok: bool
    xi_ok: bool
    chi_margin: float
    xi_margin: float
    label: str = "upper-bound admissibility"

    @property
    def admissible(self) -> bool:
        return self.chi_ok and self.xi_ok

    def as_dict(self) -> dict:
        return asdict(self)


def derive_constants(
    p: ModelParams, n: InitialDataNorms, schauder_p: Optional[float] = None
) -> DerivedConstants:
    """Evaluate rho, sigma, h1..h4 and the computable smallness thresholds.

    Raises
    ------
    DerivationError
        If any derived quantity overflows, or ``r_upper`` underflows to zero.
    """
    if schauder_p is not None and not (math.isfinite(schauder_p) and schauder_p > 0):
        raise ValueError(f"schauder_p must be a positive finite number, got {schauder_p!r}")
    rho = min(p.d1, p.d2, p.b1, p.b2)
    sigma = max(
        p.d1,
        p.d2,
        p.b1,
        p.b2,
        p.a1,
        3.0 * p.a2 / rho,
        3.0 * p.c1 / rho,
        math.sqrt(n.norm_u0_c2alpha),
        n.norm_v0_c2alpha,
    )
    with np.errstate(over="ignore"):
        s = np.float64(sigma)
        values = {
            "rho": rho,
            "sigma": sigma,
            "h1": float(s * (1.0 + rho + 2.0 * s)),
            "h2": float(s * (1.0 + rho)),
            "h3": float(s * (1.0 + rho * s + s * s)),
            "h4": float(s * (1.0 + rho * s)),
        }
        r_upper = float(3.0 * rho / (s + s**3))
    values["r_upper"] = r_upper
    values["xi_max"] = r_upper / 3.0
    values["chi_max"] = sigma * r_upper / 3.0
    for name, value in values.items():
        if not math.isfinite(value):
            raise DerivationError(name, value)
    for name in ("r_upper", "xi_max", "chi_max"):
        if values[name] <= 0:
            raise DerivationError(name, values[name])
    return DerivedConstants(schauder_p=schauder_p, **values)


def reaction_u(u, v, p: ModelParams):
    """Predator kinetics u(-a1 - b1 u + c1 v)."""
    return u * (-p.a1 - p.b1 * u + p.c1 * v)


def reaction_v(u, v, p: ModelParams):
    """Prey kinetics v(a2 - b2 v - u)."""
    return v * (p.a2 - p.b2 * v - u)


def coexistence_equilibrium(p: ModelParams) -> Optional[tuple[float, float]]:
    """Return the positive homogeneous steady state, or None if there is none."""
    if p.c1 == 0 or p.c1 * p.a2 <= p.a1 * p.b2:
        return None
    u_star = (p.c1 * p.a2 - p.a1 * p.b2) / (p.c1 + p.b1 * p.b2)
    v_star = (p.a1 + p.b1 * u_star) / p.c1
    return u_star, v_star


def check_taxis_admissible(p: ModelParams, dc: DerivedConstants) -> AdmissibilityReport:
    """Compare chi and xi against the thresholds built from ``r_upper``.

    Because ``r_upper`` overestimates the true radius, a passing flag does
    not certify the hypotheses of the global existence result; a failing flag does
    rule them out.
    """
    return AdmissibilityReport(
        chi_ok=bool(0.0 < p.chi <= dc.chi_max),
        xi_ok=bool(0.0 < p.xi <= dc.xi_max),
        chi_margin=dc.chi_max - p.chi,
        xi_margin=dc.xi_max - p.xi,
    )
