import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pursuit_evasion.model import (
    DerivationError,
    InitialDataNorms,
    ModelParams,
    check_taxis_admissible,
    coexistence_equilibrium,
    derive_constants,
    reaction_u,
    reaction_v,
)

pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
nonneg = st.floats(min_value=0.0, max_value=1e3, allow_nan=False)


@st.composite
def params(draw):
    return ModelParams(
        d1=draw(pos), d2=draw(pos), chi=draw(nonneg), xi=draw(nonneg),
        a1=draw(nonneg), b1=draw(pos), a2=draw(nonneg), b2=draw(pos), c1=draw(nonneg),
    )


def base_params(**kw):
    values = dict(d1=1.0, d2=1.0, chi=0.0, xi=0.0, a1=0.5, b1=1.0, a2=1.0, b2=1.0, c1=1.0)
    values.update(kw)
    return ModelParams(**values)


def test_derive_constants_first_example():
    dc = derive_constants(base_params(), InitialDataNorms(1.0, 1.0))
    assert dc.rho == 1.0
    assert dc.sigma == 3.0
    assert dc.r_upper == pytest.approx(0.1, rel=1e-15)
    assert dc.xi_max == pytest.approx(0.1 / 3, rel=1e-15)
    assert dc.chi_max == pytest.approx(0.1, rel=1e-15)
    assert (dc.h1, dc.h2, dc.h3, dc.h4) == (24.0, 6.0, 39.0, 12.0)
    assert dc.schauder_p is None


def test_derive_constants_second_example():
    p = ModelParams(d1=2, d2=1, chi=0, xi=0, a1=1, b1=3, a2=2, b2=1, c1=1)
    dc = derive_constants(p, InitialDataNorms(4.0, 1.0))
    assert dc.rho == 1.0
    assert dc.sigma == 6.0
    assert dc.r_upper == pytest.approx(3 / 222, rel=1e-14)


def test_sigma_uses_square_root_of_u_norm():
    dc = derive_constants(base_params(a2=0, c1=0), InitialDataNorms(100.0, 0.0))
    assert dc.sigma == 10.0


def test_overflow_names_the_field():
    p = base_params(a2=1e300, b2=1e-10)
    with pytest.raises(DerivationError) as info:
        derive_constants(p, InitialDataNorms(1.0, 1.0))
    assert info.value.field in ("sigma", "h1", "h3", "r_upper")


def test_schauder_placeholder_is_carried_only():
    a = derive_constants(base_params(), InitialDataNorms(1.0, 1.0))
    b = derive_constants(base_params(), InitialDataNorms(1.0, 1.0), schauder_p=7.0)
    assert b.schauder_p == 7.0
    assert a.as_dict() | {"schauder_p": 7.0} == b.as_dict()
    with pytest.raises(ValueError):
        derive_constants(base_params(), InitialDataNorms(1.0, 1.0), schauder_p=-1.0)


@pytest.mark.parametrize("name", ["d1", "d2", "b1", "b2"])
def test_strictly_positive_coefficients(name):
    with pytest.raises(ValueError, match=name):
        base_params(**{name: 0.0})


@pytest.mark.parametrize("name", ["chi", "xi", "a1", "a2", "c1"])
def test_nonnegative_coefficients(name):
    base_params(**{name: 0.0})
    with pytest.raises(ValueError, match=name):
        base_params(**{name: -1e-9})


def test_initial_norms_validation():
    with pytest.raises(ValueError):
        InitialDataNorms(1.0, 1.0, alpha=1.0)
    with pytest.raises(ValueError):
        InitialDataNorms(-1.0, 1.0)


def test_reaction_examples():
    p = base_params(a1=1, b1=1, c1=2, a2=3, b2=1)
    assert reaction_u(0.0, 7.0, p) == 0.0
    assert reaction_v(7.0, 0.0, p) == 0.0
    assert abs(reaction_u(5 / 3, 4 / 3, p)) < 1e-15
    assert abs(reaction_v(5 / 3, 4 / 3, p)) < 1e-15
    assert reaction_u(1.0, 1.0, base_params(a1=1, b1=1, c1=1)) == -1.0
    assert reaction_v(0.0, 1.0, base_params(a2=1, b2=1)) == 0.0


def test_equilibrium_examples():
    us, vs = coexistence_equilibrium(base_params(a1=1, b1=1, a2=3, b2=1, c1=2))
    assert us == pytest.approx(5 / 3, rel=1e-15) and vs == pytest.approx(4 / 3, rel=1e-15)
    assert coexistence_equilibrium(base_params(a1=10, b1=1, a2=1, b2=1, c1=1)) is None
    assert coexistence_equilibrium(base_params(a1=0, b1=1, a2=2, b2=1, c1=1)) == pytest.approx((1.0, 1.0))
    assert coexistence_equilibrium(base_params(c1=0)) is None


def test_admissibility_examples():
    dc = derive_constants(base_params(), InitialDataNorms(1.0, 1.0))
    rep = check_taxis_admissible(base_params(chi=0.05, xi=0.01), dc)
    assert rep.chi_ok and rep.xi_ok and rep.admissible
    rep = check_taxis_admissible(base_params(chi=0.2, xi=0.01), dc)
    assert not rep.chi_ok and rep.chi_margin == pytest.approx(-0.1)
    rep = check_taxis_admissible(base_params(), dc)
    assert not rep.chi_ok and not rep.xi_ok
    assert rep.label == "upper-bound admissibility"
    # the thresholds themselves are admissible
    assert check_taxis_admissible(base_params(chi=dc.chi_max, xi=dc.xi_max), dc).admissible


@given(params(), nonneg, nonneg)
def test_constant_invariants(p, nu, nv):
    dc = derive_constants(p, InitialDataNorms(nu, nv))
    args = (p.d1, p.d2, p.b1, p.b2, p.a1, 3 * p.a2 / dc.rho, 3 * p.c1 / dc.rho, math.sqrt(nu), nv)
    assert dc.rho == min(p.d1, p.d2, p.b1, p.b2)
    assert all(dc.sigma >= a for a in args)
    assert dc.rho <= dc.sigma
    s = dc.sigma
    assert abs((dc.h1 - dc.h2) - 2 * s * s) <= 4 * np.spacing(dc.h1)
    assert abs((dc.h3 - dc.h4) - s**3) <= 4 * np.spacing(dc.h3)
    assert dc.r_upper > 0
    assert dc.chi_max == pytest.approx(dc.sigma * dc.xi_max, rel=1e-15)


@given(params(), nonneg, nonneg, st.sampled_from(["a2", "c1", "nu", "nv"]), st.floats(0.0, 100.0))
def test_sigma_monotone(p, nu, nv, which, bump):
    dc = derive_constants(p, InitialDataNorms(nu, nv))
    if which in ("nu", "nv"):
        n2 = InitialDataNorms(nu + bump * (which == "nu"), nv + bump * (which == "nv"))
        dc2 = derive_constants(p, n2)
    else:
        dc2 = derive_constants(p.replace(**{which: getattr(p, which) + bump}), InitialDataNorms(nu, nv))
    assert dc2.sigma >= dc.sigma
    assert dc2.r_upper <= dc.r_upper


moderate = st.floats(min_value=1e-2, max_value=10.0)


@given(moderate, moderate, moderate, moderate, moderate)
def test_equilibrium_residual_literal_tolerance(a1, b1, a2, b2, c1):
    p = base_params(a1=a1, b1=b1, a2=a2, b2=b2, c1=c1)
    eq = coexistence_equilibrium(p)
    if eq is None:
        return
    tol = 1e-12 * (1 + abs(eq[0]) + abs(eq[1]))
    assert abs(reaction_u(*eq, p)) <= tol
    assert abs(reaction_v(*eq, p)) <= tol


@given(params())
def test_equilibrium_is_a_zero(p):
    # coefficients up to 1e3: round-off scales with the size of the cancelling terms
    eq = coexistence_equilibrium(p)
    if eq is None:
        assert p.c1 == 0 or p.c1 * p.a2 <= p.a1 * p.b2
        return
    us, vs = eq
    assert us > 0 and vs > 0
    tol = 1e-12 * (1 + abs(us) + abs(vs))
    scale = max(1.0, p.b1 * us + p.c1 * vs + p.a1, p.b2 * vs + us + p.a2)
    assert abs(reaction_u(us, vs, p)) <= tol * scale * max(us, 1.0)
    assert abs(reaction_v(us, vs, p)) <= tol * scale * max(vs, 1.0)


@given(params(), st.floats(0, 10), st.floats(0, 10), st.floats(1e-3, 10))
def test_reaction_scaling_identity(p, uh, vh, r):
    sig = 3.0
    k = sig / r
    lhs = reaction_u(k * uh, k * vh, p)
    rhs = k * (uh * (-p.a1 + (sig * p.c1 / r) * vh - (sig * p.b1 / r) * uh))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * k * (1 + abs(lhs)))
