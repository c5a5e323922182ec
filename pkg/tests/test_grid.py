import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pursuit_evasion.analysis import convergence_order
from pursuit_evasion.grid import (
    Grid,
    c2_norm_proxy,
    div_flux_upwind,
    gradient_neumann,
    holder_product_check,
    holder_seminorm_proxy,
    l2_norm,
    laplacian_neumann,
    min_value,
    sup_norm,
    taxis_rate,
)

GRIDS = [Grid.interval(1.0, 17), Grid.interval(2.5, 40), Grid.rectangle(1.0, 2.0, 9, 12)]
finite = st.floats(-10, 10, allow_nan=False)
scalar = st.floats(-10, 10).filter(lambda a: a == 0 or abs(a) > 1e-100)


def fields(grid):
    return arrays(np.float64, grid.shape, elements=finite)


def smooth_field(grid, rng, modes=4):
    f = np.zeros(grid.shape)
    for _ in range(modes):
        term = rng.normal()
        for axis in range(grid.dim):
            k = rng.integers(0, 4)
            term = term * np.cos(k * np.pi * grid.coords[axis] / grid.extents[axis])
        f = f + term
    return f


def test_grid_basics():
    g = Grid.rectangle(1.0, 3.0, 4, 6)
    assert g.dim == 2 and g.shape == (4, 6) and g.size == 24
    assert g.spacing == (0.25, 0.5)
    assert g.cell_volume == 0.125 and g.volume == 3.0
    assert np.allclose(g.centers(0), [0.125, 0.375, 0.625, 0.875])
    with pytest.raises(ValueError):
        Grid.interval(1.0, 2)
    with pytest.raises(ValueError):
        Grid.interval(-1.0, 8)
    with pytest.raises(ValueError):
        g.check(np.zeros(5))


@pytest.mark.parametrize("grid", GRIDS)
def test_operators_kill_constants(grid):
    c = grid.full(3.7)
    assert np.all(laplacian_neumann(c, grid) == 0)
    assert np.all(gradient_neumann(c, grid) == 0)
    assert np.all(div_flux_upwind(grid.full(2.0), c, 1.3, grid) == 0)
    assert np.all(div_flux_upwind(grid.zeros(), grid.coords[0], 1.3, grid) == 0)


def laplacian_error(n):
    g = Grid.interval(1.0, n)
    x = g.centers()
    f = np.cos(np.pi * x)
    return float(np.max(np.abs(laplacian_neumann(f, g) + np.pi**2 * f)))


def test_laplacian_cosine_accuracy():
    e128 = laplacian_error(128)
    assert e128 < 4e-3
    assert laplacian_error(256) == pytest.approx(e128 / 4, rel=0.02)


def test_laplacian_order():
    hs = [1 / 32, 1 / 64, 1 / 128]
    order = convergence_order([(h, laplacian_error(round(1 / h))) for h in hs])
    assert abs(order - 2.0) <= 0.2


def test_laplacian_2d_separable_mode():
    g = Grid.rectangle(1.0, 2.0, 40, 50)
    x, y = g.coords
    f = np.cos(np.pi * x) * np.cos(np.pi * y / 2)
    hx, hy = g.spacing
    lam = 2 * (1 - np.cos(np.pi * hx)) / hx**2 + 2 * (1 - np.cos(np.pi * hy / 2)) / hy**2
    assert np.max(np.abs(laplacian_neumann(f, g) + lam * f)) < 1e-11


@pytest.mark.parametrize("grid", GRIDS)
def test_discrete_conservation(grid, rng):
    for _ in range(20):
        f = rng.uniform(-5, 5, grid.shape)
        g = rng.uniform(0, 5, grid.shape)
        tol = 1e-12 * grid.size * max(np.max(np.abs(f)), 1.0)
        assert abs(np.sum(laplacian_neumann(f, grid)) * grid.cell_volume) <= tol
        coeff = rng.normal()
        tol = 1e-12 * grid.size * max(np.max(np.abs(f)), np.max(np.abs(g)), 1.0) * (1 + abs(coeff))
        assert abs(np.sum(div_flux_upwind(g, f, coeff, grid)) * grid.cell_volume) <= tol


def test_gradient_of_linear_field():
    g = Grid.interval(1.0, 20)
    grad = gradient_neumann(g.centers(), g)
    assert grad.shape == (1, 20)
    assert np.allclose(grad[0, 1:-1], 1.0, rtol=0, atol=1e-12)
    assert grad[0, 0] == pytest.approx(0.5) and grad[0, -1] == pytest.approx(0.5)


@given(st.data())
def test_gradient_linearity(data):
    grid = data.draw(st.sampled_from(GRIDS))
    f, g = data.draw(fields(grid)), data.draw(fields(grid))
    a, b = data.draw(finite), data.draw(finite)
    lhs = gradient_neumann(a * f + b * g, grid)
    rhs = a * gradient_neumann(f, grid) + b * gradient_neumann(g, grid)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-10 * (1 + abs(a) + abs(b)) / min(grid.spacing))


def test_upwind_quadratic_potential_interior():
    # with a flat carrier the donor choice is irrelevant and the stencil is exact
    g = Grid.interval(1.0, 64)
    out = div_flux_upwind(g.full(1.0), g.centers() ** 2 / 2, 1.0, g)
    assert np.max(np.abs(out[1:-1] - 1.0)) < 1e-12


def upwind_error(n):
    g = Grid.interval(1.0, n)
    x = g.centers()
    c = 1.0 + 0.5 * np.cos(np.pi * x)
    phi = np.cos(np.pi * x)
    exact = -np.pi * (-0.5 * np.pi * np.sin(np.pi * x) * np.sin(np.pi * x) + c * np.pi * np.cos(np.pi * x))
    return float(np.max(np.abs(div_flux_upwind(c, phi, 1.0, g) - exact)))


def test_upwind_order():
    order = convergence_order([(1 / n, upwind_error(n)) for n in (32, 64, 128)])
    assert order >= 0.8


def test_upwind_keeps_carrier_positive_under_cfl(rng):
    g = Grid.rectangle(1.0, 1.0, 12, 9)
    for _ in range(50):
        carrier = rng.uniform(0, 3, g.shape) * (rng.uniform(size=g.shape) > 0.3)
        phi = rng.normal(size=g.shape)
        coeff = rng.normal() * 10
        dt = 1.0 / taxis_rate(phi, coeff, g)
        assert np.min(carrier + dt * div_flux_upwind(carrier, phi, coeff, g)) >= -1e-12


@pytest.mark.parametrize("axis", [0, 1])
def test_reflection_symmetry(axis, rng):
    g = Grid.rectangle(1.0, 1.5, 10, 7)
    f, c = rng.normal(size=g.shape), rng.uniform(0, 1, g.shape)
    flip = lambda a: np.flip(a, axis=axis)
    assert np.array_equal(laplacian_neumann(flip(f), g), flip(laplacian_neumann(f, g)))
    assert np.allclose(div_flux_upwind(flip(c), flip(f), 0.7, g), flip(div_flux_upwind(c, f, 0.7, g)), rtol=0, atol=1e-13)
    grad, grad_f = gradient_neumann(flip(f), g), np.flip(gradient_neumann(f, g), axis=axis + 1)
    grad_f[axis] *= -1
    assert np.allclose(grad, grad_f, rtol=0, atol=1e-13)


def test_norm_examples():
    g = Grid.interval(1.0, 100)
    z = g.zeros()
    assert sup_norm(z) == l2_norm(z, g) == min_value(z) == 0
    c = g.full(-2.5)
    assert sup_norm(c) == 2.5 and l2_norm(c, g) == pytest.approx(2.5) and min_value(c) == -2.5
    spike = g.zeros()
    spike[37] = 2.0
    assert sup_norm(spike) == 2.0
    assert l2_norm(spike, g) == pytest.approx(0.2, rel=1e-14)


@given(st.data())
def test_norm_homogeneity_and_triangle(data):
    grid = data.draw(st.sampled_from(GRIDS))
    f, g = data.draw(fields(grid)), data.draw(fields(grid))
    a = data.draw(scalar)
    for norm in (sup_norm, lambda h: l2_norm(h, grid), lambda h: holder_seminorm_proxy(h, grid, 0.5), lambda h: c2_norm_proxy(h, grid)):
        nf, ng = norm(f), norm(g)
        assert norm(a * f) == pytest.approx(abs(a) * nf, rel=1e-12, abs=1e-300)
        assert norm(f + g) <= (nf + ng) * (1 + 1e-12) + 1e-12


def test_holder_examples():
    g = Grid.interval(1.0, 50)
    assert holder_seminorm_proxy(g.full(4.0), g, 0.3) == 0.0
    x = g.centers()
    h = g.spacing[0]
    assert holder_seminorm_proxy(x, g, 0.5) == pytest.approx(math.sqrt(1 - h), rel=1e-12)
    with pytest.raises(ValueError):
        holder_seminorm_proxy(x, g, 1.0)


def test_holder_subsampling_above_limit(rng):
    g = Grid.rectangle(1.0, 1.0, 101, 100)
    f = smooth_field(g, rng)
    lines_only = holder_seminorm_proxy(f, g, 0.5)
    assert lines_only > 0 and np.isfinite(lines_only)
    x = g.coords[0]
    assert holder_seminorm_proxy(x, g, 0.5) == pytest.approx((x.max() - x.min()) ** 0.5, rel=1e-12)


def test_c2_proxy_examples():
    g = Grid.interval(1.0, 64)
    assert c2_norm_proxy(g.full(-3.0), g) == 3.0
    x = g.centers()
    h = g.spacing[0]
    # interior value 1 + 1 + 0; the linear field breaks the Neumann condition,
    # so the boundary cells carry a second difference of 1/h
    assert c2_norm_proxy(x, g) == pytest.approx((1 - h / 2) + 1 + 1 / h, rel=1e-12)
    f = np.cos(np.pi * x)
    assert c2_norm_proxy(f, g) == pytest.approx(1 + np.pi + np.pi**2, rel=0.02)


def test_holder_product_examples():
    g = Grid.interval(1.0, 64)
    one = g.full(1.0)
    assert holder_product_check(one, one, g, 0.5) == pytest.approx(2.0)
    assert holder_product_check(g.zeros(), smooth_field(g, np.random.default_rng(1)), g, 0.5) >= 0


def test_holder_product_random_smooth(rng):
    g = Grid.interval(1.0, 64)
    slacks = [holder_product_check(smooth_field(g, rng), smooth_field(g, rng), g, rng.uniform(0.05, 0.95)) for _ in range(100)]
    assert min(slacks) >= 0


@given(st.data())
def test_holder_product_arbitrary_fields(data):
    grid = data.draw(st.sampled_from(GRIDS))
    f, g = data.draw(fields(grid)), data.draw(fields(grid))
    alpha = data.draw(st.floats(0.05, 0.95))
    assert holder_product_check(f, g, grid, alpha) >= -1e-9 * (1 + sup_norm(f) * sup_norm(g))
