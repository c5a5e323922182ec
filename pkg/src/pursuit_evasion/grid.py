"""Cell-centred grids on boxes, Neumann stencils and discrete norms.

A field is a plain float64 array whose shape equals ``grid.shape`` (axis 0
slowest, i.e. C order).  Homogeneous Neumann conditions are imposed by
reflected ghost cells: the ghost value equals the adjacent interior value,
so every boundary face carries exactly zero flux.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

HOLDER_ALL_PAIRS_LIMIT = 10_000


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred mesh on [0, L0] (x [0, L1])."""

    extents: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        if len(self.extents) not in (1, 2) or len(self.cells) != len(self.extents):
            raise ValueError("grid must be 1D or 2D with one cell count per extent")
        for e in self.extents:
            if not (math.isfinite(e) and e > 0):
                raise ValueError(f"extents must be positive, got {self.extents}")
        for c in self.cells:
            if c < 3:
                raise ValueError(f"need at least 3 cells per axis, got {self.cells}")

    @classmethod
    def interval(cls, length: float = 1.0, cells: int = 128) -> "Grid":
        return cls((length,), (cells,))

    @classmethod
    def rectangle(cls, lx: float, ly: float, nx: int, ny: int) -> "Grid":
        return cls((lx, ly), (nx, ny))

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @cached_property
    def size(self) -> int:
        return math.prod(self.cells)

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / c for e, c in zip(self.extents, self.cells))

    @cached_property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def volume(self) -> float:
        return math.prod(self.extents)

    def centers(self, axis: int = 0) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcast cell-centre coordinates, one array of ``shape`` per axis."""
        return tuple(np.meshgrid(*(self.centers(a) for a in range(self.dim)), indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        return f


def _sl(ndim: int, axis: int, s: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def _pad_edge(f: np.ndarray, axis: int) -> np.ndarray:
    first = f[_sl(f.ndim, axis, slice(0, 1))]
    last = f[_sl(f.ndim, axis, slice(-1, None))]
    return np.concatenate([first, f, last], axis=axis)


def _with_zero_ends(face_values: np.ndarray, axis: int) -> np.ndarray:
    shape = list(face_values.shape)
    shape[axis] = 1
    zero = np.zeros(shape)
    return np.concatenate([zero, face_values, zero], axis=axis)


def face_gradient(f: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Normal derivative on the interior faces along ``axis`` (n-1 values)."""
    return np.diff(f, axis=axis) / grid.spacing[axis]


def laplacian_neumann(f: np.ndarray, grid: Grid) -> np.ndarray:
    """3-point / 5-point Laplacian with reflected ghosts, in flux form."""
    f = grid.check(f)
    out = np.zeros_like(f)
    for axis, h in enumerate(grid.spacing):
        flux = _with_zero_ends(face_gradient(f, grid, axis), axis)
        out += np.diff(flux, axis=axis) / h
    return out


def second_difference(f: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    flux = _with_zero_ends(face_gradient(f, grid, axis), axis)
    return np.diff(flux, axis=axis) / grid.spacing[axis]


def _centered(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    g = _pad_edge(f, axis)
    return (g[_sl(g.ndim, axis, slice(2, None))] - g[_sl(g.ndim, axis, slice(None, -2))]) / (2.0 * h)


def gradient_neumann(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Centred cell gradient, shape ``(dim, *grid.shape)``.

    At a boundary cell the reflected ghost makes the normal component
    ``(neighbour - self) / (2 h)``, e.g. 0.5 for f(x) = x.
    """
    f = grid.check(f)
    return np.stack([_centered(f, h, axis) for axis, h in enumerate(grid.spacing)])


def div_flux_upwind(carrier: np.ndarray, potential: np.ndarray, coeff: float, grid: Grid) -> np.ndarray:
    """``coeff * div(carrier * grad(potential))`` with donor-cell carrier values.

    The carrier moves with velocity ``-coeff * grad(potential)``; on each
    interior face the carrier is taken from the cell the flow leaves.
    Boundary faces carry no flux, so the volume-weighted sum of the result
    vanishes up to round-off.
    """
    carrier = grid.check(carrier)
    potential = grid.check(potential)
    out = np.zeros_like(carrier)
    if coeff == 0.0:
        return out
    for axis, h in enumerate(grid.spacing):
        dphi = face_gradient(potential, grid, axis)
        left = carrier[_sl(carrier.ndim, axis, slice(None, -1))]
        right = carrier[_sl(carrier.ndim, axis, slice(1, None))]
        upwind = np.where(-coeff * dphi > 0.0, left, right)
        flux = _with_zero_ends(coeff * dphi * upwind, axis)
        out += np.diff(flux, axis=axis) / h
    return out


def taxis_rate(potential: np.ndarray, coeff: float, grid: Grid) -> float:
    """Worst-case fraction of a cell that can leave per unit time.

    Donor-cell transport keeps the carrier non-negative when
    ``dt * taxis_rate <= 1``; each axis contributes two faces.
    """
    rate = 0.0
    if coeff == 0.0:
        return rate
    for axis, h in enumerate(grid.spacing):
        vmax = float(np.max(np.abs(coeff * face_gradient(potential, grid, axis))))
        rate += 2.0 * vmax / h
    return rate


def sup_norm(f: np.ndarray) -> float:
    return float(np.max(np.abs(f)))


def min_value(f: np.ndarray) -> float:
    return float(np.min(f))


def l2_norm(f: np.ndarray, grid: Grid) -> float:
    return math.sqrt(float(np.sum(np.square(f))) * grid.cell_volume)


def _pair_points(grid: Grid) -> np.ndarray:
    return np.stack([c.ravel() for c in grid.coords], axis=1)


def _holder_all_pairs(values: np.ndarray, points: np.ndarray, alpha: float, chunk: int = 512) -> float:
    best = 0.0
    n = values.size
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diff = np.abs(values[start:stop, None] - values[None, :])
        dist = np.sqrt(np.sum((points[start:stop, None, :] - points[None, :, :]) ** 2, axis=-1))
        np.fill_diagonal(dist[:, start:stop], np.inf)
        best = max(best, float(np.max(diff / dist**alpha)))
    return best


def holder_seminorm_proxy(f: np.ndarray, grid: Grid, alpha: float) -> float:
    """Largest difference quotient |f(x) - f(y)| / |x - y|^alpha over cell centres.

    All pairs are examined up to ``HOLDER_ALL_PAIRS_LIMIT`` cells; beyond
    that only pairs on common axis-aligned grid lines are used.  Either way
    the result is a lower bound for the continuum seminorm.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    f = grid.check(f)
    if grid.size <= HOLDER_ALL_PAIRS_LIMIT:
        return _holder_all_pairs(f.ravel(), _pair_points(grid), alpha)
    best = 0.0
    for axis in range(grid.dim):
        x = grid.centers(axis)
        dist = np.abs(x[:, None] - x[None, :])
        np.fill_diagonal(dist, np.inf)
        weight = dist ** (-alpha)
        lines = np.moveaxis(f, axis, -1).reshape(-1, f.shape[axis])
        for line in lines:
            best = max(best, float(np.max(np.abs(line[:, None] - line[None, :]) * weight)))
    return best


def second_derivative_components(f: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Pure second differences per axis, plus the mixed one in 2D."""
    f = grid.check(f)
    comps = [second_difference(f, grid, axis) for axis in range(grid.dim)]
    if grid.dim == 2:
        hx, hy = grid.spacing
        comps.append(_centered(_centered(f, hx, 0), hy, 1))
    return comps


def c2_norm_proxy(f: np.ndarray, grid: Grid) -> float:
    """sup|f| + sup over cells of sum|first differences| + sup of sum|second differences|.

    Component magnitudes are summed cell by cell, so the discrete Laplacian
    is always bounded by the second-order part.  Fields that violate the
    Neumann condition pick up O(1/h) second differences in the boundary
    cells; those are kept, not trimmed.
    """
    f = grid.check(f)
    first = np.sum(np.abs(gradient_neumann(f, grid)), axis=0)
    second = sum(np.abs(c) for c in second_derivative_components(f, grid))
    return sup_norm(f) + float(np.max(first)) + float(np.max(second))


def c2alpha_norm_proxy(f: np.ndarray, grid: Grid, alpha: float) -> float:
    """C^2 proxy plus the Hölder seminorm proxies of the second differences."""
    comps = second_derivative_components(f, grid)
    return c2_norm_proxy(f, grid) + sum(holder_seminorm_proxy(c, grid, alpha) for c in comps)


def holder_alpha_norm(f: np.ndarray, grid: Grid, alpha: float) -> float:
    return sup_norm(f) + holder_seminorm_proxy(f, grid, alpha)


def holder_product_check(f: np.ndarray, g: np.ndarray, grid: Grid, alpha: float) -> float:
    """Slack of |fg|_a <= |f|_0|g|_0 + |f|_0|g|_a + |f|_a|g|_0 on the proxies.

    A negative return value means the inequality failed.
    """
    f = grid.check(f)
    g = grid.check(g)
    f0, g0 = sup_norm(f), sup_norm(g)
    fa, ga = holder_alpha_norm(f, grid, alpha), holder_alpha_norm(g, grid, alpha)
    lhs = holder_alpha_norm(f * g, grid, alpha)
    return f0 * g0 + f0 * ga + fa * g0 - lhs
