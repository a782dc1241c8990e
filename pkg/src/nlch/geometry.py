"""Flat periodic strip geometry: grids, fields, quadrature, difference operators.

The computational domain is the strip [0, lx) x [0, ly], periodic in x and
walled in y.  Its boundary consists of two periodic rings, the wall rows
y = 0 (bottom) and y = ly (top).  Bulk nodes form an nx-by-ny lattice with
x_i = i*hx (hx = lx/nx, no duplicate at the seam) and y_j = j*hy
(hy = ly/(ny-1), walls included).  Each ring carries the nx wall nodes of
its row.

Quadrature is the rectangle rule in x times the trapezoid rule in y, so wall
rows carry half weight.  This choice makes the discrete divergence theorem

    sum_Omega w * laplacian(f, q) = sum_Gamma hx * q,      q = d_n f outward,

hold to machine precision: the interior second differences telescope exactly
and the ghost-node elimination at the walls injects exactly the prescribed
flux.  All conservation statements downstream lean on this identity.

Surface fields store the bottom ring in row 0 and the top ring in row 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "StripGrid",
    "BulkField",
    "SurfField",
    "FieldPair",
    "mean_bulk",
    "mean_surf",
    "ring_means",
    "generalized_mean",
    "project_zero_mean",
    "laplacian",
    "laplace_beltrami",
    "trace",
]


@dataclass(frozen=True)
class StripGrid:
    """Tensor-product lattice on the periodic strip.

    nx: nodes along the periodic direction (>= 4).
    ny: nodes across the strip, walls included (>= 3).
    lx, ly: physical extents; |Omega| = lx*ly, |Gamma| = 2*lx.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self) -> None:
        if self.nx < 4:
            raise ValueError(f"nx must be >= 4, got {self.nx}")
        if self.ny < 3:
            raise ValueError(f"ny must be >= 3, got {self.ny}")
        if not (self.lx > 0.0 and self.ly > 0.0):
            raise ValueError("lx and ly must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def area(self) -> float:
        """|Omega| = lx*ly."""
        return self.lx * self.ly

    @property
    def surf_measure(self) -> float:
        """|Gamma| = 2*lx (two rings)."""
        return 2.0 * self.lx

    @cached_property
    def x(self) -> np.ndarray:
        return self.hx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return self.hy * np.arange(self.ny)

    @cached_property
    def bulk_weights(self) -> np.ndarray:
        """Quadrature weights, shape (nx, ny); wall rows carry hx*hy/2."""
        w = np.full((self.nx, self.ny), self.hx * self.hy)
        w[:, 0] *= 0.5
        w[:, -1] *= 0.5
        return w

    @cached_property
    def surf_weights(self) -> np.ndarray:
        """Quadrature weights on the rings, shape (2, nx); uniformly hx."""
        return np.full((2, self.nx), self.hx)


def _as_float_array(values, shape: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{what} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite")
    return arr


@dataclass(frozen=True)
class BulkField:
    """Scalar field on the bulk lattice; values[i, j] lives at (x_i, y_j)."""

    grid: StripGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "values",
            _as_float_array(self.values, (self.grid.nx, self.grid.ny), "bulk values"),
        )

    @staticmethod
    def constant(grid: StripGrid, value: float) -> "BulkField":
        return BulkField(grid, np.full((grid.nx, grid.ny), float(value)))


@dataclass(frozen=True)
class SurfField:
    """Scalar field on the two boundary rings; row 0 bottom, row 1 top."""

    grid: StripGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "values",
            _as_float_array(self.values, (2, self.grid.nx), "surface values"),
        )

    @staticmethod
    def constant(grid: StripGrid, value: float) -> "SurfField":
        return SurfField(grid, np.full((2, grid.nx), float(value)))


@dataclass(frozen=True)
class FieldPair:
    """A bulk field with its surface companion, on one common grid."""

    bulk: BulkField
    surf: SurfField

    def __post_init__(self) -> None:
        if self.bulk.grid != self.surf.grid:
            raise ValueError("bulk and surface components live on different grids")

    @property
    def grid(self) -> StripGrid:
        return self.bulk.grid

    @staticmethod
    def constant(grid: StripGrid, value: float) -> "FieldPair":
        return FieldPair(BulkField.constant(grid, value), SurfField.constant(grid, value))


def mean_bulk(f: BulkField) -> float:
    """Quadrature mean over Omega."""
    g = f.grid
    return float(np.sum(g.bulk_weights * f.values) / g.area)


def mean_surf(f: SurfField) -> float:
    """Quadrature mean over Gamma (both rings)."""
    g = f.grid
    return float(np.sum(g.surf_weights * f.values) / g.surf_measure)


def ring_means(f: SurfField) -> np.ndarray:
    """Mean over each ring separately, shape (2,); rectangle rule is exact."""
    return f.values.mean(axis=1)


def generalized_mean(v: FieldPair) -> float:
    """Measure-weighted joint mean (|Omega|<y> + |Gamma|<y_G>) / (|Omega|+|Gamma|)."""
    g = v.grid
    total = np.sum(g.bulk_weights * v.bulk.values) + np.sum(g.surf_weights * v.surf.values)
    return float(total / (g.area + g.surf_measure))


def project_zero_mean(v: FieldPair) -> FieldPair:
    """Subtract the generalized mean from both components."""
    m = generalized_mean(v)
    return FieldPair(
        BulkField(v.grid, v.bulk.values - m),
        SurfField(v.grid, v.surf.values - m),
    )


def laplacian(f: BulkField, flux: SurfField) -> BulkField:
    """Five-point Laplacian, periodic in x, prescribed outward flux at the walls.

    flux holds d_n f (outward normal derivative) on the bottom and top rings.
    Wall rows use the mirrored ghost value f_ghost = f_inner + 2*hy*q, so the
    row-summed identity sum w*Lap = sum hx*q is exact, not just O(h^2).
    """
    if f.grid != flux.grid:
        raise ValueError("field and flux live on different grids")
    g = f.grid
    u = f.values
    hx2 = g.hx * g.hx
    hy2 = g.hy * g.hy

    out = (np.roll(u, -1, axis=0) - 2.0 * u + np.roll(u, 1, axis=0)) / hx2
    # interior second difference in y
    out[:, 1:-1] += (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / hy2
    # wall rows: ghost elimination injects the prescribed flux
    out[:, 0] += (2.0 * u[:, 1] - 2.0 * u[:, 0] + 2.0 * g.hy * flux.values[0]) / hy2
    out[:, -1] += (2.0 * u[:, -2] - 2.0 * u[:, -1] + 2.0 * g.hy * flux.values[1]) / hy2
    return BulkField(g, out)


def laplace_beltrami(f: SurfField) -> SurfField:
    """Periodic three-point second difference along each ring."""
    g = f.grid
    u = f.values
    out = (np.roll(u, -1, axis=1) - 2.0 * u + np.roll(u, 1, axis=1)) / (g.hx * g.hx)
    return SurfField(g, out)


def trace(f: BulkField) -> SurfField:
    """Restriction to the wall rows (exact: rings are grid rows)."""
    return SurfField(f.grid, np.stack([f.values[:, 0], f.values[:, -1]]))
