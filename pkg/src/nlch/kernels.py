"""Nonlocal convolution operators J*phi (bulk) and K@psi (surface rings).

Kernels are even, nonnegative, radial profiles evaluated at node distances
and turned into dense quadrature-weighted operators:

    (J*f)(x_p) = sum_q J(x_p - x_q) w_q f_q,

so applying the operator to the constant 1 reproduces the kernel integral
a_omega = J*1 exactly.  The kernel-value matrices themselves are symmetric;
spectral diagnostics work on the similarity-equivalent symmetrized form
W^(1/2) M W^(1/2).

Families and amplitude conventions (mixed on purpose):

* ``gaussian``   width = sigma, truncated at 8*sigma, *mass-normalized*:
                 amplitude equals the full-space integral (2D normalization
                 for the bulk kernel, 1D for the surface kernel), so the
                 kernel integral saturates to the amplitude away from walls.
* ``wendland-c2`` width = support radius, mass-normalized the same way;
                 C^2 at the origin, compactly supported, positive definite.
* ``tophat``     width = support radius, amplitude = plateau *height*
                 (so a covering tophat gives a_omega = amplitude*|Omega|).
                 Not W^(1,1): its gradient constants are reported as 0 and
                 it fails the kernel-regularity assumption by design.

The x direction wraps periodically: the gaussian sums lattice images until
increments fall below 1e-14 (the 8*sigma cutoff guarantees that); compactly
supported families use the minimal image, identical to the image sum whenever
the support fits in half the period.  The y direction truncates at the walls.
Surface kernels couple the two rings through the Euclidean ring separation ly
unless ``couple_rings=False``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BulkField, StripGrid, SurfField

__all__ = [
    "KernelSpec",
    "KernelOps",
    "HSReport",
    "build_kernel_ops",
    "conv_bulk",
    "conv_surf",
    "hs_diagnostics",
]

_FAMILIES = ("gaussian", "wendland-c2", "tophat")


@dataclass(frozen=True)
class KernelSpec:
    """Radial kernel description; see the module docstring for conventions."""

    family: str
    width: float
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; pick one of {_FAMILIES}")
        if not self.width > 0.0:
            raise ValueError("kernel width must be positive")
        if not self.amplitude > 0.0:
            raise ValueError("kernel amplitude must be positive")

    @property
    def support_radius(self) -> float:
        """Effective radius beyond which the (truncated) kernel vanishes."""
        if self.family == "gaussian":
            return 8.0 * self.width
        return self.width

    def full_mass(self, dim: int) -> float:
        """Analytic L1 norm over R^dim (the untruncated kernel)."""
        if self.family == "tophat":
            if dim == 2:
                return self.amplitude * math.pi * self.width**2
            return self.amplitude * 2.0 * self.width
        # gaussian and wendland-c2 are mass-normalized
        return self.amplitude


def _profile(spec: KernelSpec, r: np.ndarray, dim: int) -> np.ndarray:
    """Kernel value at distance r >= 0 with the dim-appropriate normalization."""
    if spec.family == "gaussian":
        s = spec.width
        norm = 2.0 * math.pi * s * s if dim == 2 else s * math.sqrt(2.0 * math.pi)
        out = (spec.amplitude / norm) * np.exp(-0.5 * (r / s) ** 2)
        return np.where(r <= 8.0 * s, out, 0.0)
    if spec.family == "wendland-c2":
        w = spec.width
        norm = math.pi * w * w / 7.0 if dim == 2 else 2.0 * w / 3.0
        s = np.clip(r / w, 0.0, 1.0)
        return (spec.amplitude / norm) * (1.0 - s) ** 4 * (4.0 * s + 1.0)
    # tophat: plateau height, sharp cutoff
    return np.where(r <= spec.width, spec.amplitude, 0.0)


def _grad_profile(spec: KernelSpec, r: np.ndarray, dim: int) -> np.ndarray:
    """|d/dr| of the profile; the tophat's distributional jump is reported as 0."""
    if spec.family == "gaussian":
        return _profile(spec, r, dim) * r / spec.width**2
    if spec.family == "wendland-c2":
        w = spec.width
        norm = math.pi * w * w / 7.0 if dim == 2 else 2.0 * w / 3.0
        s = np.clip(r / w, 0.0, 1.0)
        return (spec.amplitude / norm) * 20.0 * s * (1.0 - s) ** 3 / w
    return np.zeros_like(np.asarray(r, dtype=float))


def _wrapped_dx_images(grid: StripGrid, spec: KernelSpec) -> np.ndarray:
    """x-offset images to sum, shape (n_images, nx); minimal image comes first.

    Compact families keep only the minimal image; the gaussian adds lattice
    shifts until everything beyond the 8*sigma cutoff is covered.
    """
    d = grid.hx * np.arange(grid.nx)
    dmin = d - grid.lx * np.round(d / grid.lx)
    if spec.family == "gaussian":
        n_img = int(math.ceil((8.0 * spec.width + 0.5 * grid.lx) / grid.lx))
        shifts = grid.lx * np.arange(-n_img, n_img + 1)
        return dmin[None, :] + shifts[:, None]
    return dmin[None, :]


def _bulk_tables(grid: StripGrid, spec: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Kernel and |gradient| tables T[d, j, j'] over x-offset class d and y rows."""
    dx = _wrapped_dx_images(grid, spec)  # (n_img, nx)
    dy = grid.y[:, None] - grid.y[None, :]  # (ny, ny)
    r = np.sqrt(dx[:, :, None, None] ** 2 + dy[None, None, :, :] ** 2)
    val = _profile(spec, r, dim=2).sum(axis=0)
    grad = _grad_profile(spec, r, dim=2).sum(axis=0)
    return val, grad  # both (nx, ny, ny)


def _surf_tables(
    grid: StripGrid, spec: KernelSpec, couple_rings: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Kernel and |tangential gradient| tables T[d, r, r'] over the two rings."""
    dx = _wrapped_dx_images(grid, spec)  # (n_img, nx)
    gap = np.array([[0.0, grid.ly], [grid.ly, 0.0]])  # ring separations
    r = np.sqrt(dx[:, :, None, None] ** 2 + gap[None, None, :, :] ** 2)
    val = _profile(spec, r, dim=1)
    # tangential derivative: |K'(r)| * |dx| / r (same-ring reduces to |K'|)
    with np.errstate(invalid="ignore"):
        proj = np.where(r > 0.0, np.abs(dx)[:, :, None, None] / r, 0.0)
    grad = _grad_profile(spec, r, dim=1) * proj
    if not couple_rings:
        val[:, :, 0, 1] = val[:, :, 1, 0] = 0.0
        grad[:, :, 0, 1] = grad[:, :, 1, 0] = 0.0
    return val.sum(axis=0), grad.sum(axis=0)  # both (nx, 2, 2)


def _expand_bulk(table: np.ndarray, grid: StripGrid) -> np.ndarray:
    """Blow the (nx, ny, ny) offset table up to the full (nb, nb) matrix."""
    nx, ny = grid.nx, grid.ny
    nodes = np.arange(nx * ny)
    i, j = divmod(nodes, ny)
    d = (i[:, None] - i[None, :]) % nx
    m = table[d, j[:, None], j[None, :]]
    return 0.5 * (m + m.T)  # evenness makes this symmetric; enforce bitwise


def _expand_surf(table: np.ndarray, grid: StripGrid) -> np.ndarray:
    nx = grid.nx
    nodes = np.arange(2 * nx)
    ring, i = divmod(nodes, nx)
    d = (i[:, None] - i[None, :]) % nx
    m = table[d, ring[:, None], ring[None, :]]
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class KernelOps:
    """Assembled nonlocal operators with their (A1)-style constants.

    ``bulk_matrix``/``surf_matrix`` hold plain kernel values; convolution
    multiplies by the quadrature weights first, so conv(1) = a_omega exactly.
    Constants: a_*_min/max are inf/sup of the kernel integrals, grad_*_sup is
    the sup of the integrated |kernel gradient| (W^(1,1) bound).
    """

    grid: StripGrid
    spec_j: KernelSpec
    spec_k: KernelSpec
    bulk_matrix: np.ndarray
    surf_matrix: np.ndarray
    a_omega: BulkField
    a_gamma: SurfField
    a_bulk_min: float
    a_bulk_max: float
    grad_bulk_sup: float
    a_surf_min: float
    a_surf_max: float
    grad_surf_sup: float
    couple_rings: bool


def build_kernel_ops(
    grid: StripGrid,
    spec_j: KernelSpec,
    spec_k: KernelSpec,
    couple_rings: bool = True,
) -> KernelOps:
    """Assemble dense bulk and surface convolution operators on ``grid``.

    Rejects kernels the grid cannot resolve (width <= 2*max(hx, hy)); the
    quadrature would see a spike narrower than a cell and every constant
    downstream would be garbage.
    """
    # bulk kernels must span the coarser lattice direction; ring kernels only
    # ever see the x spacing
    for name, spec, h in (
        ("bulk", spec_j, max(grid.hx, grid.hy)),
        ("surface", spec_k, grid.hx),
    ):
        if spec.width <= 2.0 * h:
            raise ValueError(
                f"unresolvable {name} kernel: width {spec.width} <= twice the node spacing {2.0 * h}"
            )

    val_b, grad_b = _bulk_tables(grid, spec_j)
    val_s, grad_s = _surf_tables(grid, spec_k, couple_rings)

    bulk_matrix = _expand_bulk(val_b, grid)
    surf_matrix = _expand_surf(val_s, grid)

    wb = grid.bulk_weights.ravel()
    ws = grid.surf_weights.ravel()
    a_omega_flat = bulk_matrix @ wb
    a_gamma_flat = surf_matrix @ ws

    # row sums of the |gradient| tables; same reduction, no full matrix kept
    gb = _expand_bulk(grad_b, grid) @ wb
    gs = _expand_surf(grad_s, grid) @ ws

    return KernelOps(
        grid=grid,
        spec_j=spec_j,
        spec_k=spec_k,
        bulk_matrix=bulk_matrix,
        surf_matrix=surf_matrix,
        a_omega=BulkField(grid, a_omega_flat.reshape(grid.nx, grid.ny)),
        a_gamma=SurfField(grid, a_gamma_flat.reshape(2, grid.nx)),
        a_bulk_min=float(a_omega_flat.min()),
        a_bulk_max=float(a_omega_flat.max()),
        grad_bulk_sup=float(gb.max()),
        a_surf_min=float(a_gamma_flat.min()),
        a_surf_max=float(a_gamma_flat.max()),
        grad_surf_sup=float(gs.max()),
        couple_rings=couple_rings,
    )


def conv_bulk(ops: KernelOps, f: BulkField) -> BulkField:
    """(J*f) by quadrature-weighted dense matvec."""
    if f.grid != ops.grid:
        raise ValueError("field grid does not match the assembled operators")
    g = ops.grid
    out = ops.bulk_matrix @ (g.bulk_weights.ravel() * f.values.ravel())
    return BulkField(g, out.reshape(g.nx, g.ny))


def conv_surf(ops: KernelOps, f: SurfField) -> SurfField:
    """(K@f) over both rings, cross-ring coupling included if assembled."""
    if f.grid != ops.grid:
        raise ValueError("field grid does not match the assembled operators")
    g = ops.grid
    out = ops.surf_matrix @ (g.surf_weights.ravel() * f.values.ravel())
    return SurfField(g, out.reshape(2, g.nx))


@dataclass(frozen=True)
class HSReport:
    """Spectrum of the symmetrized block operator diag(J*, K@) on L^2 x L^2."""

    singular_values: np.ndarray  # descending
    frobenius: float
    tail_norm: float  # sigma_{N+1}, 0.0 when the spectrum is exhausted
    n_tail: int


def hs_diagnostics(ops: KernelOps, n_tail: int) -> HSReport:
    """Singular values of W^(1/2) M W^(1/2), blockwise over bulk and surface.

    The squared Frobenius norm equals the double quadrature of J^2 over
    Omega x Omega plus K^2 over Gamma x Gamma, the discrete Hilbert-Schmidt
    norm of the joint convolution operator.
    """
    if n_tail < 0:
        raise ValueError("n_tail must be nonnegative")
    db = np.sqrt(ops.grid.bulk_weights.ravel())
    ds = np.sqrt(ops.grid.surf_weights.ravel())
    sym_b = db[:, None] * ops.bulk_matrix * db[None, :]
    sym_s = ds[:, None] * ops.surf_matrix * ds[None, :]
    sv_b = np.linalg.svd(sym_b, compute_uv=False)
    sv_s = np.linalg.svd(sym_s, compute_uv=False)
    sv = np.sort(np.concatenate([sv_b, sv_s]))[::-1]
    frobenius = float(np.sqrt(np.sum(sv**2)))
    tail = float(sv[n_tail]) if n_tail < sv.size else 0.0
    return HSReport(singular_values=sv, frobenius=frobenius, tail_norm=tail, n_tail=n_tail)
