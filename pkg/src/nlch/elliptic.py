"""Inverse elliptic operators and the dual norms built from them.

Everything here works with the quadrature-weighted (Galerkin) forms: the
bulk stiffness A = W(-Lap_zeroflux) and its surface analog are symmetric
positive semidefinite with constants as nullspace, so each inverse operator
is a dense LU of a saddle system [[A, c], [c^T, 0]] whose multiplier pins the
relevant mean.  Solvers cache their factorization; the coupled bulk-surface
operator caches one factorization per kinetic rate L.

Solvers
-------
* ``neumann_solve``       -Lap u = f in Omega, d_n u = 0, <u> = 0.
* ``surface_solve``       -Lap_G u = g per ring, ring means zero.
* ``bulk_surface_solve``  the coupled pair problem with Robin coupling
                          L d_n u = u_G - u (L > 0) or the trace constraint
                          u_G = u|_G (L = 0), generalized mean zero.

Dual norms are computed as the L^2 pairing of the datum with its elliptic
preimage, ||v||^2 = (S v, v); the energy-form route is exposed separately
(``energy_product``) so tests can cross-check the two paths.  The boundary
has two connected components, so surface norms handle means per ring.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .geometry import BulkField, FieldPair, StripGrid, SurfField, generalized_mean, ring_means

__all__ = ["DiscreteOperators", "EllipticSolvers", "assemble_operators"]

_MEAN_TOL = 1e-8


class DiscreteOperators:
    """Sparse matrices realizing the strip's difference operators.

    lap_bulk:    zero-flux five-point Laplacian (nb x nb).
    flux_inject: ghost-elimination flux term, so the full Laplacian with
                 datum q is lap_bulk @ u + flux_inject @ q (nb x ns).
    lap_surf:    per-ring periodic second difference (ns x ns).
    trace_op:    restriction to the wall rows (ns x nb).
    stiff_bulk:  W(-lap_bulk), symmetric PSD, nullspace = constants.
    stiff_surf:  W_G(-lap_surf), symmetric PSD, per-ring constants nullspace.
    """

    def __init__(self, grid: StripGrid):
        self.grid = grid
        nx, ny = grid.nx, grid.ny
        nb, ns = nx * ny, 2 * nx
        hx2, hy2 = grid.hx**2, grid.hy**2

        def p(i, j):  # bulk flat index
            return i * ny + j

        rows, cols, vals = [], [], []
        for i in range(nx):
            ip, im = (i + 1) % nx, (i - 1) % nx
            for j in range(ny):
                me = p(i, j)
                rows += [me, me, me]
                cols += [p(ip, j), p(im, j), me]
                vals += [1.0 / hx2, 1.0 / hx2, -2.0 / hx2]
                if 0 < j < ny - 1:
                    rows += [me, me, me]
                    cols += [p(i, j + 1), p(i, j - 1), me]
                    vals += [1.0 / hy2, 1.0 / hy2, -2.0 / hy2]
                else:
                    inner = p(i, 1) if j == 0 else p(i, ny - 2)
                    rows += [me, me]
                    cols += [inner, me]
                    vals += [2.0 / hy2, -2.0 / hy2]
        self.lap_bulk = sp.csr_matrix((vals, (rows, cols)), shape=(nb, nb))

        # flux rows: +2 q / hy at each wall node (outward-normal datum)
        s_bot = np.arange(nx)
        s_top = nx + np.arange(nx)
        rows = np.concatenate([p(np.arange(nx), 0), p(np.arange(nx), ny - 1)])
        cols = np.concatenate([s_bot, s_top])
        self.flux_inject = sp.csr_matrix(
            (np.full(ns, 2.0 / grid.hy), (rows, cols)), shape=(nb, ns)
        )

        ring = sp.diags([-2.0 / hx2] * nx) + sp.csr_matrix(
            (
                np.full(2 * nx, 1.0 / hx2),
                (
                    np.concatenate([np.arange(nx), np.arange(nx)]),
                    np.concatenate([(np.arange(nx) + 1) % nx, (np.arange(nx) - 1) % nx]),
                ),
            ),
            shape=(nx, nx),
        )
        self.lap_surf = sp.block_diag([ring, ring], format="csr")

        self.trace_op = sp.csr_matrix(
            (np.ones(ns), (np.arange(ns), np.concatenate([p(np.arange(nx), 0), p(np.arange(nx), ny - 1)]))),
            shape=(ns, nb),
        )

        self.wb = grid.bulk_weights.ravel().copy()
        self.ws = grid.surf_weights.ravel().copy()

        stiff = -sp.diags(self.wb) @ self.lap_bulk
        self.stiff_bulk = ((stiff + stiff.T) * 0.5).tocsr()
        stiff_s = -sp.diags(self.ws) @ self.lap_surf
        self.stiff_surf = ((stiff_s + stiff_s.T) * 0.5).tocsr()


def assemble_operators(grid: StripGrid) -> DiscreteOperators:
    return DiscreteOperators(grid)


def _kkt_factor(stiff: np.ndarray, constraints: np.ndarray):
    """LU of the saddle system [[A, C], [C^T, 0]]; C columns pin means."""
    n, m = stiff.shape[0], constraints.shape[1]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = stiff
    kkt[:n, n:] = constraints
    kkt[n:, :n] = constraints.T
    return sla.lu_factor(kkt)


class EllipticSolvers:
    """Cached inverse operators on one grid; see the module docstring."""

    def __init__(self, grid: StripGrid):
        self.grid = grid
        self.ops = assemble_operators(grid)
        nb = grid.nx * grid.ny
        nx = grid.nx

        self._lu_neumann = _kkt_factor(
            self.ops.stiff_bulk.toarray(), self.ops.wb.reshape(nb, 1)
        )
        # both rings share one circulant stiffness; factor once
        ring_stiff = self.ops.stiff_surf[:nx, :nx].toarray()
        self._lu_ring = _kkt_factor(ring_stiff, self.ops.ws[:nx].reshape(nx, 1))
        self._lu_robin: dict[float, tuple] = {}

    # -- plain Neumann and surface inverses ---------------------------------

    def neumann_solve(self, f: BulkField) -> BulkField:
        """u with -Lap u = f, zero flux, <u>_Omega = 0; f must be mean-zero."""
        self._check_grid(f.grid)
        g = self.grid
        fv = f.values.ravel()
        scale = max(1.0, float(np.abs(fv).max()))
        if abs(float(np.sum(self.ops.wb * fv))) > _MEAN_TOL * scale * g.area:
            raise ValueError("neumann_solve needs a mean-zero right-hand side")
        rhs = np.concatenate([self.ops.wb * fv, [0.0]])
        u = sla.lu_solve(self._lu_neumann, rhs)[:-1]
        return BulkField(g, u.reshape(g.nx, g.ny))

    def surface_solve(self, f: SurfField) -> SurfField:
        """u with -Lap_G u = f ring-wise; each ring mean of f must vanish."""
        self._check_grid(f.grid)
        g = self.grid
        scale = max(1.0, float(np.abs(f.values).max()))
        if np.abs(ring_means(f)).max() > _MEAN_TOL * scale:
            raise ValueError("surface_solve needs ring-wise mean-zero data")
        out = np.empty_like(f.values)
        wr = self.ops.ws[: g.nx]
        for r in range(2):
            rhs = np.concatenate([wr * f.values[r], [0.0]])
            out[r] = sla.lu_solve(self._lu_ring, rhs)[:-1]
        return SurfField(g, out)

    # -- coupled bulk-surface inverse ----------------------------------------

    def _robin_factor(self, l_value: float):
        key = float(l_value)
        if key not in self._lu_robin:
            ops = self.ops
            nb = self.grid.nx * self.grid.ny
            ns = 2 * self.grid.nx
            if key == 0.0:
                # trace-constrained: unknown is the bulk field, u_G = trace u
                a0 = ops.stiff_bulk + ops.trace_op.T @ ops.stiff_surf @ ops.trace_op
                c0 = ops.wb + ops.trace_op.T @ ops.ws
                self._lu_robin[key] = _kkt_factor(a0.toarray(), c0.reshape(nb, 1))
            else:
                inv_l = 1.0 / key
                ws_diag = sp.diags(ops.ws)
                coup = ops.trace_op.T @ ws_diag
                a = sp.bmat(
                    [
                        [ops.stiff_bulk + inv_l * (coup @ ops.trace_op), -inv_l * coup],
                        [-inv_l * (ws_diag @ ops.trace_op), ops.stiff_surf + inv_l * ws_diag],
                    ],
                    format="csr",
                )
                c = np.concatenate([ops.wb, ops.ws]).reshape(nb + ns, 1)
                self._lu_robin[key] = _kkt_factor(a.toarray(), c)
        return self._lu_robin[key]

    def bulk_surface_solve(self, v: FieldPair, l_value: float) -> FieldPair:
        """Solve the coupled problem S^L u = v for finite L >= 0.

        v must have generalized mean zero (solvability); the result pair has
        generalized mean zero and, for L = 0, exact trace compatibility.
        """
        self._check_grid(v.grid)
        if not (math.isfinite(l_value) and l_value >= 0.0):
            raise ValueError("bulk_surface_solve needs finite L >= 0; use the component norms at L = inf")
        g = self.grid
        scale = max(1.0, float(np.abs(v.bulk.values).max()), float(np.abs(v.surf.values).max()))
        if abs(generalized_mean(v)) > _MEAN_TOL * scale:
            raise ValueError("bulk_surface_solve needs generalized-mean-zero data")
        lu = self._robin_factor(l_value)
        wb_f = self.ops.wb * v.bulk.values.ravel()
        ws_f = self.ops.ws * v.surf.values.ravel()
        if l_value == 0.0:
            rhs = np.concatenate([wb_f + self.ops.trace_op.T @ ws_f, [0.0]])
            u = sla.lu_solve(lu, rhs)[:-1]
            ub = BulkField(g, u.reshape(g.nx, g.ny))
            return FieldPair(ub, SurfField(g, (self.ops.trace_op @ u).reshape(2, g.nx)))
        nb = g.nx * g.ny
        rhs = np.concatenate([wb_f, ws_f, [0.0]])
        u = sla.lu_solve(lu, rhs)[:-1]
        return FieldPair(
            BulkField(g, u[:nb].reshape(g.nx, g.ny)),
            SurfField(g, u[nb:].reshape(2, g.nx)),
        )

    # -- inner products and norms --------------------------------------------

    def l2_pair(self, a: FieldPair, b: FieldPair) -> float:
        """Joint L^2 inner product over Omega and Gamma."""
        return float(
            np.sum(self.ops.wb * a.bulk.values.ravel() * b.bulk.values.ravel())
            + np.sum(self.ops.ws * a.surf.values.ravel() * b.surf.values.ravel())
        )

    def energy_product(self, a: FieldPair, b: FieldPair, l_value: float) -> float:
        """The coupled Dirichlet form a_L(a, b); independent of any solve."""
        ops = self.ops
        ab, bb = a.bulk.values.ravel(), b.bulk.values.ravel()
        as_, bs = a.surf.values.ravel(), b.surf.values.ravel()
        out = float(ab @ (ops.stiff_bulk @ bb) + as_ @ (ops.stiff_surf @ bs))
        if l_value > 0.0 and math.isfinite(l_value):
            da = ops.trace_op @ ab - as_
            db = ops.trace_op @ bb - bs
            out += float(np.sum(ops.ws * da * db) / l_value)
        return out

    def dual_norm(self, v: FieldPair, l_value: float) -> float:
        """||v|| in the dual of the mean-zero coupled space, via the preimage."""
        u = self.bulk_surface_solve(v, l_value)
        return math.sqrt(max(0.0, self.l2_pair(u, v)))

    def dual_norm_extended(self, v: FieldPair, l_value: float) -> float:
        """Full-space dual norm: projected dual norm plus the mean component."""
        m = generalized_mean(v)
        shifted = FieldPair(
            BulkField(v.grid, v.bulk.values - m), SurfField(v.grid, v.surf.values - m)
        )
        return math.sqrt(self.dual_norm(shifted, l_value) ** 2 + m * m)

    def dual_norm_bulk(self, f: BulkField) -> float:
        """H^-1-type norm of a mean-zero bulk field."""
        u = self.neumann_solve(f)
        return math.sqrt(max(0.0, float(np.sum(self.ops.wb * u.values.ravel() * f.values.ravel()))))

    def dual_norm_bulk_full(self, f: BulkField) -> float:
        """Bulk dual norm extended off the mean-zero subspace (V' convention)."""
        from .geometry import mean_bulk

        m = mean_bulk(f)
        base = self.dual_norm_bulk(BulkField(f.grid, f.values - m))
        return math.sqrt(base**2 + m * m)

    def dual_norm_surf(self, f: SurfField) -> float:
        """Ring-wise H^-1 norm; needs ring-wise mean-zero data."""
        u = self.surface_solve(f)
        return math.sqrt(max(0.0, float(np.sum(self.ops.ws * u.values.ravel() * f.values.ravel()))))

    def dual_norm_surf_full(self, f: SurfField) -> float:
        """Surface dual norm with per-ring means split off (disconnected Gamma)."""
        m = ring_means(f)
        base = self.dual_norm_surf(SurfField(f.grid, f.values - m[:, None]))
        return math.sqrt(base**2 + float(np.sum(m * m)))

    def _check_grid(self, grid: StripGrid) -> None:
        if grid != self.grid:
            raise ValueError("field grid does not match the solver grid")
