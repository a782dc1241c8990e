"""Solution operators and the dual norms built on them.

Contracts: forward-apply of every solve output reproduces the input,
self-adjointness on the mean-zero subspaces, the reciprocity identity tying
the L2 pairing to the coupled energy product, and the norm ordering between
the trace-constrained and Robin-coupled problems.
"""

import numpy as np
import pytest

from nlch import (
    BulkField,
    EllipticSolvers,
    FieldPair,
    StripGrid,
    SurfField,
    generalized_mean,
    laplace_beltrami,
    laplacian,
    mean_bulk,
    project_zero_mean,
    ring_means,
    trace,
)

from conftest import random_bulk, random_pair, random_surf


@pytest.fixture(scope="module")
def es():
    return EllipticSolvers(StripGrid(16, 9))


def zero_mean_bulk(g, rng):
    f = random_bulk(g, rng)
    return BulkField(g, f.values - mean_bulk(f))


def zero_ring_surf(g, rng):
    f = random_surf(g, rng)
    return SurfField(g, f.values - ring_means(f)[:, None])


# -- bulk Neumann solve -----------------------------------------------------------


def test_neumann_zero_maps_to_zero(es):
    out = es.neumann_solve(BulkField.constant(es.grid, 0.0))
    assert np.max(np.abs(out.values)) == 0.0


def test_neumann_rejects_nonzero_mean(es):
    with pytest.raises(ValueError):
        es.neumann_solve(BulkField.constant(es.grid, 1.0))


def test_neumann_periodic_mode_closed_form():
    errs = []
    for nx in (16, 32, 64):
        g = StripGrid(nx, 5)
        es = EllipticSolvers(g)
        y = BulkField(g, np.cos(2 * np.pi * g.x)[:, None] * np.ones((1, g.ny)))
        u = es.neumann_solve(y)
        exact = np.cos(2 * np.pi * g.x)[:, None] / (2 * np.pi) ** 2
        errs.append(np.max(np.abs(u.values - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_neumann_forward_residual(es, rng):
    g = es.grid
    for _ in range(5):
        y = zero_mean_bulk(g, rng)
        u = es.neumann_solve(y)
        back = laplacian(u, SurfField.constant(g, 0.0))
        num = np.max(np.abs(-back.values - y.values))
        assert num / np.max(np.abs(y.values)) < 1e-10
        assert abs(mean_bulk(u)) < 1e-10


def test_neumann_self_adjoint(es, rng):
    g = es.grid
    w = g.bulk_weights
    for _ in range(5):
        y1, y2 = zero_mean_bulk(g, rng), zero_mean_bulk(g, rng)
        lhs = float((w * y1.values * es.neumann_solve(y2).values).sum())
        rhs = float((w * es.neumann_solve(y1).values * y2.values).sum())
        assert abs(lhs - rhs) < 1e-10 * (1 + abs(lhs))


# -- surface solve ----------------------------------------------------------------


def test_surface_zero_maps_to_zero(es):
    out = es.surface_solve(SurfField.constant(es.grid, 0.0))
    assert np.max(np.abs(out.values)) == 0.0


def test_surface_rejects_nonzero_ring_mean(es):
    g = es.grid
    vals = np.zeros((2, g.nx))
    vals[0] = 1.0  # bottom ring mean 1, top 0
    with pytest.raises(ValueError):
        es.surface_solve(SurfField(g, vals))


def test_surface_mode_closed_form():
    errs = []
    for nx in (16, 32, 64):
        g = StripGrid(nx, 5)
        es = EllipticSolvers(g)
        y = SurfField(g, np.vstack([np.sin(2 * np.pi * g.x)] * 2))
        u = es.surface_solve(y)
        exact = np.sin(2 * np.pi * g.x) / (2 * np.pi) ** 2
        errs.append(np.max(np.abs(u.values - exact[None, :])))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_surface_forward_residual_and_ring_means(es, rng):
    g = es.grid
    for _ in range(5):
        y = zero_ring_surf(g, rng)
        u = es.surface_solve(y)
        back = laplace_beltrami(u)
        assert np.max(np.abs(-back.values - y.values)) / np.max(np.abs(y.values)) < 1e-10
        assert np.max(np.abs(ring_means(u))) < 1e-10


def test_surface_self_adjoint(es, rng):
    g = es.grid
    w = g.surf_weights
    for _ in range(5):
        y1, y2 = zero_ring_surf(g, rng), zero_ring_surf(g, rng)
        lhs = float((w * y1.values * es.surface_solve(y2).values).sum())
        rhs = float((w * es.surface_solve(y1).values * y2.values).sum())
        assert abs(lhs - rhs) < 1e-10 * (1 + abs(lhs))


# -- coupled bulk-surface solve -----------------------------------------------------


def test_coupled_zero_maps_to_zero(es):
    for l_value in (0.0, 0.1, 1.0, 10.0):
        out = es.bulk_surface_solve(FieldPair.constant(es.grid, 0.0), l_value)
        assert np.max(np.abs(out.bulk.values)) == 0.0
        assert np.max(np.abs(out.surf.values)) == 0.0


def test_coupled_rejects_bad_inputs(es):
    v = FieldPair.constant(es.grid, 1.0)
    with pytest.raises(ValueError):
        es.bulk_surface_solve(v, 1.0)  # nonzero generalized mean
    ok = project_zero_mean(v)
    with pytest.raises(ValueError):
        es.bulk_surface_solve(ok, -1.0)
    with pytest.raises(ValueError):
        es.bulk_surface_solve(ok, np.inf)


def test_coupled_forward_residual(es, rng):
    # recover the wall flux from the surface row, then check the bulk row,
    # the trace/Robin row, and the generalized mean of the solution
    g = es.grid
    for l_value in (0.0, 0.1, 1.0, 10.0):
        v = project_zero_mean(random_pair(g, rng))
        u = es.bulk_surface_solve(v, l_value)
        q = SurfField(g, v.surf.values + laplace_beltrami(u.surf).values)
        back = laplacian(u.bulk, q)
        scale = np.max(np.abs(v.bulk.values))
        assert np.max(np.abs(-back.values - v.bulk.values)) / scale < 1e-9
        gap = u.surf.values - trace(u.bulk).values
        if l_value == 0.0:
            assert np.max(np.abs(gap)) < 1e-10
        else:
            assert np.max(np.abs(l_value * q.values - gap)) < 1e-9 * (1 + np.max(np.abs(gap)))
        assert abs(generalized_mean(u)) < 1e-10


def test_reciprocity_identity(es, rng):
    # (u, z)_L2 = (u, S^L z)_energy for u = S^L y; the acceptance suite runs
    # this over 200 pairs, here a smoke version per L
    g = es.grid
    for l_value in (0.0, 0.1, 1.0, 10.0):
        y = project_zero_mean(random_pair(g, rng))
        z = project_zero_mean(random_pair(g, rng))
        u = es.bulk_surface_solve(y, l_value)
        sz = es.bulk_surface_solve(z, l_value)
        lhs = es.l2_pair(u, z)
        rhs = es.energy_product(u, sz, l_value)
        assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))


def test_coupled_solution_converges_to_trace_constrained(es, rng):
    g = es.grid
    v = project_zero_mean(random_pair(g, rng))
    u0 = es.bulk_surface_solve(v, 0.0)
    diffs = []
    for l_value in (1.0, 0.1, 0.01):
        ul = es.bulk_surface_solve(v, l_value)
        d = FieldPair(
            BulkField(g, ul.bulk.values - u0.bulk.values),
            SurfField(g, ul.surf.values - u0.surf.values),
        )
        diffs.append(np.sqrt(es.l2_pair(d, d)))
    assert diffs[0] > diffs[1] > diffs[2]


def test_coupled_operator_symmetric_on_small_grid(rng):
    # explicit assembly of v -> S^L v as a matrix in the weighted pairing
    g = StripGrid(8, 5)
    es = EllipticSolvers(g)
    nb, ns = g.nx * g.ny, 2 * g.nx
    w = np.concatenate([g.bulk_weights.ravel(), g.surf_weights.ravel()])
    for l_value in (0.0, 1.0):
        cols = []
        for k in range(nb + ns):
            e = np.zeros(nb + ns)
            e[k] = 1.0
            v = project_zero_mean(
                FieldPair(BulkField(g, e[:nb].reshape(g.nx, g.ny)), SurfField(g, e[nb:].reshape(2, g.nx)))
            )
            u = es.bulk_surface_solve(v, l_value)
            cols.append(np.concatenate([u.bulk.values.ravel(), u.surf.values.ravel()]))
        mat = w[:, None] * np.column_stack(cols)
        assert np.max(np.abs(mat - mat.T)) < 1e-10
        eigvals = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        assert eigvals.min() > -1e-10


# -- dual norms -------------------------------------------------------------------


def test_dual_norm_of_zero(es):
    z = FieldPair.constant(es.grid, 0.0)
    for l_value in (0.0, 1.0):
        assert es.dual_norm(z, l_value) == 0.0
    assert es.dual_norm_bulk(BulkField.constant(es.grid, 0.0)) == 0.0
    assert es.dual_norm_surf(SurfField.constant(es.grid, 0.0)) == 0.0


def test_dual_norm_homogeneity(es, rng):
    g = es.grid
    v = project_zero_mean(random_pair(g, rng))
    cv = FieldPair(BulkField(g, -3.5 * v.bulk.values), SurfField(g, -3.5 * v.surf.values))
    for l_value in (0.0, 0.7, 5.0):
        assert es.dual_norm(cv, l_value) == pytest.approx(3.5 * es.dual_norm(v, l_value), rel=1e-12)


def test_dual_norm_positive_definite(es, rng):
    v = project_zero_mean(random_pair(es.grid, rng))
    assert es.dual_norm(v, 1.0) > 0.0


def test_dual_norm_consistent_with_lift(es, rng):
    # norm^2 == L2 pairing with the preimage == energy of the preimage
    g = es.grid
    for l_value in (0.0, 1.0, 10.0):
        v = project_zero_mean(random_pair(g, rng))
        u = es.bulk_surface_solve(v, l_value)
        n2 = es.dual_norm(v, l_value) ** 2
        assert n2 == pytest.approx(es.l2_pair(v, u), rel=1e-9)
        assert n2 == pytest.approx(es.energy_product(u, u, l_value), rel=1e-9)


def test_trace_constrained_norm_is_smallest(es, rng):
    # the coupled norm with any L > 0 dominates the L = 0 norm
    for _ in range(10):
        z = project_zero_mean(random_pair(es.grid, rng))
        n0 = es.dual_norm(z, 0.0)
        for l_value in (0.1, 1.0, 10.0):
            assert n0 <= es.dual_norm(z, l_value) * (1 + 1e-12)


def test_poincare_constant_stable_under_refinement(rng):
    # c_P = sup ||v||_dual / ||v||_L2 measured on random samples; grid
    # refinement must not blow it up (dual norms are h-uniform)
    ratios = {}
    for ny in (9, 17):
        g = StripGrid(2 * (ny - 1), ny)
        es = EllipticSolvers(g)
        best = 0.0
        for _ in range(20):
            v = project_zero_mean(random_pair(g, rng))
            best = max(best, es.dual_norm(v, 1.0) / np.sqrt(es.l2_pair(v, v)))
        ratios[ny] = best
    assert ratios[17] < 2.0 * ratios[9] + 0.1


def test_dual_norm_rejects_nonzero_mean(es):
    v = FieldPair.constant(es.grid, 0.5)
    with pytest.raises(ValueError):
        es.dual_norm(v, 1.0)
    with pytest.raises(ValueError):
        es.dual_norm_bulk(BulkField.constant(es.grid, 0.5))


def test_extended_norm_handles_nonzero_mean(es, rng):
    # the extended norm adds the mean in quadrature, so constants are legal
    g = es.grid
    v = random_pair(g, rng)
    m = generalized_mean(v)
    p = project_zero_mean(v)
    full = es.dual_norm_extended(v, 1.0)
    base = es.dual_norm(p, 1.0)
    assert full == pytest.approx(np.hypot(base, abs(m)), rel=1e-12)
