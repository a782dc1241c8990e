"""Verification-harness contracts: slope fits, sweeps, separation, level sets."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlch import (
    BulkField,
    FieldPair,
    SimConfig,
    Snapshot,
    SurfField,
    YosidaOps,
    chemical_potential_bound,
    degiorgi_diagnostic,
    epsilon_sweep,
    kinetic_sweep_infinity,
    kinetic_sweep_zero,
    make_initial,
    rate_fit,
    run,
    separation_track,
    yosida,
)


def sweep_cfg(**kw):
    base = dict(dt=1e-3, t_end=0.02, eps=0.05, l_value=1.0, snapshot_stride=5)
    base.update(kw)
    return SimConfig(**base)


def const_snapshot(grid, t, phi_val, mu_val=0.0):
    phi = FieldPair.constant(grid, phi_val)
    mu = FieldPair.constant(grid, mu_val)
    return Snapshot(t, phi, mu)


# -- log-log slope fits -------------------------------------------------------------


def test_rate_fit_identity_and_sqrt():
    xs = np.array([0.1, 0.2, 0.4, 0.8])
    fit = rate_fit(xs, xs)
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)
    assert fit.residual_rms == pytest.approx(0.0, abs=1e-12)
    assert fit.n_points == 4
    fit = rate_fit(xs, np.sqrt(xs))
    assert fit.slope == pytest.approx(0.5, abs=1e-12)


def test_rate_fit_with_small_noise():
    rng = np.random.default_rng(99)
    xs = np.logspace(-3, -1, 9)
    ys = np.sqrt(xs) * (1.0 + 0.01 * rng.uniform(-1.0, 1.0, xs.size))
    fit = rate_fit(xs, ys)
    assert abs(fit.slope - 0.5) < 0.02
    assert fit.residual_rms < 0.01


def test_rate_fit_rejections():
    with pytest.raises(ValueError):
        rate_fit([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        rate_fit([1.0, 2.0, 3.0], [1.0, -2.0, 3.0])
    with pytest.raises(ValueError):
        rate_fit([0.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        rate_fit([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        rate_fit([1.0, 2.0, 3.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        rate_fit(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=100, deadline=None)
@given(
    p=st.floats(-3.0, 3.0),
    c=st.floats(1e-3, 1e3),
    n=st.integers(3, 12),
)
def test_rate_fit_recovers_exact_power_laws(p, c, n):
    xs = np.logspace(-2.0, 1.0, n)
    fit = rate_fit(xs, c * xs**p)
    assert fit.slope == pytest.approx(p, abs=1e-7)
    assert fit.intercept == pytest.approx(math.log10(c), abs=1e-7)
    assert fit.residual_rms < 1e-9


def test_rate_fit_quarter_order_synthetic():
    ls = np.array([10.0, 20.0, 40.0, 80.0])
    fit = rate_fit(ls, 3.0 * ls**-0.25)
    assert fit.slope == pytest.approx(-0.25, abs=1e-12)


# -- parameter sweeps ----------------------------------------------------------------


def test_epsilon_sweep_guards(system):
    pair = make_initial(system.grid, "perturbed", m=0.1, amplitude=0.4, seed=11)
    cfg = sweep_cfg()
    with pytest.raises(ValueError, match="eps_ref"):
        epsilon_sweep(system, cfg, pair, [0.04, 0.02, 0.01], eps_ref=0.002)
    with pytest.raises(ValueError, match="eps_star"):
        epsilon_sweep(system, cfg, pair, [0.2, 0.1, 0.05], eps_ref=0.05 / 16)
    with pytest.raises(ValueError, match="at least 3"):
        epsilon_sweep(system, cfg, pair, [0.04, 0.02], eps_ref=1e-3)
    with pytest.raises(ValueError, match="distinct"):
        epsilon_sweep(system, cfg, pair, [0.04, 0.04, 0.02], eps_ref=1e-3)
    with pytest.raises(ValueError, match="positive"):
        epsilon_sweep(system, cfg, pair, [0.04, 0.02, 0.01], eps_ref=0.0)


def test_epsilon_sweep_errors_shrink_with_eps(system):
    pair = make_initial(system.grid, "perturbed", m=0.1, amplitude=0.4, seed=11)
    study = epsilon_sweep(
        system, sweep_cfg(), pair, [0.04, 0.02, 0.01], eps_ref=0.01 / 16.0
    )
    assert study.parameters == (0.04, 0.02, 0.01)
    assert all(e > 0.0 for e in study.err_dual)
    assert study.err_dual[-1] < study.err_dual[0]
    assert study.err_l2[-1] < study.err_l2[0]
    assert study.fit_dual.slope > 0.3
    assert study.meta["eps_ref"] == f"{0.01 / 16.0:.17g}"
    assert study.meta["grid"] == "32x17"


def test_kinetic_sweep_zero_guards_and_trend(system):
    pair = make_initial(system.grid, "perturbed", m=0.1, amplitude=0.4, seed=11)
    cfg = sweep_cfg()
    with pytest.raises(ValueError, match="in \\(0, 1\\]"):
        kinetic_sweep_zero(system, cfg, pair, [1.0, 0.5, 0.0])
    with pytest.raises(ValueError, match="in \\(0, 1\\]"):
        kinetic_sweep_zero(system, cfg, pair, [2.0, 1.0, 0.5])
    study = kinetic_sweep_zero(system, cfg, pair, [0.25, 0.0625, 0.015625])
    assert study.parameters == (0.25, 0.0625, 0.015625)
    assert study.err_dual[-1] < study.err_dual[0]
    assert study.fit_combined.slope > 0.3
    assert study.meta["reference"] == "L=0"


def test_kinetic_sweep_infinity_decay_and_meta(system):
    pair = make_initial(system.grid, "perturbed", m=0.1, amplitude=0.4, seed=11)
    cfg = sweep_cfg()
    with pytest.raises(ValueError, match=">="):
        kinetic_sweep_infinity(system, cfg, pair, [5.0, 20.0, 40.0])
    with pytest.raises(ValueError, match=">="):
        kinetic_sweep_infinity(system, cfg, pair, [10.0, 20.0, math.inf])
    study = kinetic_sweep_infinity(system, cfg, pair, [10.0, 20.0, 40.0])
    assert study.parameters == (10.0, 20.0, 40.0)
    assert study.err_dual[-1] < study.err_dual[0]
    assert study.fit_combined.slope < 0.0
    assert study.meta["decay_order_combined"] == f"{-study.fit_combined.slope:.17g}"
    assert study.meta["reference"] == "L=inf"


def test_sweep_is_deterministic_across_jobs(system):
    pair = make_initial(system.grid, "perturbed", m=0.1, amplitude=0.4, seed=11)
    cfg = sweep_cfg()
    a = kinetic_sweep_zero(system, cfg, pair, [1.0, 0.5, 0.25], jobs=1)
    b = kinetic_sweep_zero(system, cfg, pair, [1.0, 0.5, 0.25], jobs=3)
    assert a.to_csv() == b.to_csv()


def test_study_csv_layout(system):
    pair = make_initial(system.grid, "perturbed", m=0.1, amplitude=0.4, seed=11)
    study = kinetic_sweep_zero(system, sweep_cfg(), pair, [1.0, 0.5, 0.25])
    lines = study.to_csv().splitlines()
    assert lines[0] == "parameter,err_dual,err_l2"
    assert len([ln for ln in lines if not ln.startswith("#")]) == 4
    assert "# study = kinetic-sweep-zero" in lines
    assert any(ln.startswith("# slope_combined = ") for ln in lines)
    assert any(ln.startswith("# residual_dual = ") for ln in lines)
    row = lines[1].split(",")
    assert float(row[0]) == 1.0 and float(row[1]) == study.err_dual[0]


# -- separation tracking --------------------------------------------------------------


def test_separation_margins_on_synthetic_snapshots(grid):
    snaps = [
        const_snapshot(grid, 0.0, 0.9, mu_val=3.0),
        const_snapshot(grid, 0.1, 0.5, mu_val=-2.0),
        const_snapshot(grid, 0.2, -0.4, mu_val=1.0),
    ]
    rep = separation_track(snaps, tau=0.05)
    assert np.allclose(rep.delta_bulk, [0.1, 0.5, 0.6])
    assert np.allclose(rep.delta_surf, rep.delta_bulk)
    assert rep.delta_bulk_min == pytest.approx(0.5)
    assert rep.mu_sup == pytest.approx(2.0)
    assert rep.theta_sup == pytest.approx(2.0)
    # widening the window to include t=0 drags the infimum down
    rep_full = separation_track(snaps, tau=0.0)
    assert rep_full.delta_bulk_min == pytest.approx(0.1)
    assert rep_full.mu_sup == pytest.approx(3.0)


def test_separation_track_guards(grid):
    with pytest.raises(ValueError):
        separation_track([], tau=0.0)
    snaps = [const_snapshot(grid, 0.0, 0.2), const_snapshot(grid, 0.1, 0.2)]
    with pytest.raises(ValueError):
        separation_track(snaps, tau=0.1)


def test_separation_track_on_stationary_run(system):
    cfg = SimConfig(dt=1e-3, t_end=0.01, eps=0.05, l_value=1.0)
    res = run(cfg, system, make_initial(system.grid, "uniform", m=0.2))
    rep = separation_track(res, tau=0.005)
    assert rep.delta_bulk_min == pytest.approx(0.8, abs=1e-10)
    assert rep.delta_surf_min == pytest.approx(0.8, abs=1e-10)
    y = YosidaOps(system.pot_bulk, cfg.eps, system.eps_star)
    mu_const = float(yosida(y, 0.2) + system.pot_bulk.pi(0.2))
    assert rep.mu_sup == pytest.approx(abs(mu_const), abs=1e-9)
    assert "# delta_bulk_min = " in rep.to_csv()


def test_chemical_potential_bound_formula(system):
    pot = system.pot_bulk
    delta = 0.25
    level = 1.0 - delta
    want = (
        float(system.ops.a_bulk_max)
        + system.ops.spec_j.full_mass(2)
        + max(abs(float(pot.beta(level))), abs(float(pot.beta(-level))))
        + float(np.abs(pot.pi(np.linspace(-1.0, 1.0, 4001))).max())
    )
    assert chemical_potential_bound(system, delta, "bulk") == pytest.approx(want, rel=1e-12)
    # tighter separation admits a larger potential excursion bound
    assert chemical_potential_bound(system, 0.01, "bulk") > chemical_potential_bound(
        system, 0.5, "bulk"
    )
    assert chemical_potential_bound(system, delta, "surf") > 0.0
    with pytest.raises(ValueError):
        chemical_potential_bound(system, 0.0)
    with pytest.raises(ValueError):
        chemical_potential_bound(system, 1.0)
    with pytest.raises(ValueError):
        chemical_potential_bound(system, 0.5, "edge")


# -- level-set decay diagnostic --------------------------------------------------------


def test_degiorgi_separated_trajectory_is_identically_zero(grid):
    snaps = [const_snapshot(grid, t, 0.5) for t in np.linspace(0.0, 1.0, 41)]
    rep = degiorgi_diagnostic(snaps, t_final=1.0, tau_tilde=0.25, delta=0.2)
    assert np.all(rep.y == 0.0)
    assert np.all(rep.ratios == 0.0)
    assert rep.geometric


def test_degiorgi_window_and_level_schedules(grid):
    snaps = [const_snapshot(grid, t, 0.0) for t in np.linspace(0.0, 1.0, 41)]
    rep = degiorgi_diagnostic(snaps, t_final=1.0, tau_tilde=0.25, delta=0.2, n_max=5)
    ns = np.arange(6)
    assert np.allclose(rep.times, 0.75 - 0.25 * 0.5**ns)
    assert np.allclose(rep.levels, 0.8 - 0.2 * 0.5**ns)


def test_degiorgi_nesting_is_exact_and_geometric_flag(grid):
    # deterministic bands: the measure above level n shrinks by exactly 4x,
    # so every ratio sits well under the 0.5 default
    delta = 0.2
    ns = np.arange(9)
    levels = 1.0 - delta - delta * 0.5**ns
    vals = np.zeros((grid.nx, grid.ny))
    interior = [(i, j) for i in range(grid.nx) for j in range(1, grid.ny - 1)]
    counts = [192, 48, 12, 3]  # cells sitting between consecutive levels
    k = 0
    for n, cnt in enumerate(counts):
        mid = 0.5 * (levels[n] + levels[n + 1])
        for _ in range(cnt):
            i, j = interior[k]
            vals[i, j] = mid
            k += 1
    phi = FieldPair(BulkField(grid, vals), SurfField.constant(grid, 0.0))
    mu = FieldPair.constant(grid, 0.0)
    snaps = [Snapshot(t, phi, mu) for t in np.linspace(0.0, 1.0, 201)]
    rep = degiorgi_diagnostic(snaps, t_final=1.0, tau_tilde=0.25, delta=delta)
    assert rep.y[0] > 0.0
    assert np.all(np.diff(rep.y) <= 0.0)
    assert rep.geometric
    # the same field fails the flag if the demanded drop is unachievable
    strict = degiorgi_diagnostic(
        snaps, t_final=1.0, tau_tilde=0.25, delta=delta, geometric_ratio=0.01
    )
    assert not strict.geometric


def test_degiorgi_guards(grid):
    snaps = [const_snapshot(grid, t, 0.5) for t in np.linspace(0.0, 1.0, 41)]
    with pytest.raises(ValueError):
        degiorgi_diagnostic([], 1.0, 0.25, 0.2)
    with pytest.raises(ValueError):
        degiorgi_diagnostic(snaps, 1.0, 0.25, 0.5)
    with pytest.raises(ValueError):
        degiorgi_diagnostic(snaps, 1.0, 0.0, 0.2)
    with pytest.raises(ValueError):
        degiorgi_diagnostic(snaps, 1.0, 0.25, 0.2, n_max=0)
    with pytest.raises(ValueError):
        degiorgi_diagnostic(snaps, 2.0, 0.25, 0.2)
    with pytest.raises(ValueError):
        degiorgi_diagnostic(snaps, 1.0, 0.6, 0.2)
    sparse = [const_snapshot(grid, t, 0.5) for t in (0.0, 0.6, 1.0)]
    with pytest.raises(ValueError, match="snapshot density"):
        degiorgi_diagnostic(sparse, 1.0, 0.25, 0.2)
