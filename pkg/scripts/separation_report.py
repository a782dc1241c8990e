"""Track strict separation from +-1 along a run and cross-check the bounds.

Usage: python3 scripts/separation_report.py [--t-end 0.5] [--tau 0.05] [--out DIR]

Runs with the exact logarithmic entropy (eps = 0), reports the infimum
margins 1 - max|phase| over t >= tau, compares the observed potential sup
norms against the a-priori bound, and prints the level-set decay diagnostic.
"""

import argparse
from pathlib import Path

import numpy as np

from nlch import (
    BulkField,
    FieldPair,
    KernelSpec,
    SimConfig,
    StripGrid,
    System,
    build_kernel_ops,
    chemical_potential_bound,
    degiorgi_diagnostic,
    logarithmic,
    run,
    separation_track,
    trace,
)


def multimode_pair(grid: StripGrid) -> FieldPair:
    # smooth wall-damped modes, rescaled so max|phi| = 0.98
    x, y = grid.x[:, None], grid.y[None, :]
    f = (
        0.7 * np.sin(2 * np.pi * x)
        + 0.4 * np.cos(4 * np.pi * x + 1.0)
        + 0.25 * np.sin(6 * np.pi * x + 2.0)
    ) * np.sin(np.pi * y) + 0.35 * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)
    bulk = BulkField(grid, 0.98 * f / np.abs(f.ravel()).max())
    return FieldPair(bulk, trace(bulk))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=32)
    ap.add_argument("--ny", type=int, default=17)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--t-end", type=float, default=0.5)
    ap.add_argument("--tau", type=float, default=0.05)
    ap.add_argument("--l-value", type=float, default=1.0)
    ap.add_argument("--out", default=None, help="directory for separation.csv")
    args = ap.parse_args()

    grid = StripGrid(args.nx, args.ny)
    system = System(
        grid,
        build_kernel_ops(
            grid, KernelSpec("gaussian", 0.15, 2.0), KernelSpec("gaussian", 0.15, 1.5)
        ),
        logarithmic(0.5, 0.75),
        logarithmic(0.5, 0.75),
    )
    cfg = SimConfig(
        dt=args.dt, t_end=args.t_end, eps=0.0, l_value=args.l_value, snapshot_stride=5
    )
    res = run(cfg, system, multimode_pair(grid))
    rep = separation_track(res, tau=args.tau)

    mu_bound = chemical_potential_bound(system, rep.delta_bulk_min, "bulk")
    th_bound = chemical_potential_bound(system, rep.delta_surf_min, "surf")
    print(f"delta_bulk_min = {rep.delta_bulk_min:.6f}")
    print(f"delta_surf_min = {rep.delta_surf_min:.6f}")
    print(f"mu_sup    = {rep.mu_sup:.6f}  (bound {mu_bound:.4f})")
    print(f"theta_sup = {rep.theta_sup:.6f}  (bound {th_bound:.4f})")

    delta = min(0.5 * rep.delta_bulk_min, 0.45)
    dg = degiorgi_diagnostic(
        res.trajectory, t_final=args.t_end, tau_tilde=args.tau, delta=delta, n_max=6
    )
    ys = ", ".join(f"{y:.3e}" for y in dg.y)
    print(f"level-set measures (delta {delta:.4f}): {ys}")
    print(f"geometric decay: {dg.geometric}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rep.write_csv(out / "separation.csv")
        print(f"CSV -> {out / 'separation.csv'}")


if __name__ == "__main__":
    main()
