"""Run the three convergence studies and print their fitted orders.

Usage: python3 scripts/rate_report.py [--jobs 3] [--t-end 0.2] [--out DIR]

Covers the regularization limit (eps -> 0) and both kinetic limits
(L -> 0 with rate sqrt(L), L -> inf with rate 1/L^(1/4)).  With --out,
each study's CSV is written alongside the printed summary.
"""

import argparse
from pathlib import Path

from nlch import (
    KernelSpec,
    SimConfig,
    StripGrid,
    System,
    build_kernel_ops,
    epsilon_sweep,
    kinetic_sweep_infinity,
    kinetic_sweep_zero,
    logarithmic,
    make_initial,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=32)
    ap.add_argument("--ny", type=int, default=17)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--t-end", type=float, default=0.2)
    ap.add_argument("--jobs", type=int, default=3)
    ap.add_argument("--out", default=None, help="directory for the study CSVs")
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
        dt=args.dt, t_end=args.t_end, eps=0.05, l_value=1.0, snapshot_stride=10
    )
    quiet = make_initial(grid, "tanh-interface", position=0.5, width=0.1)
    noisy = make_initial(grid, "perturbed", m=0.0, amplitude=0.5, seed=1234)

    studies = [
        epsilon_sweep(
            system, cfg, quiet, [1e-1, 3e-2, 1e-2, 3e-3, 1e-3], eps_ref=1e-3 / 16,
            jobs=args.jobs,
        ),
        kinetic_sweep_zero(
            system, cfg, quiet, [1.0, 0.3, 0.1, 0.03, 0.01], jobs=args.jobs
        ),
        kinetic_sweep_infinity(
            system, cfg, noisy, [10.0, 30.0, 100.0, 300.0, 1000.0], jobs=args.jobs
        ),
    ]
    print(f"{'study':<24} {'slope':>8} {'residual':>9}  expectation")
    expect = {
        "epsilon-sweep": "~ 0.5 (sqrt eps)",
        "kinetic-sweep-zero": "~ 0.5 (sqrt L)",
        "kinetic-sweep-infinity": "<= -0.25 (1/L^(1/4))",
    }
    for study in studies:
        fit = study.fit_combined
        print(
            f"{study.name:<24} {fit.slope:>8.4f} {fit.residual_rms:>9.4f}"
            f"  {expect.get(study.name, '')}"
        )
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            study.write_csv(out / f"rate-{study.name}.csv")
    if args.out:
        print(f"CSVs -> {args.out}")


if __name__ == "__main__":
    main()
