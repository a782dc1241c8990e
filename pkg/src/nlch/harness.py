"""Verification studies: convergence rates, kinetic limits, separation tracking.

Each sweep runs the same initial-value problem while varying exactly one
parameter, compares against a computed reference (smaller-eps run, or the
exact-constraint L = 0 / L = inf run), and fits a log-log slope:

* ``epsilon_sweep``            regularized vs near-limit run; expected order 1/2
* ``kinetic_sweep_zero``       finite L vs trace-constrained L = 0; order 1/2
* ``kinetic_sweep_infinity``   finite L vs impermeable L = inf; order 1/4 decay

Per-parameter errors come in two time norms: the max over stored snapshots of
a dual (inverse-elliptic) spatial norm, and the dt-weighted trapezoid of the
joint L^2 norm.  Sweeps toward a limit in the coupling use the coupled dual
norm; the L -> inf study uses separate bulk and surface dual norms (the limit
system is decoupled, and the component means differ between members and the
reference, so the extended per-component norms are the meaningful ones).

``separation_track`` and ``degiorgi_diagnostic`` read a stored trajectory and
report strict-separation margins and level-set decay; they never interpolate
between snapshots.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .elliptic import EllipticSolvers
from .geometry import BulkField, FieldPair, SurfField, trace
from .stepper import RunResult, SimConfig, Snapshot, System, run

__all__ = [
    "RateFit",
    "RateStudy",
    "SeparationReport",
    "DeGiorgiReport",
    "rate_fit",
    "epsilon_sweep",
    "kinetic_sweep_zero",
    "kinetic_sweep_infinity",
    "separation_track",
    "degiorgi_diagnostic",
    "chemical_potential_bound",
]


@dataclass(frozen=True)
class RateFit:
    """Ordinary least squares on (log x, log y)."""

    slope: float
    intercept: float
    residual_rms: float
    n_points: int


def rate_fit(xs, ys) -> RateFit:
    """Log-log OLS slope; rejects short, nonpositive, or degenerate data.

    Fits in base-10 logs, so ``residual_rms`` reads in orders of magnitude
    (the slope is base-invariant).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ValueError("rate_fit needs two equal-length 1-d sequences")
    if xs.size < 3:
        raise ValueError("rate_fit needs at least 3 points")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("rate_fit needs strictly positive data")
    lx, ly = np.log10(xs), np.log10(ys)
    if float(np.ptp(lx)) < 1e-12:
        raise ValueError("rate_fit abscissae are degenerate (all equal)")
    design = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ coef
    return RateFit(
        slope=float(coef[0]),
        intercept=float(coef[1]),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_points=int(xs.size),
    )


@dataclass(frozen=True)
class RateStudy:
    """One sweep: parameters, two error columns, and their log-log fits.

    ``fit_combined`` fits err_dual + err_l2, the sum the estimates bound.
    """

    name: str
    parameters: tuple[float, ...]
    err_dual: tuple[float, ...]
    err_l2: tuple[float, ...]
    fit_dual: RateFit
    fit_l2: RateFit
    fit_combined: RateFit
    meta: dict

    def to_csv(self) -> str:
        lines = ["parameter,err_dual,err_l2"]
        for p, ed, el in zip(self.parameters, self.err_dual, self.err_l2):
            lines.append(f"{p:.17g},{ed:.17g},{el:.17g}")
        lines.append(f"# study = {self.name}")
        for tag, fit in (
            ("dual", self.fit_dual),
            ("l2", self.fit_l2),
            ("combined", self.fit_combined),
        ):
            lines.append(f"# slope_{tag} = {fit.slope:.17g}")
            lines.append(f"# residual_{tag} = {fit.residual_rms:.17g}")
        for key in sorted(self.meta):
            lines.append(f"# {key} = {self.meta[key]}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


# -- run comparison plumbing ---------------------------------------------------


def _diff_pair(a: FieldPair, b: FieldPair) -> FieldPair:
    return FieldPair(
        BulkField(a.grid, a.bulk.values - b.bulk.values),
        SurfField(a.grid, a.surf.values - b.surf.values),
    )


def _paired_snapshots(a: RunResult, b: RunResult) -> list[tuple[float, Snapshot, Snapshot]]:
    if len(a.trajectory) != len(b.trajectory):
        raise ValueError("sweep members stored different numbers of snapshots")
    out = []
    for sa, sb in zip(a.trajectory, b.trajectory):
        if abs(sa.t - sb.t) > 1e-9 * max(1.0, abs(sa.t)):
            raise ValueError("sweep members stored snapshots at different times")
        out.append((sa.t, sa, sb))
    return out

def _error_norms(
    solvers: EllipticSolvers,
    member: RunResult,
    reference: RunResult,
    l_norm: float,
    split_components: bool,
) -> tuple[float, float]:
    """(max-in-time dual norm, dt-weighted L^2-in-time norm) of the difference."""
    times, l2_sq, dual_max = [], [], 0.0
    for t, sa, sb in _paired_snapshots(member, reference):
        d = _diff_pair(sa.phi, sb.phi)
        if split_components:
            dual = math.hypot(
                solvers.dual_norm_bulk_full(d.bulk), solvers.dual_norm_surf_full(d.surf)
            )
        else:
            dual = solvers.dual_norm_extended(d, l_norm)
        dual_max = max(dual_max, dual)
        times.append(t)
        l2_sq.append(solvers.l2_pair(d, d))
    err_l2 = math.sqrt(max(0.0, float(np.trapezoid(np.asarray(l2_sq), np.asarray(times)))))
    return dual_max, err_l2


def _run_members(system: System, cfgs: list[SimConfig], initial: FieldPair, jobs: int):
    # materialize shared caches before any pool touches them
    system.discrete, system.conv_bulk_w, system.conv_surf_w, system.eps_star
    if jobs <= 1:
        return [run(cfg, system, initial) for cfg in cfgs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda c: run(c, system, initial), cfgs))


def _validate_params(values, what: str) -> list[float]:
    vals = [float(v) for v in values]
    if len(vals) < 3:
        raise ValueError(f"{what} sweep needs at least 3 values")
    if len(set(vals)) != len(vals):
        raise ValueError(f"{what} sweep values must be distinct")
    return vals


def _positive_errors(errs, what: str) -> None:
    if any(not e > 0.0 for e in errs):
        raise ValueError(f"degenerate {what} sweep: some errors are not strictly positive")


def _study(name, params, errs_dual, errs_l2, meta) -> RateStudy:
    combined = [d + l for d, l in zip(errs_dual, errs_l2)]
    return RateStudy(
        name=name,
        parameters=tuple(params),
        err_dual=tuple(errs_dual),
        err_l2=tuple(errs_l2),
        fit_dual=rate_fit(params, errs_dual),
        fit_l2=rate_fit(params, errs_l2),
        fit_combined=rate_fit(params, combined),
        meta=meta,
    )


def _base_meta(system: System, cfg: SimConfig, extra: dict | None) -> dict:
    g = system.grid
    meta = {
        "grid": f"{g.nx}x{g.ny}",
        "lx": f"{g.lx:.17g}",
        "ly": f"{g.ly:.17g}",
        "dt": f"{cfg.dt:.17g}",
        "t_end": f"{cfg.t_end:.17g}",
        "scheme": cfg.scheme,
        "snapshot_stride": str(cfg.snapshot_stride),
    }
    if extra:
        meta.update({str(k): str(v) for k, v in extra.items()})
    return meta


# -- the three sweeps ----------------------------------------------------------


def epsilon_sweep(
    system: System,
    cfg: SimConfig,
    initial: FieldPair,
    eps_list,
    eps_ref: float,
    jobs: int = 1,
    meta: dict | None = None,
) -> RateStudy:
    """Regularization error against a much-smaller-eps reference run.

    The reference must satisfy eps_ref <= min(eps_list)/16, so by the Cauchy
    bound the reference's own distance to the limit is at most a quarter of
    the smallest member error scale and does not pollute the fitted slope.
    """
    eps_vals = sorted(_validate_params(eps_list, "eps"), reverse=True)
    eps_ref = float(eps_ref)
    if not eps_ref > 0.0:
        raise ValueError("eps_ref must be positive")
    if eps_ref > min(eps_vals) / 16.0:
        raise ValueError("eps_ref must be at most min(eps_list)/16")
    for e in [*eps_vals, eps_ref]:
        if not e < system.eps_star:
            raise ValueError(f"eps={e} is not below eps_star={system.eps_star}")

    cfgs = [replace(cfg, eps=e) for e in [*eps_vals, eps_ref]]
    results = _run_members(system, cfgs, initial, jobs)
    reference = results[-1]
    solvers = EllipticSolvers(system.grid)
    split = math.isinf(cfg.l_value)
    errs = [
        _error_norms(solvers, res, reference, cfg.l_value, split) for res in results[:-1]
    ]
    errs_dual = [e[0] for e in errs]
    errs_l2 = [e[1] for e in errs]
    _positive_errors(errs_dual, "eps")
    _positive_errors(errs_l2, "eps")
    full_meta = _base_meta(system, cfg, meta)
    full_meta.update({"l_value": f"{cfg.l_value:.17g}", "eps_ref": f"{eps_ref:.17g}"})
    return _study("epsilon-sweep", eps_vals, errs_dual, errs_l2, full_meta)


def kinetic_sweep_zero(
    system: System,
    cfg: SimConfig,
    initial: FieldPair,
    l_list,
    jobs: int = 1,
    meta: dict | None = None,
) -> RateStudy:
    """Finite-L runs against the exact trace-constrained L = 0 run.

    Errors are measured in the L = 0 coupled dual norm (the weakest norm of
    the family, the one the limit estimate is stated in).
    """
    l_vals = sorted(_validate_params(l_list, "kinetic"), reverse=True)
    if any(not 0.0 < lv <= 1.0 for lv in l_vals):
        raise ValueError("kinetic_sweep_zero needs L values in (0, 1]")

    cfgs = [replace(cfg, l_value=lv) for lv in l_vals] + [replace(cfg, l_value=0.0)]
    results = _run_members(system, cfgs, initial, jobs)
    reference = results[-1]
    solvers = EllipticSolvers(system.grid)
    errs = [_error_norms(solvers, res, reference, 0.0, False) for res in results[:-1]]
    errs_dual = [e[0] for e in errs]
    errs_l2 = [e[1] for e in errs]
    _positive_errors(errs_dual, "kinetic")
    _positive_errors(errs_l2, "kinetic")
    full_meta = _base_meta(system, cfg, meta)
    full_meta.update({"eps": f"{cfg.eps:.17g}", "reference": "L=0"})
    return _study("kinetic-sweep-zero", l_vals, errs_dual, errs_l2, full_meta)


def kinetic_sweep_infinity(
    system: System,
    cfg: SimConfig,
    initial: FieldPair,
    l_list,
    l_floor: float = 10.0,
    jobs: int = 1,
    meta: dict | None = None,
) -> RateStudy:
    """Finite-L runs against the exact impermeable L = inf run.

    The fitted slope is negative (errors decay in L); the decay order is its
    negation and lands in the meta block alongside the raw value.
    """
    l_vals = sorted(_validate_params(l_list, "kinetic"))
    if any(math.isinf(lv) or lv < l_floor for lv in l_vals):
        raise ValueError(f"kinetic_sweep_infinity needs finite L values >= {l_floor}")

    cfgs = [replace(cfg, l_value=lv) for lv in l_vals] + [replace(cfg, l_value=math.inf)]
    results = _run_members(system, cfgs, initial, jobs)
    reference = results[-1]
    solvers = EllipticSolvers(system.grid)
    errs = [_error_norms(solvers, res, reference, 0.0, True) for res in results[:-1]]
    errs_dual = [e[0] for e in errs]
    errs_l2 = [e[1] for e in errs]
    _positive_errors(errs_dual, "kinetic")
    _positive_errors(errs_l2, "kinetic")
    study_meta = _base_meta(system, cfg, meta)
    study_meta.update({"eps": f"{cfg.eps:.17g}", "reference": "L=inf", "l_floor": f"{l_floor:.17g}"})
    combined_fit = rate_fit(l_vals, [d + l for d, l in zip(errs_dual, errs_l2)])
    study_meta["decay_order_combined"] = f"{-combined_fit.slope:.17g}"
    return _study("kinetic-sweep-infinity", l_vals, errs_dual, errs_l2, study_meta)


# -- separation ----------------------------------------------------------------


@dataclass(frozen=True)
class SeparationReport:
    """Per-snapshot separation margins with infima over [tau, T].

    delta_* = 1 - max|phase|; positive infima certify strict separation.
    The sup norms of the potentials over the same window feed the a-priori
    bound cross-check (``chemical_potential_bound``).
    """

    tau: float
    t: np.ndarray
    delta_bulk: np.ndarray
    delta_surf: np.ndarray
    mu_inf: np.ndarray
    theta_inf: np.ndarray
    delta_bulk_min: float
    delta_surf_min: float
    mu_sup: float
    theta_sup: float

    def to_csv(self) -> str:
        lines = ["t,delta_bulk,delta_surf,mu_inf,theta_inf"]
        for k in range(self.t.size):
            lines.append(
                f"{self.t[k]:.17g},{self.delta_bulk[k]:.17g},{self.delta_surf[k]:.17g},"
                f"{self.mu_inf[k]:.17g},{self.theta_inf[k]:.17g}"
            )
        lines.append(f"# tau = {self.tau:.17g}")
        lines.append(f"# delta_bulk_min = {self.delta_bulk_min:.17g}")
        lines.append(f"# delta_surf_min = {self.delta_surf_min:.17g}")
        lines.append(f"# mu_sup = {self.mu_sup:.17g}")
        lines.append(f"# theta_sup = {self.theta_sup:.17g}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


def separation_track(trajectory, tau: float) -> SeparationReport:
    """Margins 1 - max|phase| along a trajectory; infima taken over t >= tau.

    Accepts a RunResult or a plain snapshot sequence.  All statistics come
    from stored snapshots; nothing is interpolated.
    """
    snaps = trajectory.trajectory if isinstance(trajectory, RunResult) else list(trajectory)
    if not snaps:
        raise ValueError("empty trajectory")
    t = np.array([s.t for s in snaps])
    if not tau < t[-1]:
        raise ValueError(f"tau={tau} must lie before the final snapshot time {t[-1]}")
    delta_bulk = np.array([1.0 - float(np.abs(s.phi.bulk.values).max()) for s in snaps])
    delta_surf = np.array([1.0 - float(np.abs(s.phi.surf.values).max()) for s in snaps])
    mu_inf = np.array([float(np.abs(s.mu.bulk.values).max()) for s in snaps])
    theta_inf = np.array([float(np.abs(s.mu.surf.values).max()) for s in snaps])
    tail = t >= tau - 1e-12
    return SeparationReport(
        tau=float(tau),
        t=t,
        delta_bulk=delta_bulk,
        delta_surf=delta_surf,
        mu_inf=mu_inf,
        theta_inf=theta_inf,
        delta_bulk_min=float(delta_bulk[tail].min()),
        delta_surf_min=float(delta_surf[tail].min()),
        mu_sup=float(mu_inf[tail].max()),
        theta_sup=float(theta_inf[tail].max()),
    )


def chemical_potential_bound(system: System, delta: float, side: str = "bulk") -> float:
    """Sup bound on the chemical potential implied by separation margin delta:
    kernel-integral sup + kernel L^1 mass + |beta| at the separation level +
    sup of the perturbation over the physical interval."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if side == "bulk":
        spec, pot, a_max, dim = system.ops.spec_j, system.pot_bulk, system.ops.a_bulk_max, 2
    elif side == "surf":
        spec, pot, a_max, dim = system.ops.spec_k, system.pot_surf, system.ops.a_surf_max, 1
    else:
        raise ValueError("side must be 'bulk' or 'surf'")
    level = 1.0 - delta
    beta_max = max(abs(float(np.asarray(pot.beta(level)))), abs(float(np.asarray(pot.beta(-level)))))
    pi_max = float(np.abs(pot.pi(np.linspace(-1.0, 1.0, 4001))).max())
    return a_max + spec.full_mass(dim) + beta_max + pi_max


# -- level-set decay diagnostic -------------------------------------------------


@dataclass(frozen=True)
class DeGiorgiReport:
    """Level-set measures y_n on shrinking time windows and rising levels.

    y_n integrates (in time, fixed per-snapshot weights) the measure of the
    sets {phi > kappa_n}, {psi > kappa_n} and {trace phi > kappa_n} over
    [t_n, T].  Windows nest and levels rise, so y is nonincreasing exactly.
    ``geometric`` flags whether each positive y dropped by at least the
    configured ratio, the discrete shadow of the superlinear-decay lemma.
    """

    levels: np.ndarray
    times: np.ndarray
    y: np.ndarray
    ratios: np.ndarray
    geometric: bool

    def to_csv(self) -> str:
        lines = ["n,t_n,kappa_n,y_n"]
        for n in range(self.y.size):
            lines.append(f"{n},{self.times[n]:.17g},{self.levels[n]:.17g},{self.y[n]:.17g}")
        lines.append(f"# geometric = {self.geometric}")
        return "\n".join(lines) + "\n"


def degiorgi_diagnostic(
    trajectory,
    t_final: float,
    tau_tilde: float,
    delta: float,
    n_max: int = 8,
    geometric_ratio: float = 0.5,
) -> DeGiorgiReport:
    """Discrete level-set iteration on a stored trajectory.

    Window starts t_n = t_final - tau_tilde - tau_tilde/2^n climb toward
    t_final - tau_tilde; levels kappa_n = 1 - delta - delta/2^n climb toward
    1 - delta.  Every window must contain at least two snapshots.
    """
    snaps = trajectory.trajectory if isinstance(trajectory, RunResult) else list(trajectory)
    if not snaps:
        raise ValueError("empty trajectory")
    if not (0.0 < delta < 0.5):
        raise ValueError("delta must lie in (0, 0.5)")
    if not tau_tilde > 0.0:
        raise ValueError("tau_tilde must be positive")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    t = np.array([s.t for s in snaps])
    if t_final > t[-1] + 1e-12:
        raise ValueError("t_final exceeds the stored trajectory")
    if t_final - 2.0 * tau_tilde < t[0] - 1e-12:
        raise ValueError("trajectory does not cover [t_final - 2*tau_tilde, t_final]")

    # fixed per-snapshot weights keep the nesting inequality exact
    weights = np.diff(t, prepend=t[0])
    in_horizon = t <= t_final + 1e-12

    ns = np.arange(n_max + 1)
    times = t_final - tau_tilde - tau_tilde * 0.5**ns
    levels = 1.0 - delta - delta * 0.5**ns

    g = snaps[0].phi.grid
    wb = g.bulk_weights
    ws = g.surf_weights
    y = np.empty(n_max + 1)
    for n in range(n_max + 1):
        window = in_horizon & (t >= times[n] - 1e-12)
        if int(np.count_nonzero(window)) < 2:
            raise ValueError(
                f"insufficient snapshot density: window n={n} holds fewer than 2 snapshots"
            )
        total = 0.0
        for j in np.nonzero(window)[0]:
            s = snaps[j]
            bulk_meas = float(np.sum(wb[s.phi.bulk.values > levels[n]]))
            surf_meas = float(np.sum(ws[s.phi.surf.values > levels[n]]))
            trace_meas = float(np.sum(ws[trace(s.phi.bulk).values > levels[n]]))
            total += weights[j] * (bulk_meas + surf_meas + trace_meas)
        y[n] = total

    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(y[:-1] > 0.0, y[1:] / y[:-1], 0.0)
    geometric = bool(np.all((y[1:] == 0.0) | (ratios <= geometric_ratio)))
    return DeGiorgiReport(levels=levels, times=times, y=y, ratios=ratios, geometric=geometric)
