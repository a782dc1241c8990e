"""Semi-implicit time integration of the coupled bulk-surface nonlocal system.

One step advances (phi, psi, mu, theta, q) monolithically:

    (phi' - phi)/dt = Lap mu'            with wall datum q',
    (psi' - psi)/dt = Lap_G theta' - q',
    mu'    = a_Omega phi' + beta_eps(phi') - [J*phi] + [pi(phi)],
    theta' = a_Gamma psi' + beta_G,eps(psi') - [K@psi] + [pi_G(psi)],
    L q' = theta' - mu'|_G   (finite L;  L = 0: theta' = mu'|_G;  L = inf: q' = 0),

where bracketed terms are explicit (previous step) in the default
convex-concave split and implicit in the ``fully-implicit`` scheme.  The
split treats the convex energy part (a_Omega quadratic + Moreau entropy)
implicitly and the concave part (-J* quadratic + concave perturbation)
explicitly, which makes the energy decay unconditional for positive-definite
kernels.  Transport rows are linear, so Newton satisfies them to solver
roundoff from the first iterate onward; total mass drift per step is at the
level of the LU backward error, orders below the Newton tolerance.

Newton failures reject the step and retry with halved dt (recursively, up to
``max_halvings``); the outer time grid never changes, so ledgers from runs
with identical configs stay aligned row by row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import DiscreteOperators, assemble_operators
from .errors import AssumptionViolation, SolverFailure
from .geometry import (
    BulkField,
    FieldPair,
    StripGrid,
    SurfField,
    generalized_mean,
    mean_bulk,
    mean_surf,
    trace,
)
from .kernels import KernelOps
from .potentials import SingularSplit, YosidaOps, check_assumptions, eps_star_bound, resolvent

__all__ = [
    "System",
    "SimConfig",
    "State",
    "Snapshot",
    "LedgerRow",
    "StepLedger",
    "RunResult",
    "make_initial",
    "initial_state",
    "energy",
    "step",
    "run",
]

_SCHEMES = ("convex-split", "fully-implicit")


@dataclass(frozen=True)
class System:
    """Physical setup shared by every run: grid, kernels, potential splits."""

    grid: StripGrid
    ops: KernelOps
    pot_bulk: SingularSplit
    pot_surf: SingularSplit

    def __post_init__(self) -> None:
        if self.ops.grid != self.grid:
            raise ValueError("kernel operators were assembled on a different grid")

    @cached_property
    def eps_star(self) -> float:
        return eps_star_bound(
            self.ops.spec_j.full_mass(2),
            self.ops.spec_k.full_mass(1),
            self.pot_bulk.gamma,
            self.pot_surf.gamma,
        )

    @cached_property
    def discrete(self) -> DiscreteOperators:
        return assemble_operators(self.grid)

    @cached_property
    def conv_bulk_w(self) -> np.ndarray:
        """Dense weighted convolution: conv_bulk_w @ f == (J*f) on flat fields."""
        return self.ops.bulk_matrix * self.grid.bulk_weights.ravel()[None, :]

    @cached_property
    def conv_surf_w(self) -> np.ndarray:
        return self.ops.surf_matrix * self.grid.surf_weights.ravel()[None, :]


@dataclass(frozen=True)
class SimConfig:
    """Run parameters.

    l_value: kinetic rate, 0 <= L <= inf (0 = instantaneous trace coupling,
        inf = impermeable wall).
    eps: Yosida regularization strength; must stay below the system's
        eps_star.  eps = 0 evaluates beta exactly and is legal only for
        trajectories certified to stay strictly separated from +-1.
    """

    dt: float
    t_end: float
    eps: float
    l_value: float
    scheme: str = "convex-split"
    newton_tol: float = 1e-10
    newton_max: int = 50
    max_halvings: int = 10
    snapshot_stride: int = 1

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")
        if math.isnan(self.l_value) or self.l_value < 0.0:
            raise ValueError("l_value must lie in [0, inf]")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"scheme must be one of {_SCHEMES}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")


@dataclass(frozen=True)
class State:
    """Time-slice of the solution; (mu, theta) and q are scheme-consistent."""

    t: float
    phi: FieldPair
    mu: FieldPair
    flux: SurfField


@dataclass(frozen=True)
class Snapshot:
    t: float
    phi: FieldPair
    mu: FieldPair


LEDGER_COLUMNS = (
    "t",
    "E_eps",
    "E_exact",
    "mass_total",
    "mass_bulk",
    "mass_surf",
    "diss_bulk",
    "diss_surf",
    "diss_robin",
    "newton_iters",
    "residual",
)


@dataclass(frozen=True)
class LedgerRow:
    t: float
    E_eps: float
    E_exact: float
    mass_total: float
    mass_bulk: float
    mass_surf: float
    diss_bulk: float
    diss_surf: float
    diss_robin: float
    newton_iters: int
    residual: float


@dataclass
class StepLedger:
    """Per-step conservation and dissipation bookkeeping."""

    rows: list[LedgerRow] = field(default_factory=list)

    def append(self, row: LedgerRow) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        lines = [",".join(LEDGER_COLUMNS)]
        for r in self.rows:
            cells = []
            for name in LEDGER_COLUMNS:
                v = getattr(r, name)
                cells.append(str(v) if isinstance(v, int) else f"{v:.17g}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


@dataclass(frozen=True)
class RunResult:
    trajectory: list[Snapshot]
    ledger: StepLedger
    final_state: State


def make_initial(grid: StripGrid, kind: str, **params) -> FieldPair:
    """Construct initial data with values in (-1, 1); psi is the trace of phi.

    kinds: ``uniform`` (m), ``perturbed`` (m, amplitude, seed: iid uniform
    perturbations in [-amplitude, amplitude]), ``tanh-interface`` (position,
    width: a flat interface across the strip).
    """
    if kind == "uniform":
        m = float(params.pop("m"))
        _no_extras(params)
        if not -1.0 < m < 1.0:
            raise ValueError("uniform value must lie in (-1, 1)")
        return FieldPair.constant(grid, m)
    if kind == "perturbed":
        m = float(params.pop("m"))
        amplitude = float(params.pop("amplitude"))
        seed = int(params.pop("seed"))
        _no_extras(params)
        if amplitude < 0.0 or abs(m) + amplitude >= 1.0:
            raise ValueError("perturbed data needs |m| + amplitude < 1")
        rng = np.random.default_rng(seed)
        vals = m + amplitude * rng.uniform(-1.0, 1.0, size=(grid.nx, grid.ny))
        bulk = BulkField(grid, vals)
        return FieldPair(bulk, trace(bulk))
    if kind == "tanh-interface":
        position = float(params.pop("position"))
        width = float(params.pop("width"))
        _no_extras(params)
        if not width > 0.0:
            raise ValueError("interface width must be positive")
        vals = np.tanh((grid.y[None, :] - position) / width) * np.ones((grid.nx, 1))
        bulk = BulkField(grid, vals)
        return FieldPair(bulk, trace(bulk))
    raise ValueError(f"unknown initial kind {kind!r}")


def _no_extras(params: dict) -> None:
    if params:
        raise ValueError(f"unexpected initial-data parameters: {sorted(params)}")


# -- energy ------------------------------------------------------------------


def _entropy_density(pot: SingularSplit, eps: float, eps_star: float, v: np.ndarray) -> np.ndarray:
    if eps == 0.0:
        if pot.domain_open and np.abs(v).max() >= 1.0:
            raise ValueError("exact energy needs values strictly inside (-1, 1)")
        return pot.beta_hat(v)
    y = YosidaOps(pot, eps, eps_star)
    r = resolvent(y, v)
    return 0.5 / eps * (v - r) ** 2 + pot.beta_hat(r)


def energy(system: System, phi: FieldPair, eps: float) -> float:
    """Free energy; Moreau-regularized entropy for eps > 0, exact for eps = 0."""
    g = system.grid
    wb = g.bulk_weights.ravel()
    ws = g.surf_weights.ravel()
    pb = phi.bulk.values.ravel()
    psv = phi.surf.values.ravel()
    conv_b = system.conv_bulk_w @ pb
    conv_s = system.conv_surf_w @ psv
    a_om = system.ops.a_omega.values.ravel()
    a_ga = system.ops.a_gamma.values.ravel()
    e_bulk = np.sum(
        wb
        * (
            0.5 * a_om * pb * pb
            - 0.5 * pb * conv_b
            + _entropy_density(system.pot_bulk, eps, system.eps_star, pb)
            + system.pot_bulk.pi_hat(pb)
        )
    )
    e_surf = np.sum(
        ws
        * (
            0.5 * a_ga * psv * psv
            - 0.5 * psv * conv_s
            + _entropy_density(system.pot_surf, eps, system.eps_star, psv)
            + system.pot_surf.pi_hat(psv)
        )
    )
    return float(e_bulk + e_surf)


# -- the Newton stepper -------------------------------------------------------


class _NewtonFail(Exception):
    pass


class _Stepper:
    """Flat-vector Newton machinery bound to one (system, cfg) pair."""

    def __init__(self, system: System, cfg: SimConfig):
        self.system = system
        self.cfg = cfg
        g = system.grid
        self.nb = g.nx * g.ny
        self.ns = 2 * g.nx
        d = system.discrete
        self.d = d
        self.wb = d.wb
        self.ws = d.ws
        self.a_om = system.ops.a_omega.values.ravel()
        self.a_ga = system.ops.a_gamma.values.ravel()
        self.exact = cfg.eps == 0.0
        if self.exact:
            self.yb = self.ys = None
        else:
            try:
                self.yb = YosidaOps(system.pot_bulk, cfg.eps, system.eps_star)
                self.ys = YosidaOps(system.pot_surf, cfg.eps, system.eps_star)
            except ValueError as exc:
                raise AssumptionViolation(f"regularization strength rejected: {exc}") from exc
        self.implicit = cfg.scheme == "fully-implicit"
        if self.implicit:
            self.conv_b_sp = sp.csr_matrix(system.conv_bulk_w)
            self.conv_s_sp = sp.csr_matrix(system.conv_surf_w)

        nb, ns = self.nb, self.ns
        self.i_b = sp.identity(nb, format="csr")
        self.i_s = sp.identity(ns, format="csr")
        L = cfg.l_value
        if L == 0.0:
            self.row5 = [None, None, -d.trace_op, self.i_s, None]
        elif math.isinf(L):
            self.row5 = [None, None, None, None, self.i_s]
        else:
            self.row5 = [None, None, d.trace_op, -self.i_s, L * self.i_s]

    # entropy slope and curvature at the current iterate
    def _entropy(self, pot: SingularSplit, y: YosidaOps | None, v: np.ndarray):
        if self.exact:
            return pot.beta(v), pot.beta_prime(v)
        r = resolvent(y, v)
        slope = (v - r) / y.eps
        curv = 1.0 / (y.eps + 1.0 / pot.beta_prime(r))
        return slope, curv

    def _split(self, z):
        nb, ns = self.nb, self.ns
        return (
            z[:nb],
            z[nb : nb + ns],
            z[nb + ns : 2 * nb + ns],
            z[2 * nb + ns : 2 * nb + 2 * ns],
            z[2 * nb + 2 * ns :],
        )

    def residual_and_jac(self, z, phi_n, psi_n, expl_b, expl_s, dt):
        d, cfg = self.d, self.cfg
        phi, psi, mu, theta, q = self._split(z)
        beta_b, curv_b = self._entropy(self.system.pot_bulk, self.yb, phi)
        beta_s, curv_s = self._entropy(self.system.pot_surf, self.ys, psi)

        f1 = phi - phi_n - dt * (d.lap_bulk @ mu + d.flux_inject @ q)
        f3 = psi - psi_n - dt * (d.lap_surf @ theta - q)
        if self.implicit:
            f2 = mu - self.a_om * phi - beta_b + self.system.conv_bulk_w @ phi - self.system.pot_bulk.pi(phi)
            f4 = theta - self.a_ga * psi - beta_s + self.system.conv_surf_w @ psi - self.system.pot_surf.pi(psi)
        else:
            f2 = mu - self.a_om * phi - beta_b + expl_b
            f4 = theta - self.a_ga * psi - beta_s + expl_s
        L = cfg.l_value
        if L == 0.0:
            f5 = theta - d.trace_op @ mu
        elif math.isinf(L):
            f5 = q.copy()
        else:
            f5 = L * q - theta + d.trace_op @ mu
        res = np.concatenate([f1, f2, f3, f4, f5])

        d2 = sp.diags(-(self.a_om + curv_b))
        d4 = sp.diags(-(self.a_ga + curv_s))
        if self.implicit:
            d2 = d2 + self.conv_b_sp - sp.diags(self.system.pot_bulk.pi_prime(phi))
            d4 = d4 + self.conv_s_sp - sp.diags(self.system.pot_surf.pi_prime(psi))
        jac = sp.bmat(
            [
                [self.i_b, None, -dt * d.lap_bulk, None, -dt * d.flux_inject],
                [d2, None, self.i_b, None, None],
                [None, self.i_s, None, -dt * d.lap_surf, dt * self.i_s],
                [None, d4, None, self.i_s, None],
                self.row5,
            ],
            format="csc",
        )
        return res, jac

    def newton(self, z0, phi_n, psi_n, dt):
        cfg = self.cfg
        if self.implicit:
            expl_b = expl_s = None
        else:
            expl_b = self.system.conv_bulk_w @ phi_n - self.system.pot_bulk.pi(phi_n)
            expl_s = self.system.conv_surf_w @ psi_n - self.system.pot_surf.pi(psi_n)
        z = z0.copy()
        for it in range(cfg.newton_max + 1):
            res, jac = self.residual_and_jac(z, phi_n, psi_n, expl_b, expl_s, dt)
            rnorm = float(np.abs(res).max())
            if not math.isfinite(rnorm):
                raise _NewtonFail("non-finite residual")
            if rnorm <= cfg.newton_tol:
                return z, it, rnorm
            if it == cfg.newton_max:
                break
            try:
                dz = spla.splu(jac).solve(-res)
            except RuntimeError as exc:
                raise _NewtonFail(f"linear solve failed: {exc}") from exc
            if self.exact:
                dz = self._damp_into_domain(z, dz)
            z = z + dz
        raise _NewtonFail(f"no convergence in {cfg.newton_max} iterations (residual {rnorm:.3e})")

    def _damp_into_domain(self, z, dz):
        """eps = 0 only: keep phase iterates strictly inside (-1, 1)."""
        nb, ns = self.nb, self.ns
        lim = 1.0 - 1e-12
        t = 1.0
        for _ in range(60):
            cand = z + t * dz
            worst = max(
                float(np.abs(cand[:nb]).max()),
                float(np.abs(cand[nb : nb + ns]).max()),
            )
            if worst < lim:
                return t * dz
            t *= 0.5
        raise _NewtonFail("exact-entropy iterate pinned at the domain boundary")

    def advance(self, z, t, dt, depth=0):
        """One accepted interval [t, t+dt], halving on Newton failure."""
        phi_n, psi_n = z[: self.nb].copy(), z[self.nb : self.nb + self.ns].copy()
        try:
            z1, iters, rnorm = self.newton(z, phi_n, psi_n, dt)
            return z1, iters, rnorm, depth
        except _NewtonFail as exc:
            if depth >= self.cfg.max_halvings:
                raise SolverFailure(
                    f"Newton failed at t={t:.6g} after {depth} halvings: {exc}"
                ) from exc
            z_half, it1, r1, d1 = self.advance(z, t, 0.5 * dt, depth + 1)
            z_full, it2, r2, d2 = self.advance(z_half, t + 0.5 * dt, 0.5 * dt, depth + 1)
            return z_full, it1 + it2, max(r1, r2), max(d1, d2)

    # -- state/ledger plumbing ----------------------------------------------

    def pack(self, state: State) -> np.ndarray:
        return np.concatenate(
            [
                state.phi.bulk.values.ravel(),
                state.phi.surf.values.ravel(),
                state.mu.bulk.values.ravel(),
                state.mu.surf.values.ravel(),
                state.flux.values.ravel(),
            ]
        )

    def unpack(self, z: np.ndarray, t: float) -> State:
        g = self.system.grid
        phi, psi, mu, theta, q = self._split(z)
        return State(
            t=t,
            phi=FieldPair(
                BulkField(g, phi.reshape(g.nx, g.ny)), SurfField(g, psi.reshape(2, g.nx))
            ),
            mu=FieldPair(
                BulkField(g, mu.reshape(g.nx, g.ny)), SurfField(g, theta.reshape(2, g.nx))
            ),
            flux=SurfField(g, q.reshape(2, g.nx)),
        )

    def ledger_row(self, state: State, iters: int, resid: float) -> LedgerRow:
        sys_, cfg = self.system, self.cfg
        phi = state.phi
        mass_bulk = float(np.sum(self.wb * phi.bulk.values.ravel()))
        mass_surf = float(np.sum(self.ws * phi.surf.values.ravel()))
        e_eps = energy(sys_, phi, cfg.eps)
        interior = (
            np.abs(phi.bulk.values).max() < 1.0 and np.abs(phi.surf.values).max() < 1.0
        )
        if interior or not sys_.pot_bulk.domain_open:
            e_exact = energy(sys_, phi, 0.0)
        else:
            e_exact = math.inf
        mu = state.mu.bulk.values.ravel()
        theta = state.mu.surf.values.ravel()
        diss_bulk = float(mu @ (self.d.stiff_bulk @ mu))
        diss_surf = float(theta @ (self.d.stiff_surf @ theta))
        L = cfg.l_value
        if L > 0.0 and math.isfinite(L):
            jump = theta - self.d.trace_op @ mu
            diss_robin = float(np.sum(self.ws * jump * jump) / L)
        else:
            diss_robin = 0.0
        return LedgerRow(
            t=state.t,
            E_eps=e_eps,
            E_exact=e_exact,
            mass_total=mass_bulk + mass_surf,
            mass_bulk=mass_bulk,
            mass_surf=mass_surf,
            diss_bulk=diss_bulk,
            diss_surf=diss_surf,
            diss_robin=diss_robin,
            newton_iters=iters,
            residual=resid,
        )


def initial_state(system: System, cfg: SimConfig, pair: FieldPair) -> State:
    """Consistent state from phase data: potentials from the constitutive law,
    flux from the kinetic rate law.  Enforces the initial-data assumption."""
    if pair.grid != system.grid:
        raise ValueError("initial data lives on a different grid")
    _check_initial_data(system, cfg, pair)
    stp = _Stepper(system, cfg)
    pb = pair.bulk.values.ravel()
    psv = pair.surf.values.ravel()
    beta_b, _ = stp._entropy(system.pot_bulk, stp.yb, pb)
    beta_s, _ = stp._entropy(system.pot_surf, stp.ys, psv)
    mu = stp.a_om * pb - system.conv_bulk_w @ pb + beta_b + system.pot_bulk.pi(pb)
    theta = stp.a_ga * psv - system.conv_surf_w @ psv + beta_s + system.pot_surf.pi(psv)
    L = cfg.l_value
    if L > 0.0 and math.isfinite(L):
        q = (theta - system.discrete.trace_op @ mu) / L
    else:
        q = np.zeros_like(theta)
    g = system.grid
    return State(
        t=0.0,
        phi=pair,
        mu=FieldPair(BulkField(g, mu.reshape(g.nx, g.ny)), SurfField(g, theta.reshape(2, g.nx))),
        flux=SurfField(g, q.reshape(2, g.nx)),
    )


def _check_initial_data(system: System, cfg: SimConfig, pair: FieldPair) -> None:
    if math.isinf(cfg.l_value):
        mb, msf = mean_bulk(pair.bulk), mean_surf(pair.surf)
        if not (-1.0 < mb < 1.0 and -1.0 < msf < 1.0):
            raise AssumptionViolation(
                f"(A4) component means ({mb:.6g}, {msf:.6g}) must lie in (-1, 1) at L = inf"
            )
    else:
        m = generalized_mean(pair)
        if not -1.0 < m < 1.0:
            raise AssumptionViolation(f"(A4) generalized mean {m:.6g} must lie in (-1, 1)")
    if system.pot_bulk.domain_open:
        finite = np.all(np.isfinite(system.pot_bulk.beta_hat(pair.bulk.values))) and np.all(
            np.isfinite(system.pot_surf.beta_hat(pair.surf.values))
        )
        if not finite:
            raise AssumptionViolation("(A4) initial data leaves the entropy domain [-1, 1]")
    if cfg.eps == 0.0 and system.pot_bulk.domain_open:
        worst = max(np.abs(pair.bulk.values).max(), np.abs(pair.surf.values).max())
        if worst >= 1.0:
            raise AssumptionViolation(
                "exact-entropy mode (eps = 0) needs strictly separated initial data"
            )


def _gate_standing_assumptions(system: System) -> None:
    report = check_assumptions(system.pot_bulk, system.pot_surf, system.ops)
    bad = [k for k in ("A2", "A3") if not report.ok(k)]
    if bad:
        notes = "; ".join(f"{k}: {report.items[k].note} (margin {report.items[k].margin:.4g})" for k in bad)
        raise AssumptionViolation(f"stepper refuses configuration failing {'/'.join(bad)}: {notes}")


def step(state: State, cfg: SimConfig, system: System) -> tuple[State, LedgerRow]:
    """Advance one accepted step of length cfg.dt (halving internally on failure)."""
    stp = _Stepper(system, cfg)
    z = stp.pack(state)
    z1, iters, rnorm, _ = stp.advance(z, state.t, cfg.dt)
    new = stp.unpack(z1, state.t + cfg.dt)
    return new, stp.ledger_row(new, iters, rnorm)


def run(cfg: SimConfig, system: System, initial: FieldPair | State) -> RunResult:
    """Integrate from t (0 for fresh data) to cfg.t_end on the fixed dt grid.

    Resuming from a returned ``final_state`` reproduces the uninterrupted run
    bitwise: time accumulates additively and every solve is deterministic.
    """
    _gate_standing_assumptions(system)
    if isinstance(initial, State):
        if initial.phi.grid != system.grid:
            raise ValueError("resumed state lives on a different grid")
        state = initial
    else:
        state = initial_state(system, cfg, initial)
    n_steps = int(round((cfg.t_end - state.t) / cfg.dt))
    if n_steps < 0:
        raise ValueError("t_end lies before the initial state's time")

    stp = _Stepper(system, cfg)
    ledger = StepLedger()
    ledger.append(stp.ledger_row(state, 0, 0.0))
    trajectory = [Snapshot(state.t, state.phi, state.mu)]
    z = stp.pack(state)
    t = state.t
    for n in range(1, n_steps + 1):
        z, iters, rnorm, _ = stp.advance(z, t, cfg.dt)
        t = t + cfg.dt
        state = stp.unpack(z, t)
        ledger.append(stp.ledger_row(state, iters, rnorm))
        if n % cfg.snapshot_stride == 0 or n == n_steps:
            trajectory.append(Snapshot(state.t, state.phi, state.mu))
    return RunResult(trajectory=trajectory, ledger=ledger, final_state=state)
