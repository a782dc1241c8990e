"""Singular potentials split as W = beta_hat + pi_hat, and their Yosida apparatus.

The convex entropy part beta_hat carries the singularity (derivative beta
blows up at the pure phases +-1 for the logarithmic family); pi_hat is a
smooth concave perturbation with Lipschitz derivative pi.  The stepper never
evaluates beta directly: it works with the Moreau-Yosida regularization

    resolvent:   J_eps(s) solves r + eps*beta(r) = s,
    yosida:      beta_eps(s) = (s - J_eps(s)) / eps = beta(J_eps(s)),
    moreau:      B_eps(s) = |s - J_eps(s)|^2 / (2 eps) + beta_hat(J_eps(s)),

which is monotone, 1/eps-Lipschitz, satisfies |beta_eps| <= |beta| and
0 <= B_eps <= beta_hat pointwise, and keeps beta_eps' >= alpha/(1+alpha)
whenever beta' >= alpha.  Regularization strengths are restricted to
eps < eps_star, the threshold computed from the kernel L1 norms and the
perturbation Lipschitz constants, below which the regularized energy keeps
its quadratic lower bound.

The resolvent is a bracketed Newton iteration vectorized over whole fields;
for singular families the bracket is the representable interior of (-1, 1),
and inputs so far outside the domain that the true resolvent underflows to
+-1 saturate at the bracket endpoint (the Yosida slope there is the correct
huge restoring value, which is all the stepper needs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .kernels import KernelOps

__all__ = [
    "SingularSplit",
    "YosidaOps",
    "AssumptionItem",
    "AssumptionReport",
    "logarithmic",
    "linear_toy",
    "eps_star_bound",
    "resolvent",
    "yosida",
    "moreau",
    "yosida_derivative",
    "coercivity_constants",
    "check_assumptions",
]


@dataclass(frozen=True)
class SingularSplit:
    """Potential split W = beta_hat + pi_hat with the constants the theory needs.

    alpha: uniform lower bound of beta' on its domain (> 0).
    gamma: Lipschitz constant of the perturbation derivative pi.
    domain_open: True when beta lives on (-1, 1) with blow-up at the ends,
        False when beta is defined on all of R (toy families).
    """

    family: str
    beta_hat: Callable[[np.ndarray], np.ndarray]
    beta: Callable[[np.ndarray], np.ndarray]
    beta_prime: Callable[[np.ndarray], np.ndarray]
    pi_hat: Callable[[np.ndarray], np.ndarray]
    pi: Callable[[np.ndarray], np.ndarray]
    pi_prime: Callable[[np.ndarray], np.ndarray]
    alpha: float
    gamma: float
    domain_open: bool
    params: dict = field(default_factory=dict)


def logarithmic(theta: float, theta0: float) -> SingularSplit:
    """Logarithmic (Flory-Huggins) potential at temperature theta.

    W(s) = theta/2 [(1+s)ln(1+s) + (1-s)ln(1-s)] - theta0/2 s^2.
    Entropy part: beta(s) = theta*atanh(s), beta' = theta/(1-s^2) >= theta.
    Perturbation: pi(s) = -theta0*s, Lipschitz constant theta0.
    Double-well (quench) regime is theta0 > theta.
    """
    if not theta > 0.0:
        raise ValueError("theta must be positive")
    if theta0 < 0.0:
        raise ValueError("theta0 must be nonnegative")

    def beta_hat(s):
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) <= 1.0
        sc = np.where(inside, s, 0.0)
        val = 0.5 * theta * (xlogy(1.0 + sc, 1.0 + sc) + xlogy(1.0 - sc, 1.0 - sc))
        return np.where(inside, val, np.inf)

    def beta(s):
        return theta * np.arctanh(np.asarray(s, dtype=float))

    def beta_prime(s):
        s = np.asarray(s, dtype=float)
        return theta / (1.0 - s * s)

    return SingularSplit(
        family="logarithmic",
        beta_hat=beta_hat,
        beta=beta,
        beta_prime=beta_prime,
        pi_hat=lambda s: -0.5 * theta0 * np.asarray(s, dtype=float) ** 2,
        pi=lambda s: -theta0 * np.asarray(s, dtype=float),
        pi_prime=lambda s: np.full_like(np.asarray(s, dtype=float), -theta0),
        alpha=theta,
        gamma=theta0,
        domain_open=True,
        params={"theta": theta, "theta0": theta0},
    )


def linear_toy(slope: float = 1.0, pi_slope: float = 0.0) -> SingularSplit:
    """beta(s) = slope*s on all of R; closed-form resolvent s/(1 + eps*slope).

    No blow-up, so the separation machinery rejects it ((A8) fails); it exists
    for closed-form cross-checks of the Yosida apparatus and the stepper.
    """
    if not slope > 0.0:
        raise ValueError("slope must be positive")
    if pi_slope < 0.0:
        raise ValueError("pi_slope must be nonnegative")
    return SingularSplit(
        family="linear-toy",
        beta_hat=lambda s: 0.5 * slope * np.asarray(s, dtype=float) ** 2,
        beta=lambda s: slope * np.asarray(s, dtype=float),
        beta_prime=lambda s: np.full_like(np.asarray(s, dtype=float), slope),
        pi_hat=lambda s: -0.5 * pi_slope * np.asarray(s, dtype=float) ** 2,
        pi=lambda s: -pi_slope * np.asarray(s, dtype=float),
        pi_prime=lambda s: np.full_like(np.asarray(s, dtype=float), -pi_slope),
        alpha=slope,
        gamma=pi_slope,
        domain_open=False,
        params={"slope": slope, "pi_slope": pi_slope},
    )


def eps_star_bound(j_l1: float, k_l1: float, gamma_bulk: float, gamma_surf: float) -> float:
    """Regularization threshold from kernel L1 masses and Lipschitz constants."""
    return min(
        1.0 / (2.0 * j_l1 + 2.0 * gamma_bulk + 1.0),
        1.0 / (2.0 * k_l1 + 2.0 * gamma_surf + 1.0),
    )


@dataclass(frozen=True)
class YosidaOps:
    """A SingularSplit with a fixed regularization strength 0 < eps < eps_star."""

    split: SingularSplit
    eps: float
    eps_star: float

    def __post_init__(self) -> None:
        if not self.eps_star > 0.0:
            raise ValueError("eps_star must be positive")
        if not 0.0 < self.eps < self.eps_star:
            raise ValueError(f"eps must lie in (0, eps_star) = (0, {self.eps_star}), got {self.eps}")


_RESOLVENT_MAX_ITER = 200


def resolvent(y: YosidaOps, s) -> np.ndarray:
    """Solve r + eps*beta(r) = s elementwise to |residual| <= 1e-13*(1+|s|).

    Bracketed Newton: iterates are confined by a sign-tracking bracket and
    fall back to bisection when a Newton step leaves it.  The bracket starts
    at the representable interior of (-1, 1) for singular families and is
    grown geometrically around s for families defined on all of R.

    For singular families and large |s| the root sits so close to +-1 that
    the float granularity of beta exceeds the tolerance; the bracket then
    collapses onto the nearest representable value (within one ulp of the
    root).  For the logarithmic family at the shipped parameters the stated
    bound is attainable for |s| up to roughly 1.15.
    """
    s_in = np.asarray(s, dtype=float)
    scalar = s_in.ndim == 0
    sv = np.atleast_1d(s_in).astype(float).copy()
    eps = y.eps
    beta, beta_prime = y.split.beta, y.split.beta_prime

    if y.split.domain_open:
        lo = np.full_like(sv, np.nextafter(-1.0, 0.0))
        hi = np.full_like(sv, np.nextafter(1.0, 0.0))
    else:
        # expand around s until g changes sign; monotone g makes this finite
        span = 1.0 + eps * np.abs(beta(sv))
        lo, hi = sv - span, sv + span
        for _ in range(100):
            bad_lo = lo + eps * beta(lo) - sv > 0.0
            bad_hi = hi + eps * beta(hi) - sv < 0.0
            if not (bad_lo.any() or bad_hi.any()):
                break
            span = np.where(bad_lo | bad_hi, 2.0 * span, span)
            lo = np.where(bad_lo, sv - span, lo)
            hi = np.where(bad_hi, sv + span, hi)
        else:  # pragma: no cover
            raise RuntimeError("resolvent bracket expansion failed")

    tol = 1e-13 * (1.0 + np.abs(sv))
    r = np.clip(sv / (1.0 + eps), lo, hi)
    done = np.zeros(sv.shape, dtype=bool)
    for _ in range(_RESOLVENT_MAX_ITER):
        g = r + eps * beta(r) - sv
        hi = np.where(~done & (g > 0.0), np.minimum(hi, r), hi)
        lo = np.where(~done & (g < 0.0), np.maximum(lo, r), lo)
        done |= np.abs(g) <= tol
        # collapsed bracket: saturated at the representable domain boundary
        done |= (hi - lo) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(r))
        if done.all():
            break
        step = g / (1.0 + eps * beta_prime(r))
        cand = r - step
        outside = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(outside, 0.5 * (lo + hi), cand)
        r = np.where(done, r, cand)
    else:  # pragma: no cover - bracketed iteration cannot stall
        raise RuntimeError("resolvent failed to converge within the iteration cap")
    return float(r[0]) if scalar else r.reshape(s_in.shape)


def yosida(y: YosidaOps, s) -> np.ndarray:
    """beta_eps(s) = (s - J_eps(s))/eps; equals beta at the resolvent point."""
    s = np.asarray(s, dtype=float)
    return (s - resolvent(y, s)) / y.eps


def moreau(y: YosidaOps, s) -> np.ndarray:
    """Moreau envelope of beta_hat: the regularized entropy density."""
    s = np.asarray(s, dtype=float)
    r = resolvent(y, s)
    return 0.5 / y.eps * (s - r) ** 2 + y.split.beta_hat(r)


def yosida_derivative(y: YosidaOps, s) -> np.ndarray:
    """beta_eps'(s) = 1/(eps + 1/beta'(J_eps(s))); in [alpha/(1+alpha), 1/eps]."""
    s = np.asarray(s, dtype=float)
    bp = y.split.beta_prime(resolvent(y, s))
    return 1.0 / (y.eps + 1.0 / bp)


def coercivity_constants(y: YosidaOps, s0: float, n_grid: int = 20001) -> tuple[float, float]:
    """Sweep-based (delta0, c1) with beta_eps(s)(s - s0) >= delta0|beta_eps(s)| - c1.

    delta0 = min(1 - s0, 1 + s0)/2 as in the monotonicity argument; c1 is the
    sweep maximum of the defect (positive part), padded by 1e-12.  The defect
    grows like -|s| for large |s|, so a [-4, 4] sweep brackets the maximum for
    every family here.
    """
    if not -1.0 < s0 < 1.0:
        raise ValueError("s0 must lie in (-1, 1)")
    delta0 = 0.5 * min(1.0 - s0, 1.0 + s0)
    ss = np.linspace(-4.0, 4.0, n_grid)
    be = yosida(y, ss)
    defect = delta0 * np.abs(be) - be * (ss - s0)
    # true max <= grid max + h^2 |defect''|/8; the second difference is
    # h^2 defect'', so a quarter of its magnitude safely covers the gap
    pad = 0.25 * float(np.abs(np.diff(defect, 2)).max()) + 1e-12
    c1 = max(0.0, float(defect.max())) + pad
    return delta0, c1


@dataclass(frozen=True)
class AssumptionItem:
    ok: bool
    margin: float
    note: str


@dataclass(frozen=True)
class AssumptionReport:
    """Structured pass/fail map for the standing assumptions (A1)-(A10)."""

    items: dict[str, AssumptionItem]

    def ok(self, key: str) -> bool:
        return self.items[key].ok

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.items.items() if not v.ok]

    def summary(self) -> str:
        lines = []
        for key in sorted(self.items, key=lambda k: int(k[1:])):
            it = self.items[key]
            lines.append(f"{key}: {'pass' if it.ok else 'FAIL'}  margin={it.margin:+.6g}  {it.note}")
        return "\n".join(lines)


def _kappa_fit(split: SingularSplit, side: int) -> float:
    """Log-blow-up exponent: beta(side*(1-2*delta)) ~ |ln delta|^kappa."""
    deltas = 2.0 ** -np.arange(4, 21)
    vals = side * np.asarray(split.beta(side * (1.0 - 2.0 * deltas)))
    if np.any(vals <= 0.0):
        return math.nan
    xs = np.log(np.log(1.0 / deltas))
    ys = np.log(vals)
    return float(np.polyfit(xs, ys, 1)[0])


def check_assumptions(
    pot_bulk: SingularSplit, pot_surf: SingularSplit, ops: KernelOps
) -> AssumptionReport:
    """Diagnostic report; nothing here mutates or refuses a configuration.

    The stepper independently refuses configs failing (A2)/(A3); everything
    else is recorded for the studies that need it ((A5)/(A6) for rates,
    (A7)-(A10) for separation).
    """
    items: dict[str, AssumptionItem] = {}
    samples = np.linspace(-0.999999, 0.999999, 4001)

    # A1: kernels even (symmetric matrices), nonnegative, finite integrals
    sym_defect = max(
        float(np.abs(ops.bulk_matrix - ops.bulk_matrix.T).max()),
        float(np.abs(ops.surf_matrix - ops.surf_matrix.T).max()),
    )
    min_entry = min(float(ops.bulk_matrix.min()), float(ops.surf_matrix.min()))
    a1_ok = sym_defect <= 1e-12 and min_entry >= -1e-15 and ops.a_bulk_min > 0.0
    items["A1"] = AssumptionItem(a1_ok, min_entry, "kernel evenness/nonnegativity/positivity of a_*")

    # A2: beta(0)=0, monotone with beta' >= alpha > 0; singular families must
    # actually blow up (probed on beta', the attainable certificate)
    def _a2(split: SingularSplit) -> tuple[bool, float]:
        at0 = abs(float(np.asarray(split.beta(0.0))))
        inside = samples if split.domain_open else np.linspace(-5.0, 5.0, 4001)
        bp = np.asarray(split.beta_prime(inside))
        mono_margin = float(bp.min()) - split.alpha
        ok = at0 <= 1e-14 and split.alpha > 0.0 and mono_margin >= -1e-10
        if split.domain_open:
            probe = float(np.asarray(split.beta_prime(1.0 - 1e-8)))
            ok = ok and probe > 1e3
        return ok, mono_margin

    okb, mb = _a2(pot_bulk)
    oks, ms = _a2(pot_surf)
    items["A2"] = AssumptionItem(okb and oks, min(mb, ms), "entropy monotonicity and singularity probe")

    # A3: 0 < gamma < a_* + alpha/(1+alpha) on each side
    rb = ops.a_bulk_min + pot_bulk.alpha / (1.0 + pot_bulk.alpha) - pot_bulk.gamma
    rs = ops.a_surf_min + pot_surf.alpha / (1.0 + pot_surf.alpha) - pot_surf.gamma
    a3_ok = pot_bulk.gamma > 0.0 and pot_surf.gamma > 0.0 and rb > 0.0 and rs > 0.0
    items["A3"] = AssumptionItem(a3_ok, min(rb, rs), "perturbation Lipschitz bound vs a_* + alpha/(1+alpha)")

    # A4: initial-data condition, enforced per run by the stepper
    items["A4"] = AssumptionItem(True, 0.0, "initial-data means; checked at run start")

    # A5: W^(1,1) kernel regularity (family-based) with finite gradient integrals
    fam_ok = ops.spec_j.family != "tophat" and ops.spec_k.family != "tophat"
    grads_finite = math.isfinite(ops.grad_bulk_sup) and math.isfinite(ops.grad_surf_sup)
    items["A5"] = AssumptionItem(
        fam_ok and grads_finite,
        min(ops.grad_bulk_sup, ops.grad_surf_sup) if fam_ok else -1.0,
        "kernel W^(1,1) regularity (tophat excluded)",
    )

    # A6: strict gamma < a_* (rate studies)
    r6b = ops.a_bulk_min - pot_bulk.gamma
    r6s = ops.a_surf_min - pot_surf.gamma
    items["A6"] = AssumptionItem(r6b > 0.0 and r6s > 0.0, min(r6b, r6s), "gamma < a_* (rate studies)")

    # A7: identical bulk and surface potentials (separation studies)
    same = pot_bulk.family == pot_surf.family and pot_bulk.params == pot_surf.params
    items["A7"] = AssumptionItem(same, 0.0 if same else -1.0, "F = G; required for separation studies")

    # A8: logarithmic blow-up exponent kappa in [0.9, 1.1]
    if pot_bulk.domain_open and pot_surf.domain_open:
        kappas = [_kappa_fit(p, s) for p in (pot_bulk, pot_surf) for s in (+1, -1)]
        worst = max(abs(k - 1.0) for k in kappas) if all(map(math.isfinite, kappas)) else math.inf
        items["A8"] = AssumptionItem(worst <= 0.1, 0.1 - worst, f"fitted kappa offsets {worst:.3g}")
    else:
        items["A8"] = AssumptionItem(False, -1.0, "no blow-up (toy family)")

    # A9: 1/beta'(1-2*delta) <= C0*delta with stable C0 as delta -> 0
    def _a9(split: SingularSplit) -> tuple[bool, float]:
        deltas = 2.0 ** -np.arange(4, 31)
        c0 = np.maximum(
            1.0 / (deltas * np.asarray(split.beta_prime(1.0 - 2.0 * deltas))),
            1.0 / (deltas * np.asarray(split.beta_prime(-1.0 + 2.0 * deltas))),
        )
        stable = bool(c0[-1] <= 1.25 * c0[-2]) and math.isfinite(float(c0.max()))
        return stable, float(c0.max())

    ok9b, c9b = _a9(pot_bulk)
    ok9s, c9s = _a9(pot_surf)
    items["A9"] = AssumptionItem(ok9b and ok9s, max(c9b, c9s), "C0 = sup 1/(delta beta'(1-2 delta))")

    # A10: beta' monotone approaching each endpoint
    near = 1.0 - np.geomspace(1e-1, 1e-12, 200)
    dplus = np.diff(np.asarray(pot_bulk.beta_prime(near)))
    dminus = np.diff(np.asarray(pot_bulk.beta_prime(-near)))
    tol10 = 1e-9 * max(1.0, float(np.abs(pot_bulk.beta_prime(near)).max()))
    ok10 = bool((dplus >= -tol10).all() and (dminus >= -tol10).all())
    items["A10"] = AssumptionItem(ok10, float(min(dplus.min(), dminus.min())), "beta' monotone near +-1")

    return AssumptionReport(items=items)
