"""Desk-scale solver and verification harness for a coupled bulk-surface
nonlocal Cahn-Hilliard system with a kinetic-rate boundary condition.

The model tracks a phase variable phi on a periodic strip Omega and its
boundary companion psi on the two wall rings Gamma:

    d_t phi = Lap mu,          mu    = a_Omega phi - J*phi + beta(phi) + pi(phi),
    d_t psi = Lap_G theta - d_n mu,
                               theta = a_Gamma psi - K@psi + beta_G(psi) + pi_G(psi),
    L d_n mu = theta - mu      on Gamma,  L in [0, inf],

with singular (logarithmic) entropy beta handled through Moreau-Yosida
regularization.  The package provides the spatial discretization (geometry,
kernels), the potential apparatus (potentials), inverse elliptic operators
and dual norms (elliptic), a structure-preserving time stepper (stepper),
verification studies for the regularization and kinetic limits plus strict
separation (harness), and a TOML-driven command line (cli).
"""

from .elliptic import DiscreteOperators, EllipticSolvers, assemble_operators
from .errors import AssumptionViolation, ConfigError, SolverFailure
from .geometry import (
    BulkField,
    FieldPair,
    StripGrid,
    SurfField,
    generalized_mean,
    laplace_beltrami,
    laplacian,
    mean_bulk,
    mean_surf,
    project_zero_mean,
    ring_means,
    trace,
)
from .harness import (
    DeGiorgiReport,
    RateFit,
    RateStudy,
    SeparationReport,
    chemical_potential_bound,
    degiorgi_diagnostic,
    epsilon_sweep,
    kinetic_sweep_infinity,
    kinetic_sweep_zero,
    rate_fit,
    separation_track,
)
from .kernels import (
    HSReport,
    KernelOps,
    KernelSpec,
    build_kernel_ops,
    conv_bulk,
    conv_surf,
    hs_diagnostics,
)
from .potentials import (
    AssumptionItem,
    AssumptionReport,
    SingularSplit,
    YosidaOps,
    check_assumptions,
    coercivity_constants,
    eps_star_bound,
    linear_toy,
    logarithmic,
    moreau,
    resolvent,
    yosida,
    yosida_derivative,
)
from .stepper import (
    LEDGER_COLUMNS,
    LedgerRow,
    RunResult,
    SimConfig,
    Snapshot,
    State,
    StepLedger,
    System,
    energy,
    initial_state,
    make_initial,
    run,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # geometry
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
    # kernels
    "KernelSpec",
    "KernelOps",
    "HSReport",
    "build_kernel_ops",
    "conv_bulk",
    "conv_surf",
    "hs_diagnostics",
    # potentials
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
    # elliptic
    "DiscreteOperators",
    "EllipticSolvers",
    "assemble_operators",
    # stepper
    "System",
    "SimConfig",
    "State",
    "Snapshot",
    "LEDGER_COLUMNS",
    "LedgerRow",
    "StepLedger",
    "RunResult",
    "make_initial",
    "initial_state",
    "energy",
    "step",
    "run",
    # harness
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
    # errors
    "ConfigError",
    "AssumptionViolation",
    "SolverFailure",
]
