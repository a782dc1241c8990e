"""Error taxonomy shared by the library and the command line front end."""

__all__ = ["ConfigError", "AssumptionViolation", "SolverFailure"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class AssumptionViolation(RuntimeError):
    """Initial data or potential/kernel combination outside the admissible class."""


class SolverFailure(RuntimeError):
    """The nonlinear or linear solver gave up after exhausting its fallbacks."""
