"""Error types shared across the package.

ConfigError maps to CLI exit code 2, NumericalError (and subclasses) to 3.
"""


class ConfigError(ValueError):
    """Invalid configuration value, file, or profile."""


class NumericalError(RuntimeError):
    """Base class for numerical failures in solvers."""


class FixedPointError(NumericalError):
    """Fixed-point solve did not reach the requested tolerance."""


class BisectionError(NumericalError):
    """Power-constraint bisection failed to bracket or converge."""
