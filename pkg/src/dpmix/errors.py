"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary domain/usage violations (bad
parameter values, empty inputs, indices out of range).  The classes below
mark conditions that callers are expected to branch on.
"""


class ResourceLimitError(RuntimeError):
    """A hard size cap was exceeded (e.g. brute-force enumeration limits)."""


class QuadratureError(ArithmeticError):
    """Numerical integration did not reach the requested tolerance.

    Attributes
    ----------
    achieved : float
        The relative error estimate actually reached.
    """

    def __init__(self, message, achieved=float("nan")):
        super().__init__(message)
        self.achieved = achieved


class CertificationError(RuntimeError):
    """A numerical certificate (prior regularity condition) could not be
    established within the configured search limits."""


class ConfigError(ValueError):
    """An experiment configuration document failed validation."""
