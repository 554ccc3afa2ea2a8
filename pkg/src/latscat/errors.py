"""Exception hierarchy shared by all modules.

The three classes map onto the CLI exit codes: validation failures exit
with 2, numerical failures (a tolerance that could not be met) with 3,
resource guards with 4.
"""


class LatscatError(Exception):
    """Base class for all library errors."""


class ValidationError(LatscatError):
    """Bad input: wrong dimension, energy on a forbidden set, malformed file."""

    exit_code = 2


class NumericsError(LatscatError):
    """A numerical tolerance could not be met (divergent series, failed
    extrapolation, path refinement exhausted, ...)."""

    exit_code = 3


class ResourceLimitError(LatscatError):
    """A guard against runaway memory or time was hit."""

    exit_code = 4
