"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific class that applies.
"""


class DampGpError(Exception):
    """Base class for all package-specific errors."""


class InputError(DampGpError):
    """Invalid user input: bad shapes, malformed files, unknown identifiers."""


class ParseError(InputError):
    """A text file failed to parse; message carries the offending line."""


class NumericalError(DampGpError):
    """A numerical procedure failed beyond recoverable limits."""


class InfeasibilityError(DampGpError):
    """No admissible hyperparameters satisfy the passivity constraint."""


class UnsupportedModelError(InputError):
    """Operation not defined for this estimator kind."""
