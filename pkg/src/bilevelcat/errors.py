"""Exception taxonomy shared across the package.

Two families matter to callers: `ValidationError` covers everything a user
can fix by changing inputs or configuration (CLI exit code 2), while
`NumericError` covers runtime numerical failure such as divergence or
overflow (CLI exit code 3).
"""


class BilevelCatError(Exception):
    """Base class for all package errors."""


class ValidationError(BilevelCatError):
    """Bad input data, arguments, or call sequencing."""


class ParseError(ValidationError):
    """A text input (CSV, config file) could not be parsed."""


class IntegrityError(ValidationError):
    """Structurally valid input violates a dataset invariant."""


class ArgumentError(ValidationError, ValueError):
    """An argument is outside its documented domain."""


class StateError(ValidationError):
    """An operation was invoked in a state where it is undefined."""


class MetricUndefinedError(ValidationError):
    """A metric has no defined value on the given input."""


class DomainError(BilevelCatError, ValueError):
    """A math primitive was evaluated outside its domain."""


class NumericError(BilevelCatError, ArithmeticError):
    """A computation produced NaN/Inf or failed to stay finite."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss or parameter."""


class ConvergenceWarning(UserWarning):
    """An iterative fit stopped before reaching its tolerance."""
