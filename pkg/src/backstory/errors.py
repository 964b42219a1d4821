"""Exception types shared across the package.

The CLI maps :class:`ValidationError` to exit status 1 and
:class:`NumericError` to exit status 2.
"""


class ValidationError(ValueError):
    """Bad inputs, malformed files, or violated preconditions."""


class NumericError(RuntimeError):
    """Non-finite values or a diverging optimization."""


class NoProtagonistError(ValidationError):
    """No story character could be identified."""
