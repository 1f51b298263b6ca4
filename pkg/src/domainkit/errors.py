"""Shared exception types.

Every error raised on purpose by this package derives from DomainkitError,
so CLI entry points can map them to exit code 1 (input/validation problems)
while anything else escapes as an internal error (exit code 2).
"""


class DomainkitError(Exception):
    """Base class for all errors raised by domainkit."""


class ValidationError(DomainkitError):
    """An input violated a documented invariant or precondition."""
