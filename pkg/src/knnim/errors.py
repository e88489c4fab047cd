"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: InputError -> 2, PreconditionError -> 3.
"""


class KnnimError(ValueError):
    """Base class for all errors raised by this package."""


class InputError(KnnimError):
    """Malformed or inconsistent user-supplied data (files, flags)."""


class PreconditionError(KnnimError):
    """A documented precondition of an operation was violated."""
