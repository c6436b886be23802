"""Exception types shared across the package.

DataError covers everything wrong with inputs (files, formats, domains);
NumericalError covers failures of the numerics themselves (non-positive-
definite matrices, diverging optimizers). The CLI maps them to distinct
exit codes.
"""


class VartauError(Exception):
    """Base class for package errors."""


class DataError(VartauError):
    """Bad or insufficient input data (parse failures, domain violations)."""


class NumericalError(VartauError):
    """A numerical procedure failed (singular matrix, divergence)."""
