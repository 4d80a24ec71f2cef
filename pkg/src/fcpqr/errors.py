"""Exception types shared across the package.

The CLI maps DataError subclasses to exit code 3 and NumericalError to
exit code 4; usage problems are argparse's exit code 2.
"""


class DataError(ValueError):
    """Base class for problems with input data or its description."""


class SchemaError(DataError):
    """Column mapping is inconsistent with the supplied files."""


class ParseError(DataError):
    """A cell failed to parse or is non-finite; carries row/column context."""


class IdentificationError(DataError):
    """The grouping covariates violate the constant-column convention."""


class DegenerateColumnError(DataError):
    """A non-constant column has zero variance and cannot be standardized."""


class DegenerateInputError(DataError):
    """An input vector is degenerate (e.g. zero norm) for the requested operation."""


class NumericalError(RuntimeError):
    """A linear solve failed beyond recovery; carries condition diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
