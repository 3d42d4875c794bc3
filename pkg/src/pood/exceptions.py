"""Exception hierarchy.

Everything raised for bad *data* derives from :class:`PoodError`, which the
CLI maps to exit code 1. Programming errors (wrong types, bad arguments)
are plain ``ValueError``/``TypeError``.
"""


class PoodError(Exception):
    """Base class for data errors."""


class SchemaError(PoodError, ValueError):
    """Input file does not follow the score-table schema."""


class ValidationError(PoodError, ValueError):
    """Input parses but violates a data invariant."""


class EmptyInputError(PoodError, ValueError):
    """An input that must be non-empty is empty."""

