"""Exception types raised across the package.

Each class carries a short ``category`` string so command-line front ends can
report a machine-readable failure kind.
"""


class SPDQError(Exception):
    category = "error"


class NumericalError(SPDQError, ArithmeticError):
    """A numerical routine failed (non-convergence, loss of definiteness, NaN)."""

    category = "numerical_failure"


class DimensionError(SPDQError, ValueError):
    """Array shapes do not agree with what an operation expects."""

    category = "dimension_mismatch"


class SchemaError(SPDQError, ValueError):
    """A config document or on-disk artifact does not match its schema."""

    category = "schema_violation"


class MissingArtifactError(SPDQError, FileNotFoundError):
    category = "missing_file"
