"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: UsageError -> 1,
DataError -> 2, RuntimeFailure -> 3.
"""


class FssError(Exception):
    """Base class for all package errors."""


class UsageError(FssError):
    """Bad arguments or flag combinations."""


class DataError(FssError):
    """Missing files, malformed annotations, broken invariants in inputs."""


class SchemaError(DataError):
    """Annotation record violates the published schema.

    Carries ``field_path`` pointing at the offending field.
    """

    def __init__(self, message, field_path=None):
        super().__init__(message)
        self.field_path = field_path


class DetectionError(FssError):
    """Face-region detection failed for an image."""


class RuntimeFailure(FssError):
    """Unrecoverable runtime problem (e.g. non-finite training loss)."""
