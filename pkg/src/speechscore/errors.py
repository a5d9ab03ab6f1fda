"""Exception hierarchy shared across the package."""


class DataValidationError(ValueError):
    """Input data violates a format or range contract (bad file, bad score, bad manifest)."""


class EmbeddingFormatError(DataValidationError):
    """An embedding file is malformed: bad magic, bad version, truncated payload, zero dims."""
