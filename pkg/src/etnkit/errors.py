"""Error types shared across the package.

``category`` is a short machine-parseable token; the command line prints
it in its single-line error output and the categories are listed in the
README.
"""

from __future__ import annotations


class EtnkitError(Exception):
    """Base class; carries a stable error category token."""

    category = "error"


class FormatError(EtnkitError):
    """A file did not match its binary or text format contract.

    Categories: magic, version, truncated, trailing, dtype, schema, family.
    """

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class ConfigError(EtnkitError):
    category = "config"


class DataError(EtnkitError):
    category = "data"


class TrainingDivergedError(EtnkitError):
    category = "numeric"
