"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigurationError -> 1, DataError and
its subclasses -> 2, anything else -> 3.
"""


class CopyforgeError(Exception):
    """Base class for all copyforge errors."""


class ConfigurationError(CopyforgeError):
    """Invalid configuration value or combination."""


class DataError(CopyforgeError):
    """Invalid, missing, or corrupt input data."""


class DegenerateDataError(DataError):
    """Input lacks the label/score diversity an operation requires."""


class IntegrityError(DataError):
    """A stored record failed its integrity checks."""


class StaleIndexError(DataError):
    """A persisted index was built under a different fuser configuration."""


class TemplateError(DataError):
    """A prompt template is malformed."""


class ShapeMismatchError(CopyforgeError):
    """Array dimensions disagree with what an operation expects."""


class NumericError(CopyforgeError):
    """Non-finite values or numerically undefined quantities."""


class UndefinedSimilarityError(NumericError):
    """Cosine similarity requested against a zero vector."""
