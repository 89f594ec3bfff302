"""Exception taxonomy shared across the toolkit.

Plain precondition violations (empty inputs, out-of-range labels) raise
ValueError; the classes here mark failures a caller may want to route on,
and they map onto the CLI exit codes in :mod:`attrscore.cli`.
"""


class AttrScoreError(Exception):
    """Base class for toolkit errors."""


class ConfigError(AttrScoreError):
    """Bad or missing configuration: unknown provider, missing API key env
    var, malformed config file, invalid run config."""


class DatasetError(AttrScoreError):
    """Unreadable or malformed input data (dataset files, label exports,
    ontology documents)."""


class TransportError(AttrScoreError):
    """Provider call failed after retries were exhausted; ``__cause__``
    carries the last underlying error."""


class ResponseParseError(AttrScoreError):
    """A model response could not be parsed into the expected shape
    (structured object, integer score, ...)."""


class UndefinedStatError(AttrScoreError):
    """A statistic is mathematically undefined for the given input
    (constant series, single-category rating matrix)."""


class EmbeddingError(AttrScoreError):
    """A token-embedding provider returned unusable vectors (dimension
    mismatch, zero-norm vector)."""
