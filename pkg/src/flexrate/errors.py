"""Exception types shared across the flexrate package."""

from __future__ import annotations


class FlexrateError(Exception):
    """Base class for every error raised by this package."""


class FormatError(FlexrateError):
    """A file or buffer does not follow the declared container layout."""


class CorruptionError(FlexrateError):
    """A container parsed structurally but its content is damaged."""


class ConfigError(FlexrateError):
    """An operation was called with out-of-range or inconsistent settings."""


class AlignmentError(FlexrateError):
    """Paired sequences disagree on length, rate, or stream kind."""


class PlanMismatchError(FlexrateError):
    """A merge plan does not describe the sequence it was applied to."""


class FitError(FlexrateError):
    """Quantizer fitting failed, usually from degenerate training data."""


class InsufficientDataError(FlexrateError):
    """Too few frames were supplied for the requested operation."""


class CodecMismatchError(FlexrateError):
    """A bitstream was produced by a different quantizer pair."""


class DomainError(FlexrateError):
    """The requested quantity is mathematically undefined for this input."""


class ValidationError(FlexrateError):
    """Caller-supplied records (annotations, token values) are malformed."""
