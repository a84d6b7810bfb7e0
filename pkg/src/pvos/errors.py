"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table.
"""

from __future__ import annotations


class PvosError(Exception):
    exit_code = 4


class ConfigError(PvosError):
    exit_code = 2


class DataError(PvosError):
    exit_code = 3


class ShapeError(DataError, ValueError):
    """Operands do not share dimensions."""


class DomainError(DataError, ValueError):
    """A scalar argument is outside its documented range."""


class DegenerateInputError(DomainError):
    """Input is well-typed but mathematically degenerate (e.g. a zero vector)."""


class EmptyPoolError(DataError, ValueError):
    pass


class FormatError(DataError):
    """Malformed manifest or RLE payload."""


class AlignmentError(DataError):
    """Prediction and ground truth disagree on frame indexing or size."""


class CoverageError(DataError):
    """A required prediction or masklet is missing."""


class StateError(PvosError, RuntimeError):
    """Operation invoked in the wrong controller or engine state."""
