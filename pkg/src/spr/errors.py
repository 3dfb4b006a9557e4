"""Exception types shared across the engine."""

from __future__ import annotations


class SPRError(Exception):
    """Base class for engine errors that map to a data-error exit."""


class FormatError(SPRError):
    """A binary or line-oriented artifact failed structural validation."""


class AnnotationError(SPRError):
    """An annotation document referenced unknown data or violated bounds."""
