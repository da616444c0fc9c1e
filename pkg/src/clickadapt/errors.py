"""Typed errors raised across the package.

Every failure mode that callers are expected to handle gets its own class so
that the HTTP layer and the CLI can map them to stable status / exit codes
without string matching.
"""

from __future__ import annotations


class ClickAdaptError(Exception):
    """Base class for all package errors."""


# --------------------------------------------------------------- mask / data


class DimensionMismatch(ClickAdaptError):
    """Two rasters that must share a shape do not."""


class OutOfBounds(ClickAdaptError):
    """A click lies outside the raster it targets."""


class ConflictingClicks(ClickAdaptError):
    """Two clicks at the same pixel carry opposite labels."""


class MalformedEncoding(ClickAdaptError):
    """A serialized mask (or checkpoint payload) does not parse."""


class NoMisclassifiedPixels(ClickAdaptError):
    """Prediction and ground truth agree everywhere; no click can be placed."""


class EmptyLabel(ClickAdaptError):
    """A supervision mask contains no labeled pixel at all."""


# ------------------------------------------------------------------- decoder


class StaleCache(ClickAdaptError):
    """A backward pass was requested with a cache from an outdated forward."""


class NoSnapshot(ClickAdaptError):
    """restore() was called on a decoder that never took a snapshot."""


class UnknownName(ClickAdaptError):
    """A registry lookup referenced a decoder name that does not exist."""


class NameCollision(ClickAdaptError):
    """A registry insert would overwrite an existing decoder name."""


class CheckpointError(ClickAdaptError):
    """A checkpoint blob is truncated, corrupted, or version-incompatible."""


# ----------------------------------------------------------------- data sets


class ManifestError(ClickAdaptError):
    """A dataset manifest does not parse or references broken entries."""


class ParseError(ManifestError):
    """A manifest line is malformed or an id is duplicated."""


class MissingFile(ManifestError):
    """A manifest entry points at a path that does not exist."""


class EmptyGroundTruth(ManifestError):
    """A ground-truth mask is empty after ingestion."""


class EmptyDataset(ManifestError):
    """A manifest or synthetic request yields zero images."""


class ConfigError(ClickAdaptError):
    """An adaptation config file or value is invalid."""


# ------------------------------------------------------------------- metrics


class MixedBudgets(ClickAdaptError):
    """Session records produced under different (budget, threshold) settings."""


# ------------------------------------------------------------------- service


class UnknownSession(ClickAdaptError):
    """A session id does not exist."""


class SessionFinished(ClickAdaptError):
    """A mutating request hit a session that is already finished."""


class NothingToUndo(ClickAdaptError):
    """Undo was requested on a session with zero clicks."""


class DecodeError(ClickAdaptError):
    """An uploaded image payload could not be decoded."""
