"""Typed errors raised across the toolkit.

Every failure on user-supplied input maps to one of these classes so the
CLI can turn it into exit code 2 (input error) or 1 (invariant failure).
"""

from __future__ import annotations


class RadevalError(Exception):
    """Base class for all toolkit errors."""


class ContractError(RadevalError, ValueError):
    """An operation was called with arguments outside its contract (shapes, dims)."""


class MalformedAnnotationError(RadevalError, ValueError):
    """Annotation, label or record data violates its schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedMetricError(RadevalError, ValueError):
    """A metric has no defined value for the given input (e.g. mean of nothing)."""


class DicomError(RadevalError):
    """Base class for DICOM parsing failures."""


class MalformedFileError(DicomError):
    """The byte stream is not a well-formed DICOM object."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class UnsupportedDicomError(DicomError):
    """Well-formed DICOM that uses a feature outside the supported scope."""


class UnsupportedSyntaxError(UnsupportedDicomError):
    """The file uses a transfer syntax other than uncompressed little endian."""

    def __init__(self, message: str, uid: str | None = None):
        self.uid = uid
        super().__init__(message)
