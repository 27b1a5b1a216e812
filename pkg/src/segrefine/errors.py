"""Exception hierarchy shared by every segrefine subpackage.

Library code raises these; only the CLI turns them into exit codes.
"""

from __future__ import annotations


class SegRefineError(Exception):
    """Base class for all domain errors."""


class EmptyMask(SegRefineError):
    pass


class DimensionMismatch(SegRefineError):
    def __init__(self, message: str, *, filename: str | None = None) -> None:
        super().__init__(message)
        self.filename = filename


class MissingFile(SegRefineError):
    def __init__(self, filename: str) -> None:
        super().__init__(f"Missing required file: {filename}")
        self.filename = filename


class CorruptEncoding(SegRefineError):
    def __init__(self, filename: str, reason: str) -> None:
        super().__init__(f"Corrupt encoding in {filename}: {reason}")
        self.filename = filename
        self.reason = reason


class ConfigInvalid(SegRefineError):
    def __init__(self, field: str, reason: str) -> None:
        super().__init__(f"Invalid configuration field '{field}': {reason}")
        self.field = field
        self.reason = reason


class ProviderUnavailable(SegRefineError):
    pass


class NoPositiveWeight(SegRefineError):
    """No contour pixel carries split weight: the mask has no split-able boundary."""


class DegeneratePath(SegRefineError):
    pass


class NotNeighbors(SegRefineError):
    pass


class UnknownNode(SegRefineError):
    pass


class InvalidPayload(SegRefineError):
    pass


class CorruptModel(SegRefineError):
    pass


class DimMismatch(SegRefineError):
    pass


class EmptyList(SegRefineError):
    pass


class MissingScene(SegRefineError):
    def __init__(self, scene_id: str, directory: str) -> None:
        super().__init__(f"Scene '{scene_id}' missing from {directory}")
        self.scene_id = scene_id
        self.directory = directory


class FrameMismatch(SegRefineError):
    pass


class StorageError(SegRefineError):
    """A file or directory could not be read or written."""

    def __init__(self, filename: str, reason: str) -> None:
        super().__init__(f"Cannot access {filename}: {reason}")
        self.filename = filename
        self.reason = reason
