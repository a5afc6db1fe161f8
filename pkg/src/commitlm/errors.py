"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CommitLMError(Exception):
    """Base class for all package errors."""


class MalformedHeader(CommitLMError):
    pass


class MalformedDiff(CommitLMError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class MalformedCommit(CommitLMError):
    pass


class EmptyCorpus(CommitLMError):
    pass


class TooLong(CommitLMError):
    def __init__(self, length: int, limit: int):
        super().__init__(f"sequence length {length} exceeds maximum {limit}")
        self.length = length
        self.limit = limit


class NoChange(CommitLMError):
    pass


class MalformedSequence(CommitLMError):
    pass


class EmptyGraph(CommitLMError):
    pass


class TooFewSteps(CommitLMError):
    pass


class ConfigError(CommitLMError):
    pass


class PositionOverflow(CommitLMError):
    pass


class ZeroVector(CommitLMError):
    pass


class DropoutDisabled(CommitLMError):
    pass


class NonFiniteLoss(CommitLMError):
    pass


class VersionMismatch(CommitLMError):
    pass


class CorruptFile(CommitLMError):
    pass


class NotConsecutive(CommitLMError):
    pass


class NoAddedLines(CommitLMError):
    pass


class TooSmall(CommitLMError):
    pass


class LengthMismatch(CommitLMError):
    pass


class IngestAborted(CommitLMError):
    """Storage failed mid-ingest; ``report`` counts what was processed before."""

    def __init__(self, message: str, report):
        super().__init__(message)
        self.report = report


class CorpusTooSmall(UserWarning):
    """Emitted when BPE training runs out of pairs before reaching the requested size."""
