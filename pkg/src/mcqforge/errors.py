"""Exception hierarchy shared across the pipeline.

Per-item failures are meant to be caught at the orchestration layer and
turned into quarantine records, so most of these carry enough context to
name the offending file, entry, or item.
"""

from __future__ import annotations


class McqForgeError(Exception):
    """Base class for all package errors."""


class PreconditionError(McqForgeError, ValueError):
    """An operation was called with arguments violating its contract."""


class RetryableError(McqForgeError):
    """A transient failure that exhausted its retry budget."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class FeedParseError(McqForgeError):
    """A remote metadata feed could not be parsed; names the bad entry."""

    def __init__(self, message: str, entry: str = ""):
        super().__init__(message if not entry else f"{message}: entry {entry!r}")
        self.entry = entry


class ImportError_(McqForgeError):
    """A parsed-paper directory failed validation; names the file."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message if not path else f"{message}: {path}")
        self.path = path


class ConfigurationError(McqForgeError):
    """Invalid or incomplete configuration (bad paths, missing keys, auth)."""


class ReplayMissError(McqForgeError):
    """A replay backend had no transcript entry for the request hash."""

    def __init__(self, request_hash: str):
        super().__init__(f"no transcript entry for request hash {request_hash}")
        self.request_hash = request_hash


class TranscriptError(McqForgeError):
    """A transcript file is corrupt; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


class ExtractionError(McqForgeError):
    """LLM output could not be parsed after the repair budget; keeps the raw text."""

    def __init__(self, message: str, raw_output: str):
        super().__init__(message)
        self.raw_output = raw_output


class FeasibilityError(McqForgeError):
    """The requested task type cannot be drafted from this chain."""


class ConstructionError(McqForgeError):
    """A draft could not be assembled into a valid MCQ item."""


class MalformedRewriteError(McqForgeError):
    """Rewriter output was missing the stem or options; costs one rewrite attempt."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class ReportError(McqForgeError):
    """A report cannot be assembled (e.g. a stage run is missing)."""


class ValidationError(McqForgeError):
    """A domain value violates its type invariants."""


class ConflictError(McqForgeError):
    """A state transition raced or repeated (e.g. reviewing a done task)."""


class UsageError(McqForgeError):
    """Bad CLI invocation; maps to exit code 1."""
