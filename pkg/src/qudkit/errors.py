"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class QudkitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(QudkitError):
    """Malformed dataset file; carries the offending line and field."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(f"{message}{suffix}")


class IntegrityError(QudkitError):
    """Cross-reference or invariant violation in loaded data."""


class WindowRangeError(QudkitError):
    """Sentence index outside the document when extracting a context window."""


class ConfigError(QudkitError):
    """Invalid or inconsistent configuration."""


class ValidationError(QudkitError):
    """Input value outside its permitted label/value set."""


class EmptyInputError(QudkitError):
    """An operation that needs data received none."""


class StatisticsError(QudkitError):
    """Degenerate statistical input (e.g., an empty sample)."""


class AlignmentError(QudkitError):
    """Parallel lists that must align item-by-item do not."""


class BackendError(QudkitError):
    """Failure in a pluggable backend."""


class RetryableBackendError(BackendError):
    """Transient backend failure; the runner may retry."""


class BackendUnavailableError(BackendError):
    """Retry budget exhausted or backend not resolvable."""


class ProtocolError(BackendError):
    """Backend returned a malformed response."""


class OverLengthError(BackendError):
    """Prompt exceeds the backend's context limit."""


class ScriptedMissError(BackendError):
    """Scripted mock received a request outside its script."""


class DegenerateOutputError(BackendError):
    """Backend produced empty or unusable generation output."""
