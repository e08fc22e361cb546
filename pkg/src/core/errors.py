"""
Exception hierarchy for the head-pose tracker.

Value problems (non-finite numbers, bad dt, empty inputs) raise ValueError.
Everything that concerns stream state, ordering or numerical health raises
a TrackerError subclass so callers can map it to a data error.
"""

from typing import List, Optional, Tuple


class TrackerError(Exception):
    """Base class for tracker failures."""


class ConfigError(TrackerError):
    """Configuration could not be loaded or resolved."""


class OrderingError(TrackerError):
    """A frame arrived with a timestamp that does not advance the session."""

    def __init__(self, timestamp: float, last_timestamp: float):
        super().__init__(
            f"frame timestamp {timestamp!r} does not advance past {last_timestamp!r}"
        )
        self.timestamp = timestamp
        self.last_timestamp = last_timestamp


class DegradedCovarianceError(TrackerError):
    """Innovation covariance too ill-conditioned to invert."""

    def __init__(self, condition_number: float):
        super().__init__(
            f"innovation covariance is singular (condition number {condition_number:.3e})"
        )
        self.condition_number = condition_number


class StreamFormatError(TrackerError):
    """A stream file line could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")
        self.line = line
        self.path = path


class StreamOrderError(TrackerError):
    """Records whose timestamps regress within a stream."""

    def __init__(self, rejected: List[Tuple[int, float]], path: Optional[str] = None):
        lines = ", ".join(f"line {line} (t={t!r})" for line, t in rejected[:10])
        more = f" and {len(rejected) - 10} more" if len(rejected) > 10 else ""
        prefix = f"{path}: " if path else ""
        super().__init__(f"{prefix}timestamp regression at {lines}{more}")
        self.rejected = rejected
        self.path = path


class PipelineError(TrackerError):
    """A session error aborted a pipeline run."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"frame {index}: {cause}")
        self.index = index
        self.cause = cause
