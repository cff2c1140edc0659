"""Exception types shared across the package."""

from __future__ import annotations


class StaRecError(Exception):
    """Base class for all package errors."""


class ConfigError(StaRecError):
    """Invalid configuration or usage (CLI exit code 2)."""


class FormatError(StaRecError):
    """Input data unreadable or overwhelmingly malformed."""


class UnknownKeyError(StaRecError):
    """A user/POI key is absent from the model vocabulary."""


class UnknownPatternError(StaRecError):
    """Query spatiotemporal pattern unseen in training and no fallback applies.

    Carries the pattern that failed so callers can report the policy outcome
    (CLI exit code 3).
    """

    def __init__(self, slot: int, region: int):
        self.slot = slot
        self.region = region
        super().__init__(f"no training pattern reachable from <slot={slot}, region={region}>")


class TrainingDivergedError(StaRecError):
    """Loss became non-finite; learning rate is likely too large."""
