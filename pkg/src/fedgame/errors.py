"""Typed errors raised by the simulator and its command-line harness.

Each error class maps to a distinct process exit code so that scripted
callers can tell a bad config from a diverged run without parsing stderr.
"""

from __future__ import annotations


class FedGameError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(FedGameError):
    """Malformed or inconsistent inputs: bad config files, dimension
    mismatches, out-of-range strategy parameters."""

    exit_code = 2


class DivergenceError(FedGameError):
    """The model iterate left the trust region or became non-finite."""

    exit_code = 3

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"model diverged at step {step}")


class ScheduleError(FedGameError):
    """A payment schedule could not be built from the requested
    learning-rate sequence (e.g. a contraction factor is not positive)."""

    exit_code = 4


class StatisticsError(FedGameError):
    """An estimate was requested from too few replications to report a
    standard error."""

    exit_code = 5


class AnalysisError(FedGameError):
    """An analysis routine was called on a run that lacks the required
    recorded data (e.g. total payments on a run without a payment rule)."""

    exit_code = 1
