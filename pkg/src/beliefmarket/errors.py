"""Exception hierarchy shared by every module."""

from __future__ import annotations

from typing import Any


class BeliefMarketError(Exception):
    """Base class for all package errors."""


class DomainError(BeliefMarketError, ValueError):
    """Input outside the domain of an operation (boundary probabilities, bad shapes)."""


class SampleSpaceMismatch(DomainError):
    """Objects built over different sample spaces were combined."""


class ArbitrageError(BeliefMarketError):
    """Prices admit arbitrage, so utility-maximizing demand is unbounded.

    ``direction`` is a portfolio whose payoff is nonnegative in every atom and
    positive in at least one (``None`` only when no certificate could be built).
    """

    def __init__(self, message: str, direction: Any = None, verdict: Any = None):
        super().__init__(message)
        self.direction = direction
        self.verdict = verdict


class SolverError(BeliefMarketError):
    """An iterative solver hit its iteration cap or stalled."""

    def __init__(self, message: str, trace: Any = None, best: Any = None, residual: float | None = None):
        super().__init__(message)
        self.trace = trace
        self.best = best
        self.residual = residual


class ScenarioError(DomainError):
    """A scenario file failed to parse or validate; ``field`` names the culprit."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
