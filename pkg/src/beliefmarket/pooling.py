"""Centralized opinion pools with weights derived from risk aversion.

All products are evaluated as exponentials of weighted log sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0:
            raise DomainError("weight vector is empty")
        if not np.all(w > 0):
            raise DomainError("every pool weight must be positive")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise DomainError(f"pool weights sum to {math.fsum(w)!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.size

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.full(n, 1.0 / n))


def risk_weights(cs: Sequence[float]) -> WeightVector:
    """Normalized inverse risk aversion: ``(1/c_i) / sum_j (1/c_j)``."""
    c = np.asarray(cs, dtype=float).reshape(-1)
    if c.size == 0 or not np.all((c > 0) & np.isfinite(c)):
        raise DomainError("risk aversion coefficients must be positive and finite")
    inv = 1.0 / c
    return WeightVector(inv / math.fsum(inv))


def _probs(probs: Sequence[float], weights: WeightVector) -> np.ndarray:
    p = np.asarray(probs, dtype=float).reshape(-1)
    if p.shape != weights.weights.shape:
        raise DomainError(f"{p.size} probabilities for {len(weights)} weights")
    if not np.all((p > 0) & (p < 1)):
        raise DomainError("pooled probabilities must lie strictly inside (0, 1)")
    return p


def _weighted_log(values: np.ndarray, weights: WeightVector) -> float:
    return math.fsum(weights.weights * np.log(values))


def logop_normalized(probs: Sequence[float], weights: WeightVector) -> float:
    """Weighted geometric mean of Pr(A), renormalized against that of Pr(not A)."""
    p = _probs(probs, weights)
    return float(expit(_weighted_log(p, weights) - _weighted_log(1.0 - p, weights)))


def logop_unnormalized(probs: Sequence[float], weights: WeightVector) -> float:
    """Plain weighted geometric mean; not a probability once agents disagree."""
    p = _probs(probs, weights)
    return math.exp(_weighted_log(p, weights))


def disagreement(probs: Sequence[float], weights: WeightVector) -> float:
    """How far the unnormalized pools of A and not-A fall short of summing to one."""
    p = _probs(probs, weights)
    return 1.0 - (logop_unnormalized(p, weights) + logop_unnormalized(1.0 - p, weights))


def logop_categorical(dists: np.ndarray, weights: WeightVector) -> np.ndarray:
    """Normalized log pool over K mutually exclusive outcomes (rows = agents)."""
    d = np.asarray(dists, dtype=float)
    if d.ndim != 2 or d.shape[0] != len(weights):
        raise DomainError("need one distribution row per weight")
    if not np.all(d > 0):
        raise DomainError("pooled probabilities must be positive")
    logs = weights.weights @ np.log(d)
    logs -= logs.max()
    e = np.exp(logs)
    return e / e.sum()


def linear_pool(probs: Sequence[float], weights: WeightVector) -> float:
    """Weighted arithmetic mean, kept only as a comparison column in reports."""
    p = _probs(probs, weights)
    return math.fsum(weights.weights * p)
