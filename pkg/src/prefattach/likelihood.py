"""Poisson log-likelihood of increments given prior in-degrees.

Each existing vertex's increment is Poisson with mean ``mu * g~(k)``, where
``g~`` is the normalised preference weight. Because the normalised weights
sum to one at every time point, the likelihood factorises into a part in
``mu`` (through the total increment ``A`` and the number of time points
``T``) and a part in the preference parameters. A conjugate Gamma prior on
``mu`` integrates out in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from prefattach import kernels
from prefattach.evolution import SufficientStats
from prefattach.preference import DegenerateWeightsError, PreferenceParams


@dataclass(frozen=True)
class RatePrior:
    """Gamma(a, b) prior on the rate, ``b`` being the rate parameter."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"Gamma prior needs a, b > 0, got ({self.a}, {self.b})")

    @classmethod
    def from_mean_sd(cls, mean: float, sd: float) -> "RatePrior":
        return cls(mean * mean / (sd * sd), mean / (sd * sd))

    @property
    def mean(self) -> float:
        return self.a / self.b

    @property
    def sd(self) -> float:
        return math.sqrt(self.a) / self.b


def log_b(stats: SufficientStats, params: PreferenceParams) -> float:
    """``log B_T``: sum over increments of log normalised weights."""
    value = kernels.log_b(stats, params)
    if math.isnan(value):
        raise DegenerateWeightsError("a time point has zero total preference weight")
    return value


def loglik_full(stats: SufficientStats, params: PreferenceParams, mu: float) -> float:
    """Log-likelihood with the rate ``mu`` given.

    Returns ``-inf`` if an increment was observed on a zero-weight degree.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    lb = log_b(stats, params)
    A = stats.A_total
    return -mu * stats.T + A * math.log(mu) + lb - stats.log_y_factorial


def gamma_fraction(A: float, T: float, a: float, b: float) -> float:
    """Log of the Gamma integral ``b^a G(a + A) / (G(a) (b + T)^(a + A))``."""
    return (a * math.log(b) - math.lgamma(a) + math.lgamma(a + A)
            - (a + A) * math.log(b + T))


def loglik_collapsed(stats: SufficientStats, params: PreferenceParams,
                     prior: RatePrior) -> float:
    """Log marginal likelihood with the rate integrated against its prior."""
    lb = log_b(stats, params)
    if lb == -math.inf:
        return lb
    return lb + gamma_fraction(stats.A_total, stats.T, prior.a, prior.b) - stats.log_y_factorial


def posterior_mu(stats: SufficientStats, prior: RatePrior) -> tuple[float, float]:
    """Shape and rate of the conditional Gamma posterior of the rate."""
    return prior.a + stats.A_total, prior.b + stats.T
