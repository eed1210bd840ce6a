"""Prior and hyperprior constants plus their log densities."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

ETAS = ("alpha", "beta", "gamma", "delta", "mu")
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def normal_logpdf(x, mean, sd):
    z = (np.asarray(x, dtype=float) - mean) / sd
    return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI


def half_cauchy_logpdf(sigma, scale):
    """Log density ``log(2 / (pi * scale * (1 + (sigma / scale)**2)))`` on sigma > 0.

    Returns ``-inf`` for ``sigma <= 0``.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(sigma > 0, np.log(2 / (math.pi * scale * (1 + (sigma / scale) ** 2))),
                       -np.inf)
    return float(out) if out.ndim == 0 else out


def truncnormal_logpdf(x, mean, sd):
    """Normal density truncated to ``x > 0``, normalising mass included."""
    x = np.asarray(x, dtype=float)
    out = normal_logpdf(x, mean, sd) - log_ndtr(mean / sd)
    return np.where(x > 0, out, -np.inf)


@dataclass(frozen=True)
class HyperConfig:
    """Prior constants for the single and hierarchical models.

    Single model: independent normal priors on the log of each preference
    parameter (``prior_log_mean``, ``prior_log_sd``) and a Gamma
    (``rate_a``, ``rate_b``) prior on the rate.

    Hierarchical model: for each ``eta`` in alpha, beta, gamma, delta, mu,
    ``mu_eta ~ N(m_eta, s_eta**2)`` and ``sigma_eta ~ HalfCauchy(r_eta)``.
    ``None`` for ``m_gamma``/``m_mu`` means "derive from the data" (median
    positive degree, mean increment per time point). ``hier_scale`` selects
    whether period parameters are normal on their natural scale (truncated
    to be positive) or on the log scale; ``m_*`` are always given on the
    natural scale and are log-transformed for the latter.
    ``truncation_mass`` adds the normalising constant of the positive
    restriction to the hyperparameter updates (left out by default).
    """

    prior_log_mean: float = 0.0
    prior_log_sd: float = 10.0
    rate_a: float = 1.0
    rate_b: float = 0.01
    m_alpha: float | None = 1.0
    m_beta: float | None = 1.0
    m_gamma: float | None = None
    m_delta: float | None = 1.0
    m_mu: float | None = None
    s_alpha: float = 10.0
    s_beta: float = 10.0
    s_gamma: float = 10.0
    s_delta: float = 10.0
    s_mu: float = 10.0
    r_alpha: float = 5.0
    r_beta: float = 5.0
    r_gamma: float = 5.0
    r_delta: float = 5.0
    r_mu: float = 5.0
    hier_scale: str = "natural"
    truncation_mass: bool = False

    def __post_init__(self):
        if not self.prior_log_sd > 0:
            raise ValueError("prior_log_sd must be positive")
        if not (self.rate_a > 0 and self.rate_b > 0):
            raise ValueError("rate_a and rate_b must be positive")
        for eta in ETAS:
            for prefix in ("s_", "r_"):
                v = getattr(self, prefix + eta)
                if not v > 0:
                    raise ValueError(f"{prefix}{eta} must be positive, got {v}")
        if self.hier_scale not in ("natural", "log"):
            raise ValueError("hier_scale must be 'natural' or 'log'")

    @classmethod
    def from_dict(cls, d: dict) -> "HyperConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown prior keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def m(self, eta: str) -> float:
        return getattr(self, "m_" + eta)

    def s(self, eta: str) -> float:
        return getattr(self, "s_" + eta)

    def r(self, eta: str) -> float:
        return getattr(self, "r_" + eta)

    def resolve(self, stats: Sequence) -> "HyperConfig":
        """Fill data-derived defaults from one or more ``SufficientStats``."""
        changes = {}
        if self.m_gamma is None:
            degs = np.concatenate([np.repeat(s.degrees[s.c_idx], s.c_cnt.astype(int))
                                   for s in stats])
            degs = degs[degs > 0]
            changes["m_gamma"] = float(np.median(degs)) if degs.size else 1.0
        if self.m_mu is None:
            total = sum(s.A_total for s in stats)
            T = sum(s.T for s in stats)
            changes["m_mu"] = total / T if T else 1.0
        return replace(self, **changes)

    def log_prior_single(self, values: np.ndarray) -> float:
        """Log-normal prior density of positive parameter values."""
        logv = np.log(values)
        return float(np.sum(normal_logpdf(logv, self.prior_log_mean, self.prior_log_sd) - logv))
