"""Preference functions and their normalised weights.

Two families are supported. The power form ``g(k) = k**alpha + delta`` and
the piecewise form, which follows the power curve up to a threshold
``gamma`` and grows linearly with slope ``beta`` beyond it.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

POWER = 0
PIECEWISE = 1


class DegenerateWeightsError(ValueError):
    """All preference weights are zero, so normalisation is undefined."""


@dataclass(frozen=True)
class PreferenceParams:
    """Preference-function indicator and parameters.

    Parameters
    ----------
    r : int
        0 for the power form, 1 for the piecewise form.
    alpha : float
        Power exponent, > 0.
    beta : float, optional
        Linear slope above the threshold (piecewise only), > 0.
    gamma : float, optional
        Threshold degree (piecewise only), > 0.
    delta : float
        Zero-appeal, > 0 unless ``delta_fixed`` in which case it must be 0.
    delta_fixed : bool
        Zero-appeal structurally fixed to 0.
    """

    r: int
    alpha: float
    beta: float | None = None
    gamma: float | None = None
    delta: float = 0.0
    delta_fixed: bool = False

    def __post_init__(self):
        if self.r not in (POWER, PIECEWISE):
            raise ValueError(f"r must be 0 or 1, got {self.r!r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if self.r == PIECEWISE:
            if self.beta is None or not self.beta > 0:
                raise ValueError(f"beta must be positive, got {self.beta!r}")
            if self.gamma is None or not self.gamma > 0:
                raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        if self.delta_fixed:
            if self.delta != 0:
                raise ValueError("delta must be 0 when delta_fixed")
        elif not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")

    @classmethod
    def power(cls, alpha: float, delta: float = 0.0) -> "PreferenceParams":
        return cls(POWER, alpha, delta=delta, delta_fixed=delta == 0)

    @classmethod
    def piecewise(cls, alpha: float, beta: float, gamma: float,
                  delta: float = 0.0) -> "PreferenceParams":
        return cls(PIECEWISE, alpha, beta, gamma, delta=delta, delta_fixed=delta == 0)

    @property
    def names(self) -> tuple[str, ...]:
        return parameter_names(self.r, self.delta_fixed)

    def as_power(self) -> "PreferenceParams":
        return replace(self, r=POWER, beta=None, gamma=None)

    def values(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in self.names}


def parameter_names(r: int, delta_fixed: bool = False) -> tuple[str, ...]:
    """Free parameter names of a preference function, in canonical order."""
    names = ("alpha", "beta", "gamma") if r == PIECEWISE else ("alpha",)
    return names if delta_fixed else names + ("delta",)


def g(k, params: PreferenceParams):
    """Evaluate the preference function at degree(s) ``k``.

    ``k**alpha`` is taken as ``exp(alpha * log k)`` for ``k >= 1`` and as 0
    for ``k == 0``. Scalars in, scalar out.
    """
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0):
        raise ValueError("degrees must be non-negative")
    out = np.full(k_arr.shape, params.delta, dtype=float)
    pos = k_arr > 0
    out[pos] += np.exp(params.alpha * np.log(k_arr[pos]))
    if params.r == PIECEWISE:
        upper = k_arr >= params.gamma
        kink = np.exp(params.alpha * np.log(params.gamma))
        out[upper] = kink + params.beta * (k_arr[upper] - params.gamma) + params.delta
    if out.ndim == 0:
        return float(out)
    return out


def normalize(degree_histogram: Mapping[int, int], params: PreferenceParams):
    """Total preference weight of a set of vertices given as a histogram.

    Returns
    -------
    total : float
        ``sum_k count(k) * g(k)``.
    log_total : float

    Raises
    ------
    DegenerateWeightsError
        If the histogram is empty or every weight is zero.
    """
    if not degree_histogram:
        raise DegenerateWeightsError("empty degree histogram")
    ks = np.fromiter(degree_histogram.keys(), dtype=float)
    counts = np.fromiter(degree_histogram.values(), dtype=float)
    total = float(np.dot(counts, g(ks, params)))
    if not total > 0:
        raise DegenerateWeightsError("all preference weights are zero")
    return total, float(np.log(total))


def normalized_weights(degrees, params: PreferenceParams) -> np.ndarray:
    """Per-vertex normalised weights ``g(k_i) / sum_j g(k_j)``."""
    w = np.atleast_1d(g(np.asarray(degrees), params))
    total = w.sum()
    if w.size == 0 or not total > 0:
        raise DegenerateWeightsError("all preference weights are zero")
    return w / total
