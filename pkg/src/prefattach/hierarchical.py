"""Hierarchical model: preference parameters and rate vary by period.

Each period ``s`` has its own preference parameters ``theta_s`` and is fitted
with the collapsed likelihood, where the Gamma prior on its rate is written
through a mean ``mu_mu`` and standard deviation ``sigma_mu`` shared by all
periods (``a = mu_mu**2 / sigma_mu**2``, ``b = mu_mu / sigma_mu**2``).

Period parameters are exchangeable given hyperparameters: for each
``eta``, ``theta_s[eta] ~ N(mu_eta, sigma_eta**2)`` restricted to positive
values (or, with ``hier_scale="log"``, ``log theta_s[eta]`` is normal). The
hyperpriors are ``mu_eta ~ N(m_eta, s_eta**2)`` and
``sigma_eta ~ HalfCauchy(r_eta)``.

By default the truncation mass ``Phi(mu_eta / sigma_eta)`` of the positive
restriction is left out of the hyperparameter updates; set
``HyperConfig.truncation_mass`` to include it.
"""
from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

from prefattach import kernels
from prefattach.evolution import SufficientStats, concat_stats
from prefattach.likelihood import RatePrior, gamma_fraction, log_b
from prefattach.preference import PIECEWISE, PreferenceParams, parameter_names
from prefattach.priors import HyperConfig, half_cauchy_logpdf
from prefattach.sampler import (DEFAULT_SCALE, AdaptationWarning, ChainConfig, ChainResult,
                                GammaJump, InitializationError, RobbinsMonro, SinglePosterior,
                                mh_step)

__all__ = ["HyperConfig", "half_cauchy_logpdf", "rate_prior", "loglik_period", "HierPosterior",
           "fit_hier", "state_dimension"]

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def rate_prior(mu_mu: float, sigma_mu: float) -> RatePrior:
    """Gamma prior with mean ``mu_mu`` and standard deviation ``sigma_mu``."""
    if not (mu_mu > 0 and sigma_mu > 0):
        raise ValueError("mu_mu and sigma_mu must be positive")
    return RatePrior(mu_mu ** 2 / sigma_mu ** 2, mu_mu / sigma_mu ** 2)


def loglik_period(stats_s: SufficientStats, params: PreferenceParams, mu_mu: float,
                  sigma_mu: float) -> float:
    """Collapsed log-likelihood of one period under the mean/sd rate prior."""
    prior = rate_prior(mu_mu, sigma_mu)
    lb = log_b(stats_s, params)
    if lb == -math.inf:
        return lb
    return lb + gamma_fraction(stats_s.A_total, stats_s.T, prior.a, prior.b) - stats_s.log_y_factorial


def state_dimension(S: int, r: int, delta_fixed: bool = False) -> int:
    """Number of unknowns: period parameters, their (mu, sigma) pairs and the rate pair."""
    d = len(parameter_names(r, delta_fixed))
    return d * S + 2 * d + 2


def _normal(x: float, mean: float, sd: float) -> float:
    z = (x - mean) / sd
    return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI


class HierPosterior:
    """Log posterior pieces over the working (unconstrained) coordinates.

    Working coordinates: ``u[s, j] = log theta_s[j]``; ``mu_eta`` as is;
    ``log sigma_eta``; ``log mu_mu`` and ``log sigma_mu``.
    """

    def __init__(self, periods: Sequence[SufficientStats], r: int, cfg: HyperConfig,
                 delta_fixed: bool = False):
        self.periods = list(periods)
        self.S = len(self.periods)
        self.r = r
        self.delta_fixed = delta_fixed
        self.cfg = cfg.resolve(self.periods)
        self.names = parameter_names(r, delta_fixed)
        self.d = len(self.names)
        self.log_scale = self.cfg.hier_scale == "log"
        self.exact_mass = self.cfg.truncation_mass
        self.A = np.array([p.A_total for p in self.periods], dtype=float)
        self.T = np.array([p.T for p in self.periods], dtype=float)
        self.lyf = np.array([p.log_y_factorial for p in self.periods])
        self._piecewise = r == PIECEWISE
        m = np.array([self.cfg.m(n) for n in self.names], dtype=float)
        self.hyper_mean = np.log(m) if self.log_scale else m
        self.hyper_sd = np.array([self.cfg.s(n) for n in self.names], dtype=float)
        self.hyper_scale = np.array([self.cfg.r(n) for n in self.names], dtype=float)

    # likelihood ---------------------------------------------------------
    def unpack(self, u_s) -> tuple[float, float, float, float]:
        alpha = math.exp(u_s[0])
        beta = math.exp(u_s[1]) if self._piecewise else 0.0
        gamma = math.exp(u_s[2]) if self._piecewise else 0.0
        delta = 0.0 if self.delta_fixed else math.exp(u_s[-1])
        return alpha, beta, gamma, delta

    def log_b(self, s: int, u_s) -> float:
        if max(abs(v) for v in u_s) > 600:
            return -math.inf
        v = kernels.log_b_raw(self.periods[s], self._piecewise, *self.unpack(u_s))
        return -math.inf if math.isnan(v) else v

    def rate_terms(self, log_mm: float, log_sm: float) -> float:
        """Sum over periods of the Gamma fraction (the log y! terms are constant)."""
        mm, sm = math.exp(log_mm), math.exp(log_sm)
        a, b = mm * mm / (sm * sm), mm / (sm * sm)
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
            return -math.inf
        return float(a * math.log(b) * self.S - self.S * math.lgamma(a)
                     + sum(math.lgamma(a + A) - (a + A) * math.log(b + T)
                           for A, T in zip(self.A, self.T)))

    # priors ---------------------------------------------------------------
    def theta_prior(self, j: int, u: float, mu: float, log_sigma: float) -> float:
        """Log density of one period parameter, in working coordinates."""
        sigma = math.exp(log_sigma)
        if self.log_scale:
            return _normal(u, mu, sigma)
        return _normal(math.exp(u), mu, sigma) + u

    def theta_prior_all(self, j: int, col: np.ndarray, mu: float, log_sigma: float) -> float:
        sigma = math.exp(log_sigma)
        x = col if self.log_scale else np.exp(col)
        z = (x - mu) / sigma
        out = float(np.sum(-0.5 * z * z)) - col.size * (log_sigma + _LOG_SQRT_2PI)
        if not self.log_scale:
            out += float(col.sum())
            if self.exact_mass:
                out -= col.size * float(log_ndtr(mu / sigma))
        return out

    def hyper_prior(self, j: int, mu: float, log_sigma: float) -> float:
        return (_normal(mu, self.hyper_mean[j], self.hyper_sd[j])
                + half_cauchy_logpdf(math.exp(log_sigma), self.hyper_scale[j]) + log_sigma)

    def rate_hyper_prior(self, log_mm: float, log_sm: float) -> float:
        return (_normal(math.exp(log_mm), self.cfg.m_mu, self.cfg.s_mu) + log_mm
                + half_cauchy_logpdf(math.exp(log_sm), self.cfg.r_mu) + log_sm)

    # full density ---------------------------------------------------------
    def log_posterior(self, theta: np.ndarray, hyper: np.ndarray, rate: np.ndarray) -> float:
        """Joint log posterior, up to a constant, in working coordinates.

        ``theta`` is (S, d) of log parameters, ``hyper`` is (d, 2) of
        ``(mu_eta, log sigma_eta)`` and ``rate`` is ``(log mu_mu, log sigma_mu)``.
        """
        total = self.rate_terms(*rate) - float(self.lyf.sum()) + self.rate_hyper_prior(*rate)
        for s in range(self.S):
            total += self.log_b(s, theta[s])
        for j in range(self.d):
            total += self.theta_prior_all(j, theta[:, j], *hyper[j]) + self.hyper_prior(j, *hyper[j])
        return total


def fit_hier(periods: Sequence[SufficientStats], r: int, cfg: HyperConfig | None = None,
             chain_cfg: ChainConfig | None = None, delta_fixed: bool = False,
             fixed_hyper: dict | None = None) -> ChainResult:
    """Metropolis-within-Gibbs for the hierarchical model.

    One iteration updates every period's parameters (one coordinate at a
    time, plus an independence jump on the threshold for the piecewise
    form), then each ``(mu_eta, sigma_eta)`` pair and finally
    ``(mu_mu, sigma_mu)``. Step sizes adapt during burn-in only.

    Parameters
    ----------
    periods : sequence of SufficientStats
        One entry per period, in time order.
    r : int
        Preference form, 0 (power) or 1 (piecewise).
    cfg : HyperConfig, optional
        Hyperprior constants; data-driven defaults are filled in.
    chain_cfg : ChainConfig, optional
        Defaults to :meth:`ChainConfig.hier_default`.
    delta_fixed : bool
        Fix every period's ``delta`` at 0 (deletion increments).
    fixed_hyper : dict, optional
        Hold some hyperparameters at given values, keyed by trace column
        name (``mu_alpha``, ``sigma_alpha``, ..., ``mu_mu``, ``sigma_mu``).
        A single period is only accepted when all of them are fixed.

    Returns
    -------
    ChainResult
        Columns ``<eta>_s<k>`` for each period, then ``mu_<eta>`` and
        ``sigma_<eta>``, then ``mu_mu``, ``sigma_mu`` and the per-period
        rates ``mu_s<k>`` drawn from their conditional Gamma posteriors.
    """
    periods = list(periods)
    S = len(periods)
    cfg = cfg or HyperConfig()
    chain_cfg = chain_cfg or ChainConfig.hier_default()
    fixed_hyper = dict(fixed_hyper or {})
    names = parameter_names(r, delta_fixed)
    d = len(names)
    hyper_names = [f"{p}_{n}" for n in names for p in ("mu", "sigma")] + ["mu_mu", "sigma_mu"]
    unknown = set(fixed_hyper) - set(hyper_names)
    if unknown:
        raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
    if S == 0:
        raise ValueError("no periods given")
    if S == 1 and len(fixed_hyper) < len(hyper_names):
        raise ValueError("a single period cannot inform the hyperparameters; "
                         "fit the single (time-constant) model instead")
    for k, v in fixed_hyper.items():
        if k.startswith("sigma") or k == "mu_mu":
            if not v > 0:
                raise ValueError(f"{k} must be positive")
    post = HierPosterior(periods, r, cfg, delta_fixed)
    rng = np.random.default_rng(chain_cfg.seed)

    # starting point: pooled posterior mode for every period
    pooled = SinglePosterior(concat_stats(periods), r, cfg, delta_fixed)
    u0 = pooled.mode()
    if not math.isfinite(pooled.log_target(u0)):
        u0 = pooled.initial()
    theta = np.tile(np.asarray(u0, dtype=float), (S, 1))
    hyper = np.empty((d, 2))
    for j in range(d):
        hyper[j, 0] = u0[j] if post.log_scale else math.exp(u0[j])
        hyper[j, 1] = 0.0
    rates = post.A / post.T
    mm = post.cfg.m_mu
    sm = max(float(rates.std()), 0.1 * mm) if S > 1 else 0.5 * mm
    rate = np.array([math.log(mm), math.log(sm)])
    for k, v in fixed_hyper.items():
        if k == "mu_mu":
            rate[0] = math.log(v)
        elif k == "sigma_mu":
            rate[1] = math.log(v)
        else:
            kind, eta = k.split("_", 1)
            j = names.index(eta)
            if kind == "mu":
                hyper[j, 0] = v
            else:
                hyper[j, 1] = math.log(v)
    free_hyper = [(j, c) for j in range(d) for c in (0, 1)
                  if f"{('mu', 'sigma')[c]}_{names[j]}" not in fixed_hyper]
    free_rate = [c for c, k in enumerate(("mu_mu", "sigma_mu")) if k not in fixed_hyper]

    lb = np.array([post.log_b(s, theta[s]) for s in range(S)])
    if not np.all(np.isfinite(lb)):
        raise InitializationError("a period has zero likelihood at the starting point")
    if not math.isfinite(post.log_posterior(theta, hyper, rate)):
        raise InitializationError("log posterior is -inf at the starting point")

    # one adapter per coordinate class
    th_adapt = RobbinsMonro([chain_cfg.step_scales.get(n, DEFAULT_SCALE)
                             for _ in range(S) for n in names])
    hy_adapt = RobbinsMonro([chain_cfg.step_scales.get(f"{('mu', 'sigma')[c]}_{names[j]}",
                                                        DEFAULT_SCALE) for j, c in free_hyper] or [1.0])
    rt_adapt = RobbinsMonro([DEFAULT_SCALE, DEFAULT_SCALE])
    jumps = [GammaJump(p, 2) for p in periods] if r == PIECEWISE else None

    n_draws = chain_cfg.n_draws
    cols = ([f"{n}_s{s + 1}" for n in names for s in range(S)]
            + [f"{p}_{n}" for n in names for p in ("mu", "sigma")]
            + ["mu_mu", "sigma_mu"] + [f"mu_s{s + 1}" for s in range(S)])
    draws = np.empty((n_draws, len(cols)))
    lps = np.empty(n_draws)
    acc_th = np.zeros(S * d)
    acc_hy = np.zeros(max(len(free_hyper), 1))
    acc_rt = np.zeros(2)
    burn_any = np.zeros(S * d)
    row = 0

    for it in range(chain_cfg.iterations):
        burning = it < chain_cfg.burn_in
        adapt = burning and chain_cfg.adapt
        # period blocks
        for s in range(S):
            def target(u, s=s):
                lb_s = post.log_b(s, u)
                if lb_s == -math.inf:
                    return lb_s
                return lb_s + sum(post.theta_prior(j, u[j], *hyper[j]) for j in range(d))
            u = list(theta[s])
            lp = target(u)
            for j in range(d):
                k = s * d + j
                u, lp, ok = mh_step(target, u, lp, j, th_adapt.scale(k), rng)
                if adapt:
                    th_adapt.update(k, ok, it)
                if burning:
                    burn_any[k] += ok
                else:
                    acc_th[k] += ok
            if jumps is not None:
                u, lp, _ = jumps[s].step(target, u, lp, rng)
            theta[s] = u
        # (mu_eta, sigma_eta) pairs
        for m, (j, c) in enumerate(free_hyper):
            col = theta[:, j]

            def htarget(h, j=j, col=col):
                return post.theta_prior_all(j, col, h[0], h[1]) + post.hyper_prior(j, h[0], h[1])
            h = list(hyper[j])
            lp = htarget(h)
            h, lp, ok = mh_step(htarget, h, lp, c, hy_adapt.scale(m), rng)
            hyper[j] = h
            if adapt:
                hy_adapt.update(m, ok, it)
            if not burning:
                acc_hy[m] += ok
        # (mu_mu, sigma_mu)
        if free_rate:
            def rtarget(v):
                if max(abs(x) for x in v) > 600:
                    return -math.inf
                return post.rate_terms(v[0], v[1]) + post.rate_hyper_prior(v[0], v[1])
            v = list(rate)
            lp = rtarget(v)
            for c in free_rate:
                v, lp, ok = mh_step(rtarget, v, lp, c, rt_adapt.scale(c), rng)
                if adapt:
                    rt_adapt.update(c, ok, it)
                if not burning:
                    acc_rt[c] += ok
            rate = np.asarray(v)
        if chain_cfg.records(it):
            mm, sm = math.exp(rate[0]), math.exp(rate[1])
            a, b = mm * mm / (sm * sm), mm / (sm * sm)
            out = [*np.exp(theta.T).ravel()]
            for j in range(d):
                out += [hyper[j, 0], math.exp(hyper[j, 1])]
            out += [mm, sm]
            out += list(rng.gamma(a + post.A, 1.0 / (b + post.T)))
            draws[row] = out
            lps[row] = post.log_posterior(theta, hyper, rate)
            row += 1

    if chain_cfg.burn_in and np.any(burn_any == 0):
        warnings.warn("some period parameters accepted no proposals during burn-in",
                      AdaptationWarning)
    n_post = chain_cfg.iterations - chain_cfg.burn_in
    acceptance = {f"{n}_s{s + 1}": float(acc_th[s * d + j] / n_post)
                  for s in range(S) for j, n in enumerate(names)}
    for m, (j, c) in enumerate(free_hyper):
        acceptance[f"{('mu', 'sigma')[c]}_{names[j]}"] = float(acc_hy[m] / n_post)
    for c in free_rate:
        acceptance[("mu_mu", "sigma_mu")[c]] = float(acc_rt[c] / n_post)
    meta = {"model": "hierarchical", "r": r, "delta_fixed": delta_fixed, "seed": chain_cfg.seed,
            "periods": S, "state_dimension": state_dimension(S, r, delta_fixed) - len(fixed_hyper),
            "hier_scale": post.cfg.hier_scale, "truncation_mass": post.exact_mass,
            "fixed_hyper": dict(sorted(fixed_hyper.items())),
            "category": periods[0].category,
            "period_T": [int(t) for t in post.T],
            "chain": {"iterations": chain_cfg.iterations, "burn_in": chain_cfg.burn_in,
                      "thin": chain_cfg.thin},
            "hyperprior": post.cfg.to_dict()}
    return ChainResult(cols, draws, lps, acceptance, meta)
