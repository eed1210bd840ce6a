"""Carlin-Chib selection between the power and piecewise preference functions.

The chain runs on the product space of the model indicator ``r`` and the
parameters of both models. Parameters unused by the current model (``beta``
and ``gamma`` when ``r = 0``) are refreshed from a pseudoprior, which only
affects mixing, not the posterior model probabilities.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from prefattach.evolution import SufficientStats
from prefattach.preference import PIECEWISE, POWER
from prefattach.priors import HyperConfig
from prefattach.sampler import (ChainConfig, ChainResult, InitializationError, RobbinsMonro,
                                SinglePosterior, DEFAULT_SCALE, GammaJump, ModeJump, ess,
                                mh_step)

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class PseudopriorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Pseudoprior:
    """Independent normals on ``log beta`` and ``log gamma``."""

    mean_log_beta: float = 0.0
    sd_log_beta: float = 1.0
    mean_log_gamma: float = 1.0
    sd_log_gamma: float = 1.0

    def __post_init__(self):
        if not (self.sd_log_beta > 0 and self.sd_log_gamma > 0):
            raise ValueError("pseudoprior standard deviations must be positive")

    def logpdf(self, u_beta: float, u_gamma: float) -> float:
        zb = (u_beta - self.mean_log_beta) / self.sd_log_beta
        zg = (u_gamma - self.mean_log_gamma) / self.sd_log_gamma
        return (-0.5 * (zb * zb + zg * zg) - math.log(self.sd_log_beta)
                - math.log(self.sd_log_gamma) - 2 * _LOG_SQRT_2PI)

    def draw(self, rng) -> tuple[float, float]:
        return (self.mean_log_beta + self.sd_log_beta * rng.standard_normal(),
                self.mean_log_gamma + self.sd_log_gamma * rng.standard_normal())

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SelectionConfig:
    p: float = 0.5
    pseudoprior: Pseudoprior = field(default_factory=Pseudoprior)
    chain: ChainConfig = field(default_factory=ChainConfig.single_default)

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("p must lie strictly between 0 and 1")


@dataclass
class SelectionResult:
    """Indicator trace and the Bayes factor of piecewise over power.

    ``bound`` is ``">"`` or ``"<"`` when every recorded draw has the same
    indicator; ``bayes_factor`` is then the bound itself.
    """

    r_trace: np.ndarray
    p: float
    bayes_factor: float
    bound: str | None
    interval: tuple[float, float]
    chains: dict
    pseudoprior: Pseudoprior
    seed: int

    @property
    def posterior_prob_r1(self) -> float:
        return float(self.r_trace.mean())

    @property
    def posterior_prob_r0(self) -> float:
        return 1.0 - self.posterior_prob_r1

    def exceeds(self, threshold: float) -> bool:
        """Whether the evidence shows B10 > threshold (bounds count when they do)."""
        if self.bound == "<":
            return False
        return self.bayes_factor > threshold

    def below(self, threshold: float) -> bool:
        if self.bound == ">":
            return False
        return self.bayes_factor < threshold

    def describe(self) -> str:
        if self.bound == ">":
            return f"estimated Bayes factor is greater than {self.bayes_factor:.4g}"
        if self.bound == "<":
            return f"estimated Bayes factor is less than {self.bayes_factor:.4g}"
        return f"estimated Bayes factor is {self.bayes_factor:.6g}"

    def report(self) -> dict:
        return {
            "posterior_prob_r0": self.posterior_prob_r0,
            "posterior_prob_r1": self.posterior_prob_r1,
            "bayes_factor": self.bayes_factor,
            "bound_flag": self.bound,
            "bayes_factor_interval": list(self.interval),
            "description": self.describe(),
            "p": self.p,
            "n_draws": int(self.r_trace.size),
            "pseudoprior": self.pseudoprior.to_dict(),
            "seeds": [self.seed],
        }


def bayes_factor(r_trace, p: float) -> tuple[float, str | None, tuple[float, float]]:
    """Bayes factor of r=1 over r=0 from an indicator trace and prior ``p``.

    Returns ``(value, bound, (lo, hi))`` where the interval is a 95% Monte
    Carlo interval from the batch-means standard error of the indicator
    mean. With all draws equal to 1 the value is the lower bound
    ``(N - 1)(1 - p) / p``; with all equal to 0 it is the upper bound
    ``(1 - p) / ((N - 1) p)``.
    """
    r = np.asarray(r_trace, dtype=float)
    n = r.size
    odds_prior = (1 - p) / p
    q = r.mean()
    if q == 1.0:
        b = (n - 1) * odds_prior
        return b, ">", (b, math.inf)
    if q == 0.0:
        b = odds_prior / (n - 1)
        return b, "<", (0.0, b)
    n_eff = ess(r) if n >= 10 else n
    if not np.isfinite(n_eff):
        n_eff = n
    se = math.sqrt(q * (1 - q) / n_eff)
    lo, hi = max(q - 1.96 * se, 0.0), min(q + 1.96 * se, 1.0)

    def to_bf(x):
        if x <= 0:
            return 0.0
        if x >= 1:
            return math.inf
        return x / (1 - x) * odds_prior

    return to_bf(q), None, (to_bf(lo), to_bf(hi))


def tune_pseudoprior(pilot: ChainResult, prior_cfg: HyperConfig | None = None) -> Pseudoprior:
    """Moment-match normal pseudopriors on ``log beta`` and ``log gamma``.

    Falls back to the single-model prior (with a warning) if the pilot draws
    have no spread.
    """
    if pilot.n_draws == 0:
        raise ValueError("pilot chain has no draws")
    if "beta" not in pilot.names or "gamma" not in pilot.names:
        raise ValueError("pilot must be a piecewise (r=1) chain")
    lb = np.log(pilot["beta"])
    lg = np.log(pilot["gamma"])
    sb, sg = lb.std(ddof=1) if lb.size > 1 else 0.0, lg.std(ddof=1) if lg.size > 1 else 0.0
    if not (sb > 0 and sg > 0 and np.isfinite(sb) and np.isfinite(sg)):
        prior_cfg = prior_cfg or HyperConfig()
        warnings.warn("degenerate pilot variance; using the prior as pseudoprior",
                      PseudopriorWarning)
        return Pseudoprior(prior_cfg.prior_log_mean, prior_cfg.prior_log_sd,
                           prior_cfg.prior_log_mean, prior_cfg.prior_log_sd)
    return Pseudoprior(float(lb.mean()), float(sb), float(lg.mean()), float(sg))


def select(stats: SufficientStats, cfg: SelectionConfig, prior_cfg: HyperConfig | None = None,
           delta_fixed: bool = False) -> SelectionResult:
    """Run the Carlin-Chib chain.

    Each iteration: (1) Metropolis sweep over the current model's
    parameters, plus the threshold and mode-mixture jumps under ``r = 1``;
    (2) if ``r = 0`` draw ``(beta, gamma)`` from the pseudoprior;
    (3-4) evaluate both models' unnormalised joint densities at the shared
    ``alpha``/``delta`` and current ``beta``/``gamma``; (5) draw ``r`` from
    their normalised ratio.
    """
    prior_cfg = prior_cfg or HyperConfig()
    chain = cfg.chain
    rng = np.random.default_rng(chain.seed)
    post = {POWER: SinglePosterior(stats, POWER, prior_cfg, delta_fixed),
            PIECEWISE: SinglePosterior(stats, PIECEWISE, prior_cfg, delta_fixed)}
    pp = cfg.pseudoprior
    log_p, log_q = math.log(cfg.p), math.log1p(-cfg.p)
    modes = post[PIECEWISE].local_modes()
    # alpha, beta, gamma[, delta]; start at the best piecewise mode
    full = modes[0][0] if modes else post[PIECEWISE].initial()
    has_delta = not delta_fixed

    def split(vec):
        power = [vec[0]] + ([vec[3]] if has_delta else [])
        return power, vec[1], vec[2]

    def join(power, ub, ug):
        return [power[0], ub, ug] + ([power[1]] if has_delta else [])

    lp1 = post[PIECEWISE].log_target(full, strict=True)
    _, ub, ug = split(full)
    power_u = post[POWER].mode()
    lp0 = post[POWER].log_target(power_u, strict=True)
    if not (math.isfinite(lp0) or math.isfinite(lp1)):
        raise InitializationError("both models have zero density at the starting point")
    r = PIECEWISE if lp1 >= lp0 else POWER
    names = {m: list(post[m].names) for m in (POWER, PIECEWISE)}
    adapt = {m: RobbinsMonro([chain.step_scales.get(n, DEFAULT_SCALE) for n in names[m]])
             for m in (POWER, PIECEWISE)}
    jump = GammaJump(stats, 2)
    hop = ModeJump(post[PIECEWISE], modes)
    acc = {m: np.zeros(len(names[m])) for m in (POWER, PIECEWISE)}
    tries = {m: np.zeros(len(names[m])) for m in (POWER, PIECEWISE)}
    n_draws = chain.n_draws
    r_trace = np.empty(n_draws, dtype=np.int8)
    theta_draws = np.empty((n_draws, len(names[PIECEWISE])))
    lps = np.empty(n_draws)
    row = 0
    lp_cur = lp1 if r == PIECEWISE else lp0
    for it in range(chain.iterations):
        burning = it < chain.burn_in
        # step 1
        u = full if r == PIECEWISE else power_u
        target = post[r].log_target
        for j in range(len(u)):
            u, lp_cur, ok = mh_step(target, u, lp_cur, j, adapt[r].scale(j), rng)
            if burning and chain.adapt:
                adapt[r].update(j, ok, it)
            elif not burning:
                acc[r][j] += ok
                tries[r][j] += 1
        if r == PIECEWISE:
            u, lp_cur, _ = jump.step(target, u, lp_cur, rng)
            u, lp_cur, _ = hop.step(target, u, lp_cur, rng)
            full = u
            power_u, ub, ug = split(full)
        else:
            power_u = u
            # step 2
            ub, ug = pp.draw(rng)
            full = join(power_u, ub, ug)
        # steps 3-4
        if r == PIECEWISE:
            lt1 = lp_cur
            lt0 = post[POWER].log_target(power_u)
        else:
            lt0 = lp_cur
            lt1 = post[PIECEWISE].log_target(full)
        lP0 = lt0 + pp.logpdf(ub, ug) + log_q
        lP1 = lt1 + log_p
        # step 5
        prob0 = 1.0 / (1.0 + math.exp(min(lP1 - lP0, 700.0))) if lP0 > -math.inf else 0.0
        if rng.random() < prob0:
            r, lp_cur = POWER, lt0
        else:
            r, lp_cur = PIECEWISE, lt1
        if chain.records(it):
            r_trace[row] = r
            theta_draws[row] = np.exp(full)
            lps[row] = lp_cur
            row += 1
    bf, bound, interval = bayes_factor(r_trace, cfg.p)
    chains = {}
    for m in (POWER, PIECEWISE):
        mask = r_trace == m
        cols = [names[PIECEWISE].index(n) for n in names[m]]
        accept = {n: float(a / t) if t else float("nan")
                  for n, a, t in zip(names[m], acc[m], tries[m])}
        chains[m] = ChainResult(list(names[m]), theta_draws[mask][:, cols], lps[mask], accept,
                                {"model": "selection", "r": m, "delta_fixed": delta_fixed,
                                 "seed": chain.seed})
    return SelectionResult(r_trace, cfg.p, bf, bound, interval, chains, pp, chain.seed)


def suggest_p(result: SelectionResult, floor: float = 1e-10) -> float:
    """Prior probability that would roughly balance visits to both models.

    Uses the estimated Bayes factor (or its bound, pushed a further factor
    of 100) so that the posterior odds come out near 1.
    """
    bf = result.bayes_factor
    if result.bound == ">":
        bf *= 100
    elif result.bound == "<":
        bf /= 100
    bf = min(max(bf, 1e-300), 1e300)
    # posterior odds = bf * p / (1 - p) = 1  =>  p = 1 / (1 + bf)
    p = 1.0 / (1.0 + bf)
    return float(min(max(p, floor), 1 - floor))
