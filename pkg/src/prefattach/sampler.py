"""Random-walk Metropolis for the single (time-constant) model.

Parameters are updated one at a time with Gaussian steps on the log scale.
During burn-in each step size is tuned by Robbins-Monro towards an
acceptance rate of 0.44 and then frozen, so the recorded draws come from a
fixed, reversible kernel.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from prefattach import kernels
from prefattach.evolution import SufficientStats
from prefattach.likelihood import RatePrior, gamma_fraction, posterior_mu
from prefattach.preference import (PIECEWISE, DegenerateWeightsError, PreferenceParams,
                                   parameter_names)
from prefattach.priors import HyperConfig

TARGET_ACCEPT = 0.44
DEFAULT_SCALE = 0.1
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class InitializationError(RuntimeError):
    """The starting point has zero posterior density."""


class AdaptationWarning(UserWarning):
    pass


class DegenerateTraceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ChainConfig:
    """Chain length, thinning, proposal scales and seed.

    ``iterations`` includes the burn-in; draws are recorded every ``thin``
    iterations afterwards, ``(iterations - burn_in) // thin`` in total.
    """

    iterations: int = 101_000
    burn_in: int = 1_000
    thin: int = 10
    step_scales: dict = field(default_factory=dict)
    seed: int = 0
    adapt: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        for k, v in self.step_scales.items():
            if not v > 0:
                raise ValueError(f"step scale for {k} must be positive")

    @classmethod
    def from_draws(cls, draws: int, burn_in: int = 1000, thin: int = 10, **kw) -> "ChainConfig":
        return cls(iterations=burn_in + draws * thin, burn_in=burn_in, thin=thin, **kw)

    @classmethod
    def single_default(cls, seed: int = 0) -> "ChainConfig":
        return cls.from_draws(10_000, burn_in=1_000, thin=10, seed=seed)

    @classmethod
    def hier_default(cls, seed: int = 0) -> "ChainConfig":
        return cls.from_draws(10_000, burn_in=10_000, thin=20, seed=seed)

    @classmethod
    def from_dict(cls, d: dict, default: "ChainConfig") -> "ChainConfig":
        """Overlay ``draws``/``burn_in``/``thin``/``seed``/``step_scales``/``adapt`` on a default."""
        known = {"draws", "burn_in", "thin", "seed", "step_scales", "adapt"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown chain keys: {sorted(unknown)}")
        burn_in = int(d.get("burn_in", default.burn_in))
        thin = int(d.get("thin", default.thin))
        draws = int(d.get("draws", default.n_draws))
        if draws < 1:
            raise ValueError("draws must be positive")
        return cls.from_draws(draws, burn_in=burn_in, thin=thin,
                              seed=int(d.get("seed", default.seed)),
                              step_scales=dict(d.get("step_scales", default.step_scales)),
                              adapt=bool(d.get("adapt", default.adapt)))

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def records(self, it: int) -> bool:
        k = it - self.burn_in + 1
        return k > 0 and k % self.thin == 0

    def to_dict(self) -> dict:
        return asdict(self)


def ess(trace) -> float:
    """Effective sample size by overlapping batch means.

    Batch length is ``floor(sqrt(n))``. The result is capped at ``n``; a
    constant trace yields NaN with a :class:`DegenerateTraceWarning`.
    """
    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("ESS needs at least 10 draws")
    var = x.var(ddof=1)
    if not var > 0 or not np.isfinite(var):
        warnings.warn("constant trace: ESS is undefined", DegenerateTraceWarning, stacklevel=2)
        return float("nan")
    b = int(math.sqrt(n))
    cs = np.concatenate(([0.0], np.cumsum(x - x.mean())))
    bm = (cs[b:] - cs[:-b]) / b
    sigma2 = n * b / ((n - b) * (n - b + 1)) * float(np.dot(bm, bm))
    if not sigma2 > 0:
        return float(n)
    return float(min(n, n * var / sigma2))


@dataclass
class ChainResult:
    """Recorded draws on the constrained scale.

    Attributes
    ----------
    names : list of str
        Column names of ``samples``.
    samples : ndarray (draws, params)
    log_post : ndarray (draws,)
        Log posterior (up to the model's constant) at each draw.
    acceptance : dict
        Post-burn-in acceptance rate per updated block.
    meta : dict
        Model description (indicator, seed, chain settings, ...).
    """

    names: list
    samples: np.ndarray
    log_post: np.ndarray
    acceptance: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ess = {}
        for j, name in enumerate(self.names):
            col = self.samples[:, j]
            if len(col) < 10:
                self.ess[name] = float("nan")
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateTraceWarning)
                self.ess[name] = ess(col)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.samples[:, self.names.index(name)]

    @property
    def n_draws(self) -> int:
        return self.samples.shape[0]

    def interval(self, name: str, level: float = 0.95) -> tuple[float, float]:
        lo = (1 - level) / 2
        q = np.quantile(self[name], [lo, 1 - lo])
        return float(q[0]), float(q[1])

    def summary(self) -> dict:
        params = {}
        for name in self.names:
            col = self[name]
            q = np.quantile(col, [0.025, 0.5, 0.975])
            params[name] = {
                "mean": float(col.mean()),
                "sd": float(col.std(ddof=1)) if len(col) > 1 else 0.0,
                "q2.5": float(q[0]),
                "q50": float(q[1]),
                "q97.5": float(q[2]),
                "ess": _finite_or_none(self.ess[name]),
            }
        return {"n_draws": self.n_draws, "parameters": params,
                "acceptance": dict(self.acceptance), "meta": self.meta}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["draw", *self.names, "log_post"])
            for i in range(self.n_draws):
                w.writerow([i + 1, *(repr(float(v)) for v in self.samples[i]),
                            repr(float(self.log_post[i]))])

    def write_summary(self, path, extra: dict | None = None) -> None:
        out = self.summary()
        if extra:
            out.update(extra)
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


def merge_chains(results: Sequence[ChainResult]) -> ChainResult:
    """Pool independent chains of the same model, in the given order."""
    first = results[0]
    for r in results[1:]:
        if r.names != first.names:
            raise ValueError("chains have different parameters")
    n = sum(r.n_draws for r in results)
    acceptance = {k: sum(r.acceptance[k] * r.n_draws for r in results) / n
                  for k in first.acceptance}
    merged = ChainResult(list(first.names), np.vstack([r.samples for r in results]),
                         np.concatenate([r.log_post for r in results]), acceptance,
                         dict(first.meta, chains=len(results),
                              seeds=[r.meta.get("seed") for r in results]))
    merged.ess = {k: sum(r.ess[k] for r in results) for k in first.names}
    return merged


class SinglePosterior:
    """Log posterior of log-transformed preference parameters for one model.

    The prior is log-normal on each parameter; the Jacobian of the log
    transform is added so the density is over ``u = log(theta)``.
    """

    def __init__(self, stats: SufficientStats, r: int, prior: HyperConfig,
                 delta_fixed: bool = False):
        self.stats = stats
        self.r = r
        self.prior = prior
        self.delta_fixed = delta_fixed
        self.names = parameter_names(r, delta_fixed)
        self.rate_prior = RatePrior(prior.rate_a, prior.rate_b)
        self.const = (gamma_fraction(stats.A_total, stats.T, prior.rate_a, prior.rate_b)
                      - stats.log_y_factorial)
        self._piecewise = r == PIECEWISE
        self._has_delta = not delta_fixed
        self._m = prior.prior_log_mean
        self._s = prior.prior_log_sd

    def unpack(self, u: Sequence[float]) -> tuple[float, float, float, float]:
        alpha = math.exp(u[0])
        if self._piecewise:
            beta, gamma = math.exp(u[1]), math.exp(u[2])
        else:
            beta = gamma = 0.0
        delta = math.exp(u[-1]) if self._has_delta else 0.0
        return alpha, beta, gamma, delta

    def params(self, u: Sequence[float]) -> PreferenceParams:
        alpha, beta, gamma, delta = self.unpack(u)
        if self._piecewise:
            return PreferenceParams(PIECEWISE, alpha, beta, gamma, delta, self.delta_fixed)
        return PreferenceParams(0, alpha, delta=delta, delta_fixed=self.delta_fixed)

    def log_prior(self, u: Sequence[float]) -> float:
        lp = 0.0
        for v in u:
            z = (v - self._m) / self._s
            # log-normal density of exp(v) plus the log-Jacobian v
            lp += (-0.5 * z * z - math.log(self._s) - _LOG_SQRT_2PI - v) + v
        return lp

    def log_lik(self, u: Sequence[float], strict: bool = False) -> float:
        if max(abs(v) for v in u) > 600:
            return -math.inf
        lb = kernels.log_b_raw(self.stats, self._piecewise, *self.unpack(u))
        if math.isnan(lb):
            if strict:
                raise DegenerateWeightsError("a time point has zero total preference weight")
            return -math.inf
        return lb + self.const

    def log_target(self, u: Sequence[float], strict: bool = False) -> float:
        ll = self.log_lik(u, strict)
        if ll == -math.inf:
            return ll
        return ll + self.log_prior(u)

    def initial(self) -> list[float]:
        start = {"alpha": 1.0, "beta": 1.0, "gamma": self.stats.median_positive_degree(),
                 "delta": 1.0}
        return [math.log(start[n]) for n in self.names]

    def _starts(self, quantiles: Sequence[float]) -> list[list[float]]:
        base = self.initial()
        starts = [base]
        if not self._piecewise:
            return starts
        st = self.stats
        k, c = st.degrees[st.c_idx], st.c_cnt
        keep = k > 0
        if keep.any():
            k, c = k[keep], c[keep]
            order = np.argsort(k, kind="stable")
            cum = np.cumsum(c[order]) / c.sum()
            picks = k[order][np.searchsorted(cum, quantiles)]
            top = float(k.max())
        else:
            picks, top = [], 1.0
        # interior thresholds, then the two flat regimes: a threshold below
        # every positive degree (linear tail) and one above all of them (power)
        for lg in [math.log(q) for q in np.unique(picks)] + [-10.0, math.log(top) + 2.0]:
            u = list(base)
            u[2] = lg
            starts.append(u)
        return starts

    def local_modes(self, quantiles: Sequence[float] = (0.5, 0.8, 0.95)) -> list[tuple[list[float], float]]:
        """Nelder-Mead optima from several starts as ``(u, log target)``, best first.

        For the piecewise model the threshold is started at several
        quantiles of the positive degrees, since its posterior tends to have
        one mode per stretch of integers, and in both flat regimes.
        """
        def neg(u):
            lp = self.log_target(list(u))
            return -lp if math.isfinite(lp) else 1e300

        found = []
        for u0 in self._starts(quantiles):
            res = minimize(neg, u0, method="Nelder-Mead",
                           options={"maxiter": 2000, "xatol": 1e-4, "fatol": 1e-6})
            if res.fun < 1e300:
                found.append((list(map(float, res.x)), -float(res.fun)))
        found.sort(key=lambda m: -m[1])
        return found

    def mode(self, quantiles: Sequence[float] = (0.5, 0.8, 0.95)) -> list[float]:
        """Best of :meth:`local_modes`, falling back to :meth:`initial`."""
        base = self.initial()
        found = self.local_modes(quantiles)
        lp0 = self.log_target(base)
        if found and found[0][1] > lp0:
            return found[0][0]
        return base

    def laplace_cov(self, u: Sequence[float], inflate: float = 1.0, h: float = 1e-3) -> np.ndarray:
        """Inverse negative Hessian at ``u``, scaled by ``inflate**2``.

        Each eigen-direction's variance is capped at the prior variance, so
        flat likelihood directions (and directions of negative curvature)
        get prior-sized spread.
        """
        u = np.asarray(u, dtype=float)
        d = u.size
        f = lambda v: self.log_target(list(v))
        f0 = f(u)
        H = np.empty((d, d))
        e = np.eye(d) * h
        for i in range(d):
            for j in range(i, d):
                if i == j:
                    H[i, i] = (f(u + e[i]) - 2 * f0 + f(u - e[i])) / h**2
                else:
                    H[i, j] = H[j, i] = (f(u + e[i] + e[j]) - f(u + e[i] - e[j])
                                         - f(u - e[i] + e[j]) + f(u - e[i] - e[j])) / (4 * h**2)
        if not np.all(np.isfinite(H)):
            return np.eye(d) * self._s**2
        w, V = np.linalg.eigh(-0.5 * (H + H.T))
        var = np.where(w > 0, inflate**2 / np.where(w > 0, w, 1.0), np.inf)
        return (V * np.minimum(var, self._s**2)) @ V.T


class RobbinsMonro:
    """Per-component log step-size adaptation towards a target acceptance."""

    def __init__(self, scales: Sequence[float], target: float = TARGET_ACCEPT):
        self.log_scale = np.log(np.asarray(scales, dtype=float))
        self.target = target

    def scale(self, j: int) -> float:
        return math.exp(self.log_scale[j])

    def update(self, j: int, accepted: bool, it: int) -> None:
        self.log_scale[j] += (float(accepted) - self.target) / (it + 1) ** 0.6


def mh_step(target, u: list, lp: float, j: int, scale: float, rng) -> tuple[list, float, bool]:
    """One Gaussian random-walk update of component ``j``."""
    prop = list(u)
    prop[j] += scale * rng.standard_normal()
    lp_prop = target(prop)
    if lp_prop - lp > -rng.standard_exponential():
        return prop, lp_prop, True
    return u, lp, False


class GammaJump:
    """Independence proposal for ``log gamma`` spanning the observed degrees.

    The piecewise posterior of the threshold is often multimodal (one mode
    per stretch of integer degrees), which a local random walk crosses
    poorly. Proposals come from a fixed normal covering ``[0, log k_max]``.
    """

    def __init__(self, stats: SufficientStats, index: int):
        top = max(float(stats.degrees.max()) if len(stats.degrees) else 1.0, 2.0)
        self.mean = 0.5 * math.log(top)
        self.sd = 0.5 * math.log(top) + 0.5
        self.index = index

    def _logq(self, v: float) -> float:
        z = (v - self.mean) / self.sd
        return -0.5 * z * z

    def step(self, target, u: list, lp: float, rng) -> tuple[list, float, bool]:
        j = self.index
        prop = list(u)
        prop[j] = self.mean + self.sd * rng.standard_normal()
        lp_prop = target(prop)
        log_ratio = lp_prop - lp + self._logq(u[j]) - self._logq(prop[j])
        if log_ratio > -rng.standard_exponential():
            return prop, lp_prop, True
        return u, lp, False


class ModeJump:
    """Independence proposal from a multivariate-t mixture over local modes.

    Components sit at the optima of :meth:`SinglePosterior.local_modes` with
    inflated Laplace covariances (capped at the prior's), plus a defensive
    component equal to the prior. This lets the chain move between
    well-separated regimes (for the piecewise model, a threshold below all
    degrees versus above all of them) that one-at-a-time random walks
    connect only through very thin paths.
    """

    def __init__(self, post: SinglePosterior, modes=None, df: float = 4.0, inflate: float = 2.0,
                 prior_weight: float = 0.1):
        modes = post.local_modes() if modes is None else modes
        kept = []
        for u, _ in modes:
            if all(np.max(np.abs(np.subtract(u, v))) > 0.25 for v in kept):
                kept.append(u)
        if not kept:
            kept = [post.initial()]
        d = len(kept[0])
        self.df = df
        self.d = d
        self.means = [np.asarray(u) for u in kept]
        self.chols = [np.linalg.cholesky(post.laplace_cov(u, inflate)) for u in kept]
        self.means.append(np.full(d, post._m))
        self.chols.append(np.eye(d) * post._s)
        w = np.full(len(self.means), (1 - prior_weight) / len(kept))
        w[-1] = prior_weight
        self.weights = w
        self._logw = np.log(w)
        self._inv = [np.linalg.inv(L) for L in self.chols]
        self._logdet = [float(np.log(np.diag(L)).sum()) for L in self.chols]

    def _logq(self, u) -> float:
        u = np.asarray(u)
        out = []
        for m, Li, ld, lw in zip(self.means, self._inv, self._logdet, self._logw):
            z = Li @ (u - m)
            out.append(lw - ld - 0.5 * (self.df + self.d) * math.log1p(z @ z / self.df))
        return float(np.logaddexp.reduce(out))

    def draw(self, rng) -> list[float]:
        c = rng.choice(len(self.weights), p=self.weights)
        z = rng.standard_normal(self.d) / math.sqrt(rng.chisquare(self.df) / self.df)
        return list(map(float, self.means[c] + self.chols[c] @ z))

    def step(self, target, u: list, lp: float, rng) -> tuple[list, float, bool]:
        prop = self.draw(rng)
        lp_prop = target(prop)
        log_ratio = lp_prop - lp + self._logq(u) - self._logq(prop)
        if log_ratio > -rng.standard_exponential():
            return prop, lp_prop, True
        return u, lp, False


def fit_single(stats: SufficientStats, r: int, prior_cfg: HyperConfig | None = None,
               chain_cfg: ChainConfig | None = None, delta_fixed: bool = False,
               init: dict | None = None) -> ChainResult:
    """Sample the posterior of the preference parameters for a fixed ``r``.

    The rate is integrated out for the Metropolis updates; at each recorded
    draw it is sampled from its conditional Gamma posterior and stored in the
    ``mu`` column.
    """
    prior_cfg = prior_cfg or HyperConfig()
    chain_cfg = chain_cfg or ChainConfig.single_default()
    post = SinglePosterior(stats, r, prior_cfg, delta_fixed)
    names = list(post.names)
    modes = post.local_modes()
    u = post.initial()
    if modes and modes[0][1] > post.log_target(u):
        u = modes[0][0]
    if not math.isfinite(post.log_target(u)):
        u = post.initial()
    if init:
        u = [math.log(init.get(n, math.exp(v))) for n, v in zip(names, u)]
    lp = post.log_target(u, strict=True)
    if not math.isfinite(lp):
        raise InitializationError("log posterior is -inf at the starting point")
    rng = np.random.default_rng(chain_cfg.seed)
    adapt = RobbinsMonro([chain_cfg.step_scales.get(n, DEFAULT_SCALE) for n in names])
    shape, rate = posterior_mu(stats, post.rate_prior)
    d = len(names)
    jump = GammaJump(stats, names.index("gamma")) if r == PIECEWISE else None
    hop = ModeJump(post, modes) if r == PIECEWISE else None
    jump_acc = hop_acc = 0
    burn_acc = np.zeros(d)
    acc = np.zeros(d)
    draws = np.empty((chain_cfg.n_draws, d + 1))
    lps = np.empty(chain_cfg.n_draws)
    row = 0
    target = post.log_target
    for it in range(chain_cfg.iterations):
        burning = it < chain_cfg.burn_in
        for j in range(d):
            u, lp, ok = mh_step(target, u, lp, j, adapt.scale(j), rng)
            if burning:
                burn_acc[j] += ok
                if chain_cfg.adapt:
                    adapt.update(j, ok, it)
            else:
                acc[j] += ok
        if jump is not None:
            u, lp, ok = jump.step(target, u, lp, rng)
            jump_acc += ok and not burning
            u, lp, ok = hop.step(target, u, lp, rng)
            hop_acc += ok and not burning
        if chain_cfg.records(it):
            draws[row, :d] = np.exp(u)
            draws[row, d] = rng.gamma(shape, 1.0 / rate)
            lps[row] = lp
            row += 1
    if chain_cfg.burn_in and np.any(burn_acc == 0):
        stuck = [n for n, a in zip(names, burn_acc) if a == 0]
        warnings.warn(f"no proposals accepted during burn-in for {stuck}", AdaptationWarning)
    n_post = chain_cfg.iterations - chain_cfg.burn_in
    acceptance = {n: float(a / n_post) for n, a in zip(names, acc)}
    if jump is not None:
        acceptance["gamma_jump"] = float(jump_acc / n_post)
        acceptance["mode_jump"] = float(hop_acc / n_post)
    meta = {"model": "single", "r": r, "delta_fixed": delta_fixed, "seed": chain_cfg.seed,
            "category": stats.category, "step_scales": dict(zip(names, np.exp(adapt.log_scale).tolist())),
            "chain": {"iterations": chain_cfg.iterations, "burn_in": chain_cfg.burn_in,
                      "thin": chain_cfg.thin},
            "mu_posterior": {"shape": shape, "rate": rate}}
    return ChainResult(names + ["mu"], draws, lps, acceptance, meta)
