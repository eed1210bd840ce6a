"""Generate evolution logs from the preferential-attachment process.

At each step every existing vertex receives Poisson numbers of external
(from brand-new sources), internal (from existing sources) and deleted
in-edges, with means proportional to its normalised preference weight at
the previous step's in-degree. The multinomial variant first draws the
per-category total and then allocates it, which is equivalent in law by
Poisson splitting.
"""
from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from prefattach.evolution import EdgeEvent, EvolutionLog
from prefattach.preference import DegenerateWeightsError, PreferenceParams, g

MAX_RETRIES = 100


class DroppedEdgeWarning(UserWarning):
    pass


def _default_external():
    return PreferenceParams.power(1.0, delta=1.0)


def _default_deletion():
    return PreferenceParams.power(1.0)


@dataclass(frozen=True)
class SimConfig:
    """Settings for one simulated trajectory.

    Per-category preference parameters may be a single ``PreferenceParams``
    or a sequence of them, in which case entry ``s`` applies to steps
    ``s * period_length + 1 .. (s + 1) * period_length`` (cycling).
    """

    n0: int = 50
    T: int = 200
    mu_external: float = 5.0
    mu_internal: float = 0.0
    mu_deletion: float = 0.0
    external: PreferenceParams | Sequence = field(default_factory=_default_external)
    internal: PreferenceParams | Sequence = field(default_factory=_default_external)
    deletion: PreferenceParams | Sequence = field(default_factory=_default_deletion)
    period_length: int | None = None
    seed: int = 0
    seed_graph: str = "ring"
    fixed_arrivals: bool = False
    dep_type: str = "Imports"
    start_date: dt.date = dt.date(2000, 1, 1)

    def __post_init__(self):
        # Vertices enter a log only through edges, so the seed graph must
        # touch every initial vertex.
        if self.n0 < 2:
            raise ValueError("n0 must be >= 2")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        for name in ("mu_external", "mu_internal", "mu_deletion"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.seed_graph not in ("ring", "star"):
            raise ValueError("seed_graph must be 'ring' or 'star'")
        for name in ("external", "internal", "deletion"):
            if not isinstance(getattr(self, name), PreferenceParams) and not self.period_length:
                raise ValueError(f"{name} schedule needs period_length")

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        """Build from plain values (as read from TOML).

        Preference entries are tables with ``form`` ("power" or "piecewise")
        and the parameter values, or arrays of such tables for schedules.
        """
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown simulation keys: {sorted(unknown)}")
        for name in ("external", "internal", "deletion"):
            if name in d:
                v = d[name]
                d[name] = (tuple(_params_from(x) for x in v) if isinstance(v, list)
                           else _params_from(v))
        if isinstance(d.get("start_date"), str):
            d["start_date"] = dt.date.fromisoformat(d["start_date"])
        return cls(**d)

    def params_at(self, category: str, step: int) -> PreferenceParams:
        p = getattr(self, category)
        if isinstance(p, PreferenceParams):
            return p
        return p[((step - 1) // self.period_length) % len(p)]


def _params_from(d: dict) -> PreferenceParams:
    d = dict(d)
    form = d.pop("form", "power")
    allowed = {"power": {"alpha", "delta"}, "piecewise": {"alpha", "beta", "gamma", "delta"}}
    if form not in allowed:
        raise ValueError(f"unknown preference form {form!r}")
    extra = set(d) - allowed[form]
    if extra:
        raise ValueError(f"unexpected keys for {form} preference: {sorted(extra)}")
    return getattr(PreferenceParams, form)(**d)


@dataclass
class StepDraw:
    """What the simulator drew at one step, over the vertices existing before it."""

    step: int
    date: dt.date
    k_prev: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray


def _seed_edges(n0: int, rule: str) -> list[tuple[int, int]]:
    if rule == "star":
        return [(i, 0) for i in range(1, n0)]
    if n0 == 2:
        return [(0, 1), (1, 0)]
    return [(i, (i + 1) % n0) for i in range(n0)]


def _weights(k: np.ndarray, params: PreferenceParams, mu: float) -> np.ndarray:
    w = np.atleast_1d(g(k, params)).astype(float)
    total = w.sum()
    if not total > 0:
        if mu > 0:
            raise DegenerateWeightsError("all preference weights are zero")
        return np.zeros_like(w)
    return w / total


def _allocate(rng, k, params, mu, multinomial, fixed) -> np.ndarray:
    if mu == 0 or len(k) == 0:
        return np.zeros(len(k), dtype=np.int64)
    p = _weights(k, params, mu)
    if multinomial:
        m = int(round(mu)) if fixed else rng.poisson(mu)
        return rng.multinomial(m, p).astype(np.int64)
    return rng.poisson(mu * p).astype(np.int64)


def _run(cfg: SimConfig, multinomial: bool):
    rng = np.random.default_rng(cfg.seed)
    in_nbrs: list[set[int]] = [set() for _ in range(cfg.n0)]
    for u, v in _seed_edges(cfg.n0, cfg.seed_graph):
        in_nbrs[v].add(u)
    events: list[EdgeEvent] = []
    d0 = cfg.start_date
    name = "v{}".format
    typ = cfg.dep_type
    for u in range(cfg.n0):
        for v_src in sorted(in_nbrs[u]):
            events.append(EdgeEvent(name(v_src), name(u), typ, "added",
                                    d0 - dt.timedelta(days=1), d0))
    draws: list[StepDraw] = []
    for step in range(1, cfg.T + 1):
        date = d0 + dt.timedelta(days=step)
        prev = date - dt.timedelta(days=1)
        n = len(in_nbrs)
        k = np.fromiter((len(s) for s in in_nbrs), dtype=np.int64, count=n)
        y = _allocate(rng, k, cfg.params_at("external", step), cfg.mu_external,
                      multinomial, cfg.fixed_arrivals)
        x = _allocate(rng, k, cfg.params_at("internal", step), cfg.mu_internal,
                      multinomial, cfg.fixed_arrivals)
        z = np.minimum(_allocate(rng, k, cfg.params_at("deletion", step), cfg.mu_deletion,
                                 multinomial, cfg.fixed_arrivals), k)
        step_events = []
        removed: list[tuple[int, int]] = []
        for i in np.flatnonzero(z):
            srcs = sorted(in_nbrs[i])
            for u in rng.choice(srcs, size=int(z[i]), replace=False):
                removed.append((int(u), int(i)))
        added: list[tuple[int, int]] = []
        for i in np.flatnonzero(x):
            chosen: set[int] = set()
            for _ in range(int(x[i])):
                for _attempt in range(MAX_RETRIES):
                    u = int(rng.integers(n))
                    if u != i and u not in in_nbrs[i] and u not in chosen:
                        chosen.add(u)
                        break
                else:
                    warnings.warn(f"step {step}: dropped internal edge to v{i}",
                                  DroppedEdgeWarning)
            x[i] = len(chosen)
            added.extend((u, int(i)) for u in sorted(chosen))
        for u, i in removed:
            in_nbrs[i].discard(u)
            step_events.append(EdgeEvent(name(u), name(i), typ, "removed", prev, date))
        for u, i in added:
            in_nbrs[i].add(u)
            step_events.append(EdgeEvent(name(u), name(i), typ, "added", prev, date))
        for i in np.flatnonzero(y):
            for _ in range(int(y[i])):
                new = len(in_nbrs)
                in_nbrs.append(set())
                in_nbrs[i].add(new)
                step_events.append(EdgeEvent(name(new), name(i), typ, "added", prev, date))
        events.extend(step_events)
        draws.append(StepDraw(step, date, k, x, y, z))
    return EvolutionLog.from_events(events), draws


def simulate(cfg: SimConfig, return_draws: bool = False):
    """Simulate with independent Poisson increments per vertex.

    Returns the ``EvolutionLog`` (and the per-step draws if requested).
    Steps without any event leave no trace in the log.
    """
    log, draws = _run(cfg, multinomial=False)
    return (log, draws) if return_draws else log


def simulate_multinomial(cfg: SimConfig, return_draws: bool = False):
    """Simulate by drawing per-category totals and allocating them multinomially.

    With ``cfg.fixed_arrivals`` the totals are ``round(mu)`` instead of
    Poisson draws.
    """
    log, draws = _run(cfg, multinomial=True)
    return (log, draws) if return_draws else log
