"""Edge-event logs, increment panels and per-time sufficient statistics.

An event log is a sequence of timestamped directed edge additions and
removals. Replaying it date by date yields, for every vertex that already
existed at the previous time point, its in-degree and the three increment
categories:

* internal: new in-edges whose source already existed,
* external: new in-edges whose source is first seen at this time point,
* deletion: removed in-edges.

The per-vertex panel is compressed into degree histograms and
(degree, increment) counts, which is all the likelihood needs.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

EVENT_HEADER = ("from", "to", "type", "action", "prev_date", "curr_date")
KNOWN_TYPES = ("Depends", "Imports", "LinkingTo", "Suggests", "Enhances")
CATEGORIES = ("external", "internal", "deletion")


class EventLogError(ValueError):
    """Malformed or inconsistent event log."""


@dataclass(frozen=True)
class EdgeEvent:
    source: str
    target: str
    dep_type: str
    action: str  # "added" | "removed"
    prev_date: dt.date
    curr_date: dt.date
    line: int = 0

    def __post_init__(self):
        if self.action not in ("added", "removed"):
            raise EventLogError(self._where() + f"unknown action {self.action!r}")
        if self.source == self.target:
            raise EventLogError(self._where() + f"self-loop on {self.source!r}")
        if not self.prev_date < self.curr_date:
            raise EventLogError(self._where() + "prev_date must precede curr_date")

    def _where(self) -> str:
        return f"line {self.line}: " if self.line else ""


@dataclass
class EvolutionLog:
    """Validated, time-ordered edge events with interned vertex ids.

    Vertex ids are dense and assigned in order of first appearance, so the
    vertices existing at time ``t`` are exactly ``range(n_vertices[t])``.

    Attributes
    ----------
    events : list of EdgeEvent
        Sorted by ``curr_date`` (stable within a date).
    timeline : list of datetime.date
        ``timeline[0]`` is the state before the first change; later entries
        are the distinct dates carrying at least one event.
    vertex_names : list of str
    vertex_first_seen : numpy.ndarray
        Time index at which each vertex id first appears.
    """

    events: list
    timeline: list
    vertex_names: list
    vertex_first_seen: np.ndarray
    vertex_index: dict = field(repr=False)

    @classmethod
    def from_events(cls, events: Iterable[EdgeEvent]) -> "EvolutionLog":
        events = sorted(events, key=lambda e: e.curr_date)
        if not events:
            return cls([], [], [], np.zeros(0, dtype=np.int64), {})
        timeline = [min(e.prev_date for e in events)]
        for e in events:
            if e.curr_date != timeline[-1]:
                timeline.append(e.curr_date)
        names: list[str] = []
        index: dict[str, int] = {}
        first_seen: list[int] = []
        typed: set[tuple[str, str, str]] = set()
        t = 0
        for e in events:
            if e.curr_date != timeline[t]:
                t = timeline.index(e.curr_date, t)
            key = (e.source, e.target, e.dep_type)
            if e.action == "added":
                if key in typed:
                    raise EventLogError(e._where() + f"duplicate addition of {key}")
                typed.add(key)
            else:
                if key not in typed:
                    raise EventLogError(e._where() + f"removal of absent edge {key}")
                typed.discard(key)
            for v in (e.source, e.target):
                if v not in index:
                    index[v] = len(names)
                    names.append(v)
                    first_seen.append(t)
        return cls(events, timeline, names, np.asarray(first_seen, dtype=np.int64), index)

    @property
    def T(self) -> int:
        return max(len(self.timeline) - 1, 0)

    @property
    def n_vertices(self) -> np.ndarray:
        """Vertex count ``n_t`` for ``t = 0..T``."""
        if not self.timeline:
            return np.zeros(0, dtype=np.int64)
        counts = np.bincount(self.vertex_first_seen, minlength=len(self.timeline))
        return np.cumsum(counts)

    def edges_by_date(self) -> Iterator[tuple[int, list[EdgeEvent]]]:
        """Yield ``(t, events)`` for t = 1..T."""
        t = 0
        batch: list[EdgeEvent] = []
        for e in self.events:
            if e.curr_date != self.timeline[t]:
                if batch:
                    yield t, batch
                t = self.timeline.index(e.curr_date, t)
                batch = []
            batch.append(e)
        if batch:
            yield t, batch

    def edge_set_at(self, t: int) -> set[tuple[int, int]]:
        """Untyped edge set (source id, target id) after time point ``t``."""
        typed: Counter = Counter()
        for s, batch in self.edges_by_date():
            if s > t:
                break
            for e in batch:
                key = (self.vertex_index[e.source], self.vertex_index[e.target])
                typed[key] += 1 if e.action == "added" else -1
        return {k for k, v in typed.items() if v > 0}

    def degrees_at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """In- and out-degrees of the vertices existing at time point ``t``."""
        n = int(self.n_vertices[t]) if self.timeline else 0
        indeg = np.zeros(n, dtype=np.int64)
        outdeg = np.zeros(n, dtype=np.int64)
        for u, v in self.edge_set_at(t):
            outdeg[u] += 1
            indeg[v] += 1
        return indeg, outdeg

    def time_of(self, date: dt.date) -> int:
        """Index of the last time point at or before ``date``."""
        if not self.timeline or date < self.timeline[0]:
            raise KeyError(f"{date} precedes the timeline")
        return max(i for i, d in enumerate(self.timeline) if d <= date)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EVENT_HEADER)
            for e in self.events:
                w.writerow([e.source, e.target, e.dep_type, e.action,
                            e.prev_date.isoformat(), e.curr_date.isoformat()])


def read_events(path) -> list[EdgeEvent]:
    """Parse the event CSV, raising :class:`EventLogError` with a line number."""
    path = Path(path)
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return []
        header = [h.strip() for h in header]
        if tuple(header) != EVENT_HEADER:
            raise EventLogError(f"line 1: expected header {','.join(EVENT_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(EVENT_HEADER):
                raise EventLogError(f"line {line}: expected 6 fields, got {len(row)}")
            src, tgt, typ, action, prev, curr = (c.strip() for c in row)
            try:
                prev_d = dt.date.fromisoformat(prev)
                curr_d = dt.date.fromisoformat(curr)
            except ValueError as exc:
                raise EventLogError(f"line {line}: bad date ({exc})") from None
            if not src or not tgt or not typ:
                raise EventLogError(f"line {line}: empty field")
            events.append(EdgeEvent(src, tgt, typ, action.lower(), prev_d, curr_d, line))
    return events


def file_types(path) -> set[str]:
    return {e.dep_type for e in read_events(path)}


def ingest(path, dep_types: Iterable[str]) -> EvolutionLog:
    """Read an event CSV and keep the chosen dependency types.

    Edges of several types between the same pair of vertices are merged: the
    untyped edge exists while at least one typed edge does.
    """
    dep_types = set(dep_types)
    if not dep_types:
        raise ValueError("dep_types must be non-empty")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    events = [e for e in read_events(path) if e.dep_type in dep_types]
    return EvolutionLog.from_events(events)


@dataclass(frozen=True)
class Step:
    """Dense view of one transition ``t-1 -> t`` over existing vertices."""

    t: int
    k_prev: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    k: np.ndarray

    def increment(self, category: str) -> np.ndarray:
        return {"internal": self.x, "external": self.y, "deletion": self.z}[category]


@dataclass(frozen=True)
class IncrementPanel:
    """Per-vertex increments, stored sparsely.

    Only vertices with a non-zero increment are stored for each time point;
    everyone else keeps their degree. ``entry_degree`` is a vertex's
    in-degree at the time point it first appears (edges between two
    brand-new vertices count towards it but towards no increment).
    """

    dates: tuple
    n_vertices: np.ndarray
    entry_degree: np.ndarray
    ptr: np.ndarray
    vertex: np.ndarray
    k_prev: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    k: np.ndarray

    @property
    def T(self) -> int:
        return max(len(self.dates) - 1, 0)

    def n_prev(self, t: int) -> int:
        return int(self.n_vertices[t - 1])

    def iter_steps(self) -> Iterator[Step]:
        deg = np.zeros(len(self.entry_degree), dtype=np.int64)
        n0 = int(self.n_vertices[0]) if len(self.n_vertices) else 0
        deg[:n0] = self.entry_degree[:n0]
        for t in range(1, self.T + 1):
            n = self.n_prev(t)
            k_prev = deg[:n].copy()
            x = np.zeros(n, dtype=np.int64)
            y = np.zeros(n, dtype=np.int64)
            z = np.zeros(n, dtype=np.int64)
            sl = slice(self.ptr[t], self.ptr[t + 1])
            ids = self.vertex[sl]
            x[ids] = self.x[sl]
            y[ids] = self.y[sl]
            z[ids] = self.z[sl]
            deg[ids] = self.k[sl]
            n_new = int(self.n_vertices[t])
            deg[n:n_new] = self.entry_degree[n:n_new]
            yield Step(t, k_prev, x, y, z, deg[:n].copy())

    def degrees_at(self, t: int) -> np.ndarray:
        """In-degrees of every vertex existing at time point ``t`` (0-based timeline)."""
        if not 0 <= t <= self.T:
            raise IndexError(t)
        n0 = int(self.n_vertices[0])
        if t == 0:
            return self.entry_degree[:n0].astype(np.int64)
        for s in self.iter_steps():
            if s.t == t:
                n_new = int(self.n_vertices[t])
                return np.concatenate([s.k, self.entry_degree[len(s.k):n_new]]).astype(np.int64)
        raise IndexError(t)

    def step(self, t: int) -> Step:
        for s in self.iter_steps():
            if s.t == t:
                return s
        raise IndexError(t)

    def check_identity(self) -> bool:
        """Degree accounting ``k = k_prev + x + y - z`` for every stored record."""
        return bool(np.array_equal(self.k, self.k_prev + self.x + self.y - self.z)
                    and np.all(self.z <= self.k_prev))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "vertex", "k_prev", "x", "y", "z", "k"))
            for t in range(1, self.T + 1):
                for j in range(self.ptr[t], self.ptr[t + 1]):
                    w.writerow((t, self.vertex[j], self.k_prev[j], self.x[j],
                                self.y[j], self.z[j], self.k[j]))


def extract_increments(log: EvolutionLog) -> IncrementPanel:
    """Replay the log and classify every edge change by category."""
    T = log.T
    n_vertices = log.n_vertices
    n_total = len(log.vertex_names)
    indeg = np.zeros(n_total, dtype=np.int64)
    entry = np.zeros(n_total, dtype=np.int64)
    typed: Counter = Counter()
    ptr = [0, 0]
    cols: dict[str, list] = {c: [] for c in ("vertex", "k_prev", "x", "y", "z", "k")}
    batches = dict(log.edges_by_date())
    for t in range(1, T + 1):
        n_prev = int(n_vertices[t - 1])
        before: dict[tuple[int, int], bool] = {}
        for e in batches.get(t, ()):
            key = (log.vertex_index[e.source], log.vertex_index[e.target])
            if key not in before:
                before[key] = typed[key] > 0
            typed[key] += 1 if e.action == "added" else -1
        inc: dict[int, list[int]] = defaultdict(lambda: [0, 0, 0])
        changed = []
        for (u, v), was in before.items():
            now = typed[(u, v)] > 0
            if was == now:
                continue
            changed.append((v, now))
            if v >= n_prev:
                continue
            if not now:
                inc[v][2] += 1
            elif u < n_prev:
                inc[v][0] += 1
            else:
                inc[v][1] += 1
        k_prev = {v: int(indeg[v]) for v in inc}
        for v, now in changed:
            indeg[v] += 1 if now else -1
        for v in sorted(inc):
            x, y, z = inc[v]
            cols["vertex"].append(v)
            cols["x"].append(x)
            cols["y"].append(y)
            cols["z"].append(z)
            cols["k"].append(int(indeg[v]))
            cols["k_prev"].append(k_prev[v])
        new = slice(n_prev, int(n_vertices[t]))
        entry[new] = indeg[new]
        ptr.append(len(cols["vertex"]))
    arrays = {k: np.asarray(v, dtype=np.int64) for k, v in cols.items()}
    return IncrementPanel(tuple(log.timeline), np.asarray(n_vertices, dtype=np.int64),
                          entry, np.asarray(ptr, dtype=np.int64), **arrays)


@dataclass(frozen=True)
class SufficientStats:
    """Histogram summary of one increment category.

    Row ``j`` corresponds to panel time ``times[j]``. Times with no existing
    vertex carry no information and are omitted.

    Attributes
    ----------
    degrees : float array (K,)
        Sorted distinct degrees appearing in any histogram.
    c_ptr, c_idx, c_cnt
        CSR layout of the degree histograms ``c[t, k]``; ``c_idx`` indexes
        ``degrees``.
    obs_row, obs_idx, obs_y, obs_n
        Joint counts ``n[t, k, y]`` for ``y > 0`` (``obs_idx`` into ``degrees``).
    A : float array (T,)
        Total increment per time.
    w : float array (K,)
        ``sum_{t, y} y * n[t, k, y]``, total increment received at degree ``k``.
    log_y_factorial : float
        ``sum n[t, k, y] * log(y!)``.
    """

    category: str
    times: np.ndarray
    dates: tuple
    degrees: np.ndarray
    c_ptr: np.ndarray
    c_idx: np.ndarray
    c_cnt: np.ndarray
    obs_row: np.ndarray
    obs_idx: np.ndarray
    obs_y: np.ndarray
    obs_n: np.ndarray

    def __post_init__(self):
        A = np.zeros(len(self.times))
        np.add.at(A, self.obs_row, self.obs_y * self.obs_n)
        w = np.zeros(len(self.degrees))
        np.add.at(w, self.obs_idx, self.obs_y * self.obs_n)
        logfact = float(np.dot(self.obs_n, [math.lgamma(y + 1) for y in self.obs_y]))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "log_y_factorial", logfact)

    @property
    def T(self) -> int:
        return len(self.times)

    @property
    def A_total(self) -> float:
        return float(self.A.sum())

    def histogram(self, j: int) -> dict[int, int]:
        sl = slice(self.c_ptr[j], self.c_ptr[j + 1])
        return {int(self.degrees[i]): int(c) for i, c in zip(self.c_idx[sl], self.c_cnt[sl])}

    def observations(self, j: int) -> dict[tuple[int, int], int]:
        mask = self.obs_row == j
        return {(int(self.degrees[i]), int(y)): int(n)
                for i, y, n in zip(self.obs_idx[mask], self.obs_y[mask], self.obs_n[mask])}

    def n_existing(self) -> np.ndarray:
        return np.add.reduceat(self.c_cnt, self.c_ptr[:-1]) if self.T else np.zeros(0)

    def median_positive_degree(self) -> float:
        cnt = np.bincount(self.c_idx, weights=self.c_cnt, minlength=len(self.degrees))
        pos = self.degrees > 0
        if not np.any(cnt[pos] > 0):
            return 1.0
        ks, cs = self.degrees[pos], cnt[pos]
        cum = np.cumsum(cs)
        return float(ks[np.searchsorted(cum, 0.5 * cum[-1])])

    def subset(self, rows: Sequence[int]) -> "SufficientStats":
        """Statistics restricted to the given row indices (kept in order)."""
        rows = np.asarray(rows, dtype=np.int64)
        remap = np.full(self.T, -1, dtype=np.int64)
        remap[rows] = np.arange(len(rows))
        hist_rows = [(self.c_idx[self.c_ptr[j]:self.c_ptr[j + 1]],
                      self.c_cnt[self.c_ptr[j]:self.c_ptr[j + 1]]) for j in rows]
        keep = remap[self.obs_row] >= 0
        return _build(self.category, self.times[rows],
                      tuple(self.dates[j] for j in rows) if self.dates else (),
                      [(self.degrees[i], c) for i, c in hist_rows],
                      remap[self.obs_row[keep]], self.degrees[self.obs_idx[keep]],
                      self.obs_y[keep], self.obs_n[keep])

    def to_csv(self, path) -> None:
        """Columnar export ``t,k,y,count``; rows with ``y = -1`` hold ``c[t, k]``."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(("t", "k", "y", "count"))
            order = np.lexsort((self.obs_y, self.obs_idx, self.obs_row))
            pos = 0
            for j in range(self.T):
                t = int(self.times[j])
                for m in range(self.c_ptr[j], self.c_ptr[j + 1]):
                    wr.writerow((t, int(self.degrees[self.c_idx[m]]), -1, int(self.c_cnt[m])))
                while pos < len(order) and self.obs_row[order[pos]] == j:
                    o = order[pos]
                    wr.writerow((t, int(self.degrees[self.obs_idx[o]]), int(self.obs_y[o]),
                                 int(self.obs_n[o])))
                    pos += 1

    @classmethod
    def from_csv(cls, path, category: str = "", dates: dict | None = None) -> "SufficientStats":
        hist: dict[int, dict[int, int]] = defaultdict(dict)
        obs = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != ("t", "k", "y", "count"):
                raise EventLogError(f"{path}: expected header t,k,y,count")
            for row in reader:
                try:
                    t, k, y, n = (int(v) for v in row)
                except ValueError:
                    raise EventLogError(f"{path}: line {reader.line_num}: bad row") from None
                if y == -1:
                    hist[t][k] = n
                    continue
                if y <= 0 or n < 0:
                    raise EventLogError(f"{path}: line {reader.line_num}: bad increment row")
                obs.append((t, k, y, n))
        times = np.array(sorted(hist), dtype=np.int64)
        row_of = {t: j for j, t in enumerate(times)}
        for t, k, y, n in obs:
            if k not in hist.get(t, {}):
                raise EventLogError(f"{path}: increment at t={t}, k={k} without histogram row")
        date_tuple = tuple(dates[int(t)] for t in times) if dates else ()
        ob = np.array(obs, dtype=np.int64).reshape(-1, 4)
        return _build(category, times, date_tuple,
                      [(np.array(list(hist[t].keys()), dtype=float),
                        np.array(list(hist[t].values()), dtype=float)) for t in times],
                      np.array([row_of[t] for t in ob[:, 0]], dtype=np.int64),
                      ob[:, 1].astype(float), ob[:, 2], ob[:, 3])


def _build(category, times, dates, hists, obs_row, obs_k, obs_y, obs_n) -> SufficientStats:
    all_k = [h[0] for h in hists] + [np.asarray(obs_k, dtype=float)]
    degrees = np.unique(np.concatenate(all_k)) if all_k else np.zeros(0)
    c_ptr = [0]
    c_idx, c_cnt = [], []
    for ks, cs in hists:
        ks = np.asarray(ks, dtype=float)
        order = np.argsort(ks)
        c_idx.append(np.searchsorted(degrees, ks[order]))
        c_cnt.append(np.asarray(cs, dtype=float)[order])
        c_ptr.append(c_ptr[-1] + len(ks))
    return SufficientStats(
        category=category,
        times=np.asarray(times, dtype=np.int64),
        dates=tuple(dates),
        degrees=degrees.astype(float),
        c_ptr=np.asarray(c_ptr, dtype=np.int64),
        c_idx=np.concatenate(c_idx).astype(np.int64) if c_idx else np.zeros(0, dtype=np.int64),
        c_cnt=np.concatenate(c_cnt) if c_cnt else np.zeros(0),
        obs_row=np.asarray(obs_row, dtype=np.int64),
        obs_idx=np.searchsorted(degrees, np.asarray(obs_k, dtype=float)).astype(np.int64),
        obs_y=np.asarray(obs_y, dtype=np.int64),
        obs_n=np.asarray(obs_n, dtype=np.int64),
    )


def summarize(panel: IncrementPanel, category: str) -> SufficientStats:
    """Compress one increment category of a panel into histograms."""
    if category not in CATEGORIES:
        raise ValueError(f"category must be one of {CATEGORIES}, got {category!r}")
    times, dates, hists = [], [], []
    obs_row, obs_k, obs_y, obs_n = [], [], [], []
    for st in panel.iter_steps():
        if len(st.k_prev) == 0:
            continue
        j = len(times)
        times.append(st.t)
        dates.append(panel.dates[st.t])
        cnt = np.bincount(st.k_prev)
        ks = np.flatnonzero(cnt)
        hists.append((ks.astype(float), cnt[ks].astype(float)))
        inc = st.increment(category)
        pos = inc > 0
        if np.any(pos):
            pairs = Counter(zip(st.k_prev[pos].tolist(), inc[pos].tolist()))
            for (k, y), n in sorted(pairs.items()):
                obs_row.append(j)
                obs_k.append(k)
                obs_y.append(y)
                obs_n.append(n)
    return _build(category, times, dates, hists, obs_row, obs_k, obs_y, obs_n)


def partition_periods(dates, scheme) -> list[tuple[int, np.ndarray, int]]:
    """Split time points into contiguous periods.

    Parameters
    ----------
    dates : IncrementPanel or sequence
        A panel (periods cover its time points ``1..T``) or one entry per
        time point (dates for ``"monthly"``; any values for a fixed width).
    scheme : "monthly" or int
        Calendar months, or a fixed number of time points per period (the
        last period may be shorter).

    Returns
    -------
    list of (s, indices, T_s) with ``s`` counted from 1. Indices are panel
    time points for a panel and positions otherwise.
    """
    if isinstance(dates, IncrementPanel):
        return [(s, idx + 1, n) for s, idx, n in partition_periods(dates.dates[1:], scheme)]
    n = len(dates)
    if n == 0:
        raise ValueError("no time points to partition")
    if scheme == "monthly":
        keys = [(d.year, d.month) for d in dates]
        bounds = [0] + [i for i in range(1, n) if keys[i] != keys[i - 1]] + [n]
    else:
        width = int(scheme)
        if width < 1:
            raise ValueError("period width must be >= 1")
        bounds = list(range(0, n, width)) + [n]
    periods = []
    for s, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:]), start=1):
        if hi <= lo:
            raise ValueError(f"period {s} is empty")
        periods.append((s, np.arange(lo, hi), hi - lo))
    return periods


def concat_stats(parts: Sequence[SufficientStats]) -> SufficientStats:
    """Stack per-period statistics back into one object (rows in given order)."""
    if not parts:
        raise ValueError("nothing to concatenate")
    hists, rows, ks, ys, ns = [], [], [], [], []
    offset = 0
    for p in parts:
        for j in range(p.T):
            sl = slice(p.c_ptr[j], p.c_ptr[j + 1])
            hists.append((p.degrees[p.c_idx[sl]], p.c_cnt[sl]))
        rows.append(p.obs_row + offset)
        ks.append(p.degrees[p.obs_idx])
        ys.append(p.obs_y)
        ns.append(p.obs_n)
        offset += p.T
    dates = tuple(d for p in parts for d in p.dates) if all(p.dates for p in parts) else ()
    return _build(parts[0].category, np.concatenate([p.times for p in parts]), dates, hists,
                  np.concatenate(rows), np.concatenate(ks), np.concatenate(ys), np.concatenate(ns))


def split_stats(stats: SufficientStats, scheme) -> list[SufficientStats]:
    """Per-period statistics under ``partition_periods``."""
    labels = stats.dates if scheme == "monthly" else stats.times
    return [stats.subset(rows) for _, rows, _ in partition_periods(labels, scheme)]
