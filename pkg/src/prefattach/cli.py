"""Command-line entry point: ``prefattach {ingest,fit,select,simulate,diagnose}``.

Exit codes: 0 on success, 1 when a run fails, 2 for usage, input or
configuration errors (reported before any sampling starts).
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from prefattach.evolution import (CATEGORIES, KNOWN_TYPES, EventLogError, SufficientStats,
                                  extract_increments, ingest, split_stats, summarize)
from prefattach.preference import PIECEWISE, POWER
from prefattach.priors import HyperConfig
from prefattach.sampler import ChainConfig, fit_single, merge_chains

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class UsageError(Exception):
    """Bad input or configuration; maps to exit code 2."""


SECTIONS = {"prior", "chain", "selection", "fit", "simulate"}


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{p}: {exc}") from None
    unknown = set(cfg) - SECTIONS
    if unknown:
        raise UsageError(f"{p}: unknown sections {sorted(unknown)}")
    return cfg


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def _hash(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (dt.date,)):
        return o.isoformat()
    raise TypeError(type(o).__name__)


def _types(arg: str) -> list[str]:
    types = [t.strip() for t in arg.split(",") if t.strip()]
    if not types:
        raise UsageError("no dependency types given")
    bad = [t for t in types if t not in KNOWN_TYPES]
    if bad:
        raise UsageError(f"unknown dependency type(s) {bad}; known types: {', '.join(KNOWN_TYPES)}")
    return types


def _read_log(path, types):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"event file not found: {p}")
    try:
        return ingest(p, types)
    except EventLogError as exc:
        raise UsageError(f"{p}: {exc}") from None


# ---------------------------------------------------------------- ingest
def cmd_ingest(args) -> int:
    log = _read_log(args.events, _types(args.types))
    if not log.events:
        raise UsageError(f"{args.events}: no events of the requested types")
    panel = extract_increments(log)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "timeline.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "date", "n_vertices"))
        for t, (d, n) in enumerate(zip(panel.dates, panel.n_vertices)):
            w.writerow((t, d.isoformat(), int(n)))
    panel.to_csv(out / "panel.csv")
    for cat in CATEGORIES:
        summarize(panel, cat).to_csv(out / f"stats_{cat}.csv")
    print(f"{len(log.events)} events, {panel.T} time points, "
          f"{int(panel.n_vertices[-1])} vertices -> {out}")
    return 0


def _read_stats(directory, category) -> tuple[SufficientStats, str]:
    d = Path(directory)
    path = d / f"stats_{category}.csv"
    if not path.is_file():
        raise UsageError(f"statistics file not found: {path}")
    dates = {}
    tl = d / "timeline.csv"
    if tl.is_file():
        with open(tl, newline="") as fh:
            for row in csv.DictReader(fh):
                dates[int(row["t"])] = dt.date.fromisoformat(row["date"])
    try:
        stats = SufficientStats.from_csv(path, category, dates or None)
    except (EventLogError, KeyError) as exc:
        raise UsageError(f"{path}: {exc}") from None
    if stats.T == 0:
        raise UsageError(f"{path}: no time points with existing vertices")
    return stats, _file_hash(path)


def _prior(cfg: dict) -> HyperConfig:
    try:
        return HyperConfig.from_dict(cfg.get("prior", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[prior]: {exc}") from None


def _chain(cfg: dict, default: ChainConfig, seed) -> ChainConfig:
    section = dict(cfg.get("chain", {}))
    if seed is not None:
        section["seed"] = seed
    try:
        return ChainConfig.from_dict(section, default)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[chain]: {exc}") from None


def _period(value):
    if value == "monthly":
        return value
    try:
        width = int(value)
    except ValueError:
        raise UsageError(f"--period must be 'monthly' or a positive integer, got {value!r}") from None
    if width < 1:
        raise UsageError("--period must be positive")
    return width


# ---------------------------------------------------------------- fit
def _run_single(job):
    stats, r, prior, chain, delta_fixed = job
    return fit_single(stats, r, prior, chain, delta_fixed)


def _run_hier(job):
    from prefattach.hierarchical import fit_hier
    periods, r, prior, chain, delta_fixed = job
    return fit_hier(periods, r, prior, chain, delta_fixed)


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    fit_cfg = cfg.get("fit", {})
    unknown = set(fit_cfg) - {"delta_fixed", "period"}
    if unknown:
        raise UsageError(f"[fit]: unknown keys {sorted(unknown)}")
    stats, data_hash = _read_stats(args.stats, args.category)
    prior = _prior(cfg)
    r = PIECEWISE if args.pref == "piecewise" else POWER
    delta_fixed = args.delta_fixed
    if delta_fixed is None:
        delta_fixed = bool(fit_cfg.get("delta_fixed", args.category == "deletion"))
    if args.chains < 1:
        raise UsageError("--chains must be >= 1")
    if args.hier:
        period = _period(args.period or fit_cfg.get("period", "monthly"))
        if period == "monthly" and not stats.dates:
            raise UsageError("monthly periods need timeline.csv next to the statistics")
        try:
            periods = split_stats(stats, period)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if len(periods) < 2:
            raise UsageError(f"only {len(periods)} period(s); the hierarchical model needs at "
                             "least 2 (use --single)")
        chain = _chain(cfg, ChainConfig.hier_default(), args.seed)
        runner = _run_hier
        data = periods
    else:
        period = None
        chain = _chain(cfg, ChainConfig.single_default(), args.seed)
        runner = _run_single
        data = stats
    resolved = {"command": "fit", "category": args.category, "pref": args.pref,
                "model": "hierarchical" if args.hier else "single", "delta_fixed": delta_fixed,
                "period": period, "chains": args.chains, "prior": prior.to_dict(),
                "chain": chain.to_dict()}
    jobs = [(data, r, prior, ChainConfig(**{**chain.to_dict(), "seed": chain.seed + i}),
             delta_fixed) for i in range(args.chains)]
    if args.chains == 1:
        results = [runner(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=args.chains) as pool:
            results = list(pool.map(runner, jobs))
    result = merge_chains(results) if len(results) > 1 else results[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "trace.csv")
    result.write_summary(out / "summary.json", {"config": resolved, "config_hash": _hash(resolved),
                                                "data_hash": data_hash})
    print(f"{result.n_draws} draws -> {out}")
    return 0


# ---------------------------------------------------------------- select
def cmd_select(args) -> int:
    from prefattach.selection import SelectionConfig, select, suggest_p, tune_pseudoprior
    cfg = _load_config(args.config)
    sel_cfg = dict(cfg.get("selection", {}))
    unknown = set(sel_cfg) - {"p", "pilot_draws", "pilot_burn_in", "pilot_thin", "auto_p",
                              "delta_fixed"}
    if unknown:
        raise UsageError(f"[selection]: unknown keys {sorted(unknown)}")
    stats, data_hash = _read_stats(args.stats, args.category)
    prior = _prior(cfg)
    p = args.p if args.p is not None else float(sel_cfg.get("p", 0.5))
    if not 0 < p < 1:
        raise UsageError("--p must lie strictly between 0 and 1")
    pilot_draws = args.pilot_draws if args.pilot_draws is not None else int(
        sel_cfg.get("pilot_draws", 1000))
    if pilot_draws < 100:
        raise UsageError("the pilot run needs at least 100 draws")
    delta_fixed = args.delta_fixed
    if delta_fixed is None:
        delta_fixed = bool(sel_cfg.get("delta_fixed", args.category == "deletion"))
    auto_p = args.auto_p or bool(sel_cfg.get("auto_p", False))
    chain = _chain(cfg, ChainConfig.single_default(), args.seed)
    pilot_cfg = ChainConfig.from_draws(pilot_draws, burn_in=int(sel_cfg.get("pilot_burn_in", 1000)),
                                       thin=int(sel_cfg.get("pilot_thin", 2)), seed=chain.seed)
    resolved = {"command": "select", "category": args.category, "p": p, "auto_p": auto_p,
                "delta_fixed": delta_fixed, "prior": prior.to_dict(), "chain": chain.to_dict(),
                "pilot": pilot_cfg.to_dict()}

    pilot = fit_single(stats, PIECEWISE, prior, pilot_cfg, delta_fixed)
    pseudo = tune_pseudoprior(pilot, prior)
    result = select(stats, SelectionConfig(p, pseudo, chain), prior, delta_fixed)
    report = result.report()
    if auto_p:
        p2 = suggest_p(result)
        result = select(stats, SelectionConfig(p2, pseudo, chain), prior, delta_fixed)
        report = dict(result.report(), first_pass=report)
    report.update(config=resolved, config_hash=_hash(resolved), data_hash=data_hash,
                  pilot=pilot.summary()["parameters"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "selection.json", report)
    with open(out / "r_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("draw", "r"))
        for i, r in enumerate(result.r_trace, start=1):
            w.writerow((i, int(r)))
    print(result.describe())
    return 0


# ---------------------------------------------------------------- simulate
def cmd_simulate(args) -> int:
    from prefattach.simulator import SimConfig, simulate, simulate_multinomial
    cfg = _load_config(args.config)
    section = dict(cfg.get("simulate", {}))
    multinomial = bool(section.pop("multinomial", False))
    if args.seed is not None:
        section["seed"] = args.seed
    try:
        sim = SimConfig.from_dict(section)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[simulate]: {exc}") from None
    log = (simulate_multinomial if multinomial else simulate)(sim)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log.to_csv(out)
    print(f"{len(log.events)} events -> {out}")
    return 0


# ---------------------------------------------------------------- diagnose
def cmd_diagnose(args) -> int:
    from prefattach import diagnostics as dg
    log = _read_log(args.events, _types(args.types))
    if not log.events:
        raise UsageError(f"{args.events}: the event log is empty")
    panel = extract_increments(log)
    if panel.T < 1:
        raise UsageError("the log has no transitions")
    if args.date:
        try:
            t = log.time_of(dt.date.fromisoformat(args.date))
        except (KeyError, ValueError) as exc:
            raise UsageError(f"--date: {exc}") from None
    else:
        t = panel.T
    if t < 1:
        raise UsageError("the requested date has no preceding transition")
    if args.window < 1:
        raise UsageError("--window must be >= 1")
    lo = max(1, t - args.window + 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"date": panel.dates[t], "t": t, "window": [lo, t], "category": args.category,
              "ratio": args.ratio}
    table = dg.smoothed_averages(panel, args.category, (lo, t), args.ratio)
    dg.write_table(out / "smoothed.csv", table.header, table.rows())
    if (table.mean > 0).any():
        report["smoothed"] = dg.residual_summary(table)
    else:
        report["smoothed"] = {"bins": len(table), "note": "no bin with a positive mean"}
    indeg, outdeg = log.degrees_at(t)
    try:
        surv = dg.survival_plot_data(indeg)
        dg.write_table(out / "survival.csv", surv.header, surv.rows())
        report["survival"] = {"slope": None if surv.degenerate else surv.slope,
                              "intercept": None if surv.degenerate else surv.intercept,
                              "body_max": surv.body_max, "degenerate": surv.degenerate,
                              "tail_above_fit": surv.tail_above, "notes": surv.notes}
    except ValueError as exc:
        report["survival"] = {"error": str(exc)}
    try:
        report["degree_correlation"] = dg.degree_correlation(indeg, outdeg)
    except ValueError as exc:
        report["degree_correlation"] = None
        report["degree_correlation_error"] = str(exc)
    _write_json(out / "diagnostics.json", report)
    print(json.dumps(report["smoothed"], sort_keys=True, default=_json_default))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prefattach",
                                 description="Preferential attachment in evolving dependency networks.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="event log -> increments and sufficient statistics")
    p.add_argument("--events", required=True)
    p.add_argument("--types", default="Imports", help="comma-separated dependency types")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    def common(q):
        q.add_argument("--stats", required=True, help="directory written by 'ingest'")
        q.add_argument("--category", required=True, choices=CATEGORIES)
        q.add_argument("--config")
        q.add_argument("--seed", type=int)
        q.add_argument("--out", required=True)
        g = q.add_mutually_exclusive_group()
        g.add_argument("--delta-fixed", dest="delta_fixed", action="store_true", default=None)
        g.add_argument("--no-delta-fixed", dest="delta_fixed", action="store_false")

    p = sub.add_parser("fit", help="sample the posterior of one preference form")
    common(p)
    p.add_argument("--pref", choices=("power", "piecewise"), default="power")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--hier", action="store_true")
    g.add_argument("--single", dest="hier", action="store_false")
    p.add_argument("--period", help="'monthly' or a number of time points per period")
    p.add_argument("--chains", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="Bayes factor of piecewise over power")
    common(p)
    p.add_argument("--p", type=float)
    p.add_argument("--pilot-draws", type=int)
    p.add_argument("--auto-p", action="store_true")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="write a simulated event log")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="exploratory tables for one date")
    p.add_argument("--events", required=True)
    p.add_argument("--types", default="Imports")
    p.add_argument("--category", choices=CATEGORIES, default="external")
    p.add_argument("--date", help="ISO date; defaults to the last date in the log")
    p.add_argument("--window", type=int, default=1, help="time points pooled, ending at the date")
    p.add_argument("--ratio", type=float, default=1.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
