"""Acceptance criteria, one test each; the terminal summary prints PASS/FAIL per criterion."""
import math
import os
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, stats as sps

from conftest import (PreferenceParams, SimConfig, extract_increments, oracle_fixture, random_log,
                      random_theta, run_selection, sim_stats, simulate, small_panel, summarize)
from oracles import brute_loglik, quad_collapsed, replay
from prefattach.evolution import ingest
from prefattach.likelihood import RatePrior, loglik_collapsed, loglik_full
from prefattach.priors import HyperConfig

criterion = pytest.mark.criterion


def params_of(r, theta):
    alpha, beta, gamma, delta = theta
    if r == 0:
        return PreferenceParams.power(alpha, delta)
    return PreferenceParams.piecewise(alpha, beta, gamma, delta)


def seed_chain(draws, burn_in, thin, seed):
    from prefattach.sampler import ChainConfig
    return ChainConfig.from_draws(draws, burn_in=burn_in, thin=thin, seed=seed)


@criterion(1, "increment identity on ingested and simulated logs")
def test_increment_identity(tmp_path, record_property):
    rng = np.random.default_rng(2024)
    pairs = bad = 0
    types = ("Imports", "Depends", "Suggests")
    for i in range(40):
        log = random_log(rng, n_dates=8, n_names=10, types=types)
        path = tmp_path / f"log{i}.csv"
        log.to_csv(path)
        log = ingest(path, types[: 1 + i % 3])
        panel = extract_increments(log)
        ref = replay([(e.source, e.target, e.dep_type, e.action, e.prev_date, e.curr_date)
                      for e in log.events])
        for s in panel.iter_steps():
            rows = ref.get(log.timeline[s.t], {})
            for v in range(len(s.k_prev)):
                pairs += 1
                ident = s.k[v] == s.k_prev[v] + s.x[v] + s.y[v] - s.z[v]
                want = rows.get(log.vertex_names[v], (0, 0, 0, s.k_prev[v], s.k_prev[v]))
                bad += not (ident and (s.x[v], s.y[v], s.z[v], s.k_prev[v], s.k[v]) == want)
    sims = [SimConfig(n0=20, T=60, mu_external=4, mu_internal=2, mu_deletion=1.5,
                      internal=PreferenceParams.power(0.9, 0.5),
                      deletion=PreferenceParams.power(1.0, 0.5), seed=s) for s in range(5)]
    sims.append(SimConfig(n0=30, T=100, mu_external=10, external=PreferenceParams.piecewise(1.3, 1.0, 4.0),
                          mu_deletion=3, deletion=PreferenceParams.power(0.8), seed=9))
    for cfg in sims:
        log = simulate(cfg)
        panel = extract_increments(log)
        for s in panel.iter_steps():
            n = len(s.k_prev)
            k_now = log.degrees_at(s.t)[0][:n]
            k_before = log.degrees_at(s.t - 1)[0][:n]
            ok = ((s.k == s.k_prev + s.x + s.y - s.z) & (s.k == k_now) & (s.k_prev == k_before))
            pairs += n
            bad += int(np.sum(~ok))
    record_property("detail", f"{pairs} (vertex, time) pairs, {bad} violations")
    assert pairs > 5000 and bad == 0


@criterion(2, "histogram likelihood equals brute-force Poisson product")
def test_likelihood_oracle(record_property):
    rng = np.random.default_rng(77)
    worst, n = 0.0, 0
    for r in (0, 1):
        for _ in range(30):
            stats, rec = small_panel(rng)
            theta = random_theta(rng, r)
            mu = float(rng.uniform(0.2, 5.0))
            got = loglik_full(stats, params_of(r, theta), mu)
            want = brute_loglik(rec, r, theta, mu)
            worst = max(worst, abs(got - want) / abs(want))
            n += 1
    record_property("detail", f"{n} panels, max rel err {worst:.2e} (tol 1e-10)")
    assert n >= 50 and worst <= 1e-10


@criterion(3, "collapsed likelihood equals quadrature over the rate")
def test_collapsed_quadrature(record_property):
    rng = np.random.default_rng(78)
    worst, n = 0.0, 0
    for r in (0, 1):
        for _ in range(12):
            stats, rec = small_panel(rng)
            theta = random_theta(rng, r)
            a, b = float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.05, 2.0))
            got = loglik_collapsed(stats, params_of(r, theta), RatePrior(a, b))
            want = quad_collapsed(rec, r, theta, a, b)
            worst = max(worst, abs(got - want) / abs(want))
            n += 1
    record_property("detail", f"{n} fixtures, max rel err {worst:.2e} (tol 1e-8)")
    assert n >= 20 and worst <= 1e-8


@criterion(4, "Poisson splitting equivalence of the two simulators")
def test_splitting_equivalence(record_property):
    from test_simulator import first_step_y, moment_gaps
    from prefattach.simulator import simulate_multinomial
    cfg = SimConfig(n0=6, T=1, mu_external=4, external=PreferenceParams.power(1.0, 1.0),
                    seed_graph="star")
    a, b = first_step_y(cfg, simulate), first_step_y(cfg, simulate_multinomial)
    dm, dv = moment_gaps(a, b)
    record_property("detail", f"{a.shape[0]} replicates, max gap mean {dm.max():.2f} se, "
                              f"variance {dv.max():.2f} se")
    assert a.shape[0] >= 10_000 and np.all(dm < 3) and np.all(dv < 3)


@criterion(5, "single-model parameter recovery")
def test_parameter_recovery(record_property):
    from prefattach.sampler import fit_single
    truth = {"alpha": 1.2, "delta": 1.0, "mu": 5.0}
    hits = dict.fromkeys(truth, 0)
    for seed in range(20):
        stats = sim_stats(PreferenceParams.power(1.2, 1.0), seed=seed)
        res = fit_single(stats, 0, chain_cfg=seed_chain(2000, 1000, 2, seed))
        for name, value in truth.items():
            lo, hi = res.interval(name)
            hits[name] += lo <= value <= hi
    record_property("detail", ", ".join(f"{k} {v}/20" for k, v in hits.items()) + " (need 17)")
    assert all(v >= 17 for v in hits.values())


@criterion(6, "Bayes factor selects the generating preference form")
def test_selection_correctness(record_property):
    piece = PreferenceParams.piecewise(1.3, 1.0, 4.0, 1.0)
    power = PreferenceParams.power(1.2, 1.0)
    strong = weak = 0
    pct = []
    for seed in range(10):
        st1 = sim_stats(piece, seed=seed, T=500, mu=20)
        k, c = st1.degrees[st1.c_idx], st1.c_cnt.astype(np.int64)
        pct.append(float(np.percentile(np.repeat(k[k > 0], c[k > 0]), 80)))
        strong += run_selection(st1, seed).exceeds(10)
        weak += run_selection(sim_stats(power, seed=seed, T=500, mu=20), seed).below(1)
    record_property("detail", f"piecewise B10>10 in {strong}/10, power B10<1 in {weak}/10 "
                              f"(need 7); gamma=4 vs 80th degree percentile {np.median(pct):g}")
    assert strong >= 7 and weak >= 7


@criterion(7, "Bayes factor invariant to the pseudoprior")
def test_pseudoprior_invariance(record_property):
    chain = (20_000, 2000, 2)
    notes, ok = [], True
    cases = (("power panel", sim_stats(PreferenceParams.power(1.2, 1.0), seed=0, T=500, mu=20), False),
             ("small piecewise panel", oracle_fixture(0)[0], True))
    for label, stats, delta_fixed in cases:
        a = run_selection(stats, 0, chain=chain, delta_fixed=delta_fixed)
        pp = a.pseudoprior
        shifted = replace(pp, mean_log_beta=pp.mean_log_beta + 0.5, sd_log_beta=2 * pp.sd_log_beta,
                          mean_log_gamma=pp.mean_log_gamma - 0.5, sd_log_gamma=2 * pp.sd_log_gamma)
        b = run_selection(stats, 100, chain=chain, delta_fixed=delta_fixed, pseudoprior=shifted)
        overlap = a.interval[0] <= b.interval[1] and b.interval[0] <= a.interval[1]
        se = math.hypot(*((hi - lo) / (2 * 1.96) for lo, hi in (a.interval, b.interval)))
        close = abs(a.bayes_factor - b.bayes_factor) < 3 * se
        ok &= overlap and close
        notes.append(f"{label} {a.bayes_factor:.3g} vs {b.bayes_factor:.3g}")
    record_property("detail", "; ".join(notes))
    assert ok


@criterion(8, "hierarchical model: one period reproduces the single model; alternation recovered")
def test_hierarchical_consistency(power_stats, record_property):
    from test_hierarchical import matched_hyper
    from prefattach.hierarchical import fit_hier
    from prefattach.sampler import fit_single
    cfg = HyperConfig(hier_scale="log")
    cc = seed_chain(2000, 1000, 2, 11)
    single = fit_single(power_stats, 0, cfg, cc)
    hier = fit_hier([power_stats], 0, cfg, cc, fixed_hyper=matched_hyper(cfg))
    same = all(np.allclose(hier[b], single[a], rtol=1e-9)
               for a, b in (("alpha", "alpha_s1"), ("delta", "delta_s1"), ("mu", "mu_s1")))
    levels = [PreferenceParams.power(0.8, 1.0), PreferenceParams.power(1.4, 1.0)]
    rhos = []
    for seed in range(3):
        sim = SimConfig(n0=50, T=200, mu_external=10, external=levels, period_length=25, seed=seed)
        stats = summarize(extract_increments(simulate(sim)), "external")
        steps = np.array([(d - sim.start_date).days for d in stats.dates])
        per = (steps - 1) // 25
        periods = [stats.subset(np.flatnonzero(per == s)) for s in range(per.max() + 1)]
        res = fit_hier(periods, 0, chain_cfg=seed_chain(500, 1000, 4, seed))
        est = [np.median(res[f"alpha_s{s + 1}"]) for s in range(len(periods))]
        truth = [sim.params_at("external", 25 * s + 1).alpha for s in range(len(periods))]
        rhos.append(sps.spearmanr(est, truth).statistic)
    record_property("detail", f"S=1 draws identical: {same}; rank correlations "
                              + ", ".join(f"{r:.3f}" for r in rhos))
    assert same and min(rhos) > 0.8


@criterion(9, "half-Cauchy density: unit mass and closed form")
def test_half_cauchy(record_property):
    from prefattach.priors import half_cauchy_logpdf
    worst = 0.0
    for scale in (0.1, 1.0, 2.5, 5.0):
        val, _ = integrate.quad(lambda s: math.exp(half_cauchy_logpdf(s, scale)), 0, np.inf,
                                epsabs=1e-12, epsrel=1e-12, limit=200)
        worst = max(worst, abs(val - 1))
    grid = np.linspace(0.01, 20, 100)
    exact = np.array_equal(half_cauchy_logpdf(grid, 2.5),
                           np.log(2 / (math.pi * 2.5 * (1 + (grid / 2.5) ** 2))))
    record_property("detail", f"max |mass - 1| {worst:.1e}; 100 grid points exact: {exact}")
    assert worst < 1e-6 and exact


@criterion(10, "smoothed-average slope near one under linear attachment")
def test_diagnostic_slope(record_property):
    from prefattach.diagnostics import fit_slope, smoothed_averages
    slopes = []
    for seed in range(5):
        cfg = SimConfig(n0=50, T=500, mu_external=10, external=PreferenceParams.power(1.0), seed=seed)
        panel = extract_increments(simulate(cfg))
        table = smoothed_averages(panel, "external", (panel.T - 99, panel.T))
        slopes.append(fit_slope(table)[0])
    record_property("detail", "slopes " + ", ".join(f"{s:.3f}" for s in slopes))
    assert all(0.8 <= s <= 1.2 for s in slopes)


@criterion(11, "every CLI command is byte-identical on rerun")
def test_cli_determinism(tmp_path, record_property):
    from test_cli import run_all, tree_bytes, write_config
    cfg = write_config(tmp_path, T=120, draws=300)
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    run_all(a, cfg)
    run_all(b, cfg)
    ta, tb = tree_bytes(a), tree_bytes(b)
    same = set(ta) == set(tb) and all(ta[k] == tb[k] for k in ta)
    record_property("detail", f"{len(ta)} output files from 6 runs compared")
    assert same and len(ta) >= 12


DATASET = os.environ.get("PREFATTACH_EVENTS")


@criterion(12, "qualitative pattern on a full dependency event log")
@pytest.mark.skipif(not DATASET, reason="set PREFATTACH_EVENTS to a full Imports event log")
def test_full_dataset(record_property):
    from prefattach.sampler import ChainConfig, fit_single
    log = ingest(DATASET, ["Imports"])
    panel = extract_increments(log)
    bf = {}
    for cat in ("external", "internal", "deletion"):
        stats = summarize(panel, cat)
        bf[cat] = run_selection(stats, 0, chain=(10_000, 1000, 10), delta_fixed=cat == "deletion")
    deletion = fit_single(summarize(panel, "deletion"), 0, delta_fixed=True,
                          chain_cfg=ChainConfig.single_default())
    alpha = float(np.median(deletion["alpha"]))
    record_property("detail", ", ".join(f"{k} {v.describe()}" for k, v in bf.items())
                    + f"; deletion alpha median {alpha:.3f}")
    assert bf["external"].exceeds(10) and bf["internal"].exceeds(10)
    assert bf["deletion"].below(1) and alpha < 1
