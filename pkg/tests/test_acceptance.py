"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The campaign-scale checks are marked ``slow``; select them away with
``pytest -m "not slow"``. All campaigns run single-threaded with fixed seeds,
so every number printed here is reproducible bit for bit.
"""

import functools
import itertools
import math
import time

import numpy as np
import pytest

from conftest import record
from sda_bandits.analysis import (
    BalanceQuery,
    BlockDraw,
    balance_function,
    diversity_cdf_exact,
    diversity_pmf_exact,
    exponential_balance_closed_form,
    max_disjoint_blocks,
)
from sda_bandits.arms import BanditInstance
from sda_bandits.bench import ExperimentConfig, preset, run_bayesian_experiment, run_experiment
from sda_bandits.sda import SdaConfig, SdaPolicy, run_policy

from test_analysis import brute_force_disjoint, enumerate_distinct_law

DENSE = (100, 1000, 10000, 11000, 12000, 13000, 14000, 15000, 16000, 17000, 18000, 19000,
         20000)
RB_FE = {"name": "RB-SDA", "forced_exploration": True}


@functools.lru_cache(maxsize=None)
def campaign(name, algorithms, runs=1000, checkpoints=None):
    """Run (once per session) a preset campaign; returns (summary, seconds)."""
    kw = dict(algorithms=[dict(a) if isinstance(a, tuple) else a for a in algorithms],
              runs=runs)
    if checkpoints is not None:
        kw["checkpoints"] = list(checkpoints)
    cfg = preset(name, **kw)
    start = time.perf_counter()
    run = run_bayesian_experiment if cfg.prior is not None else run_experiment
    res = run(cfg, threads=1)
    return res.summary, time.perf_counter() - start


def _fe(spec):
    return tuple(sorted(spec.items()))


def check_means(criterion, name, targets, checkpoints=None, runs=1000, budget=None):
    summary, secs = campaign(name, tuple(targets), runs, checkpoints)
    parts, ok = [], True
    for label, (target, tol) in targets.items():
        got = summary[label].final_mean
        good = abs(got - target) <= tol
        ok &= good
        parts.append(f"{label} {got:.2f} (target {target} +- {tol})")
    detail = f"{name}: " + ", ".join(parts) + f"; {secs:.0f}s"
    if budget is not None:
        ok &= secs < budget
        detail += f" (budget {budget}s)"
    record(criterion, ok, detail)
    assert ok, detail


# ------------------------------------------------------------------ 1-3: tables

@pytest.mark.slow
@pytest.mark.parametrize("name,targets,checkpoints", [
    ("bernoulli-1", {"RB-SDA": (11.5, 2.0), "TS": (11.2, 2.0)}, None),
    ("bernoulli-2", {"RB-SDA": (22.0, 3.5)}, None),
    ("bernoulli-3", {"RB-SDA": (89.0, 4.0), "TS": (94.2, 4.0)}, DENSE),
    ("bernoulli-4", {"RB-SDA": (105.1, 8.0)}, None),
])
def test_c1_bernoulli_table(name, targets, checkpoints):
    check_means("C1 Bernoulli", name, targets, checkpoints, budget=300)


@pytest.mark.slow
@pytest.mark.parametrize("name,targets", [
    ("gaussian-1", {"RB-SDA": (25.6, 4.0)}),
    ("gaussian-2", {"RB-SDA": (71.0, 12.0)}),
    ("gaussian-3", {"LDS-SDA": (48.6, 8.0)}),
])
def test_c2_gaussian_table(name, targets):
    check_means("C2 Gaussian", name, targets)


@pytest.mark.slow
def test_c3_truncated_gaussian_xp1():
    algs = ("RB-SDA", "WR-SDA", "LB-SDA", "LDS-SDA", "SSMC")
    summary, secs = campaign("tg-1", algs)
    finals = {a: summary[a].final_mean for a in algs}
    ok = all(v <= 2.5 for v in finals.values())
    detail = "tg-1: " + ", ".join(f"{a} {v:.2f}" for a, v in finals.items()) + \
        f" (each <= 2.5); {secs:.0f}s"
    record("C3 truncated Gaussian", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_c3_truncated_gaussian_xp4():
    check_means("C3 truncated Gaussian", "tg-4",
                {"RB-SDA": (64.9, 8.0), "NP-TS": (70.0, 8.0)})


# ------------------------------------------------------------------ 4: slope

def _rb_xp3():
    summary, _ = campaign("bernoulli-3", ("RB-SDA", "TS"), 1000, DENSE)
    return summary["RB-SDA"]


@pytest.mark.slow
def test_c4_asymptotic_slope():
    s = _rb_xp3()
    sel = s.checkpoints >= 10000
    slope = np.polyfit(np.log(s.checkpoints[sel]), s.mean[sel], 1)[0]
    C = s.lower_bound_constant
    ok = abs(slope - C) <= 0.5 * C
    detail = f"bernoulli-3 RB-SDA slope vs ln t on [1e4, 2e4] = {slope:.2f}, " \
        f"Lai-Robbins constant {C:.3f} (allowed {0.5 * C:.2f}..{1.5 * C:.2f})"
    record("C4 slope", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_c4_curve_above_lower_bound():
    # The asymptotic bound C ln t is not a finite-time bound: on this instance it
    # exceeds the measured regret of every algorithm at T = 20000. Kept as a
    # genuine check; see the project's decision log.
    s = _rb_xp3()
    lb = s.lower_bound_constant * np.log(s.checkpoints)
    below = [(int(t), round(float(m), 1), round(float(b), 1))
             for t, m, b in zip(s.checkpoints, s.mean, lb) if m < b]
    ok = not below
    detail = "RB-SDA above C ln t at every checkpoint" if ok else \
        f"RB-SDA below C ln t at {len(below)}/{len(lb)} checkpoints, e.g. (t, regret, bound) " \
        f"{below[-1]}"
    record("C4 above lower bound", ok, detail)
    assert ok, detail


# ------------------------------------------------------------------ 5: Bayesian

@pytest.mark.slow
def test_c5_bayesian_gaussian():
    summary, secs = campaign("bayes-gaussian", ("RB-SDA", "TS"), 200)
    rb, ts = summary["RB-SDA"].final_mean, summary["TS"].final_mean
    ok = rb <= 1.05 * ts
    detail = f"RB-SDA {rb:.1f} <= 1.05 x TS {ts:.1f}; {secs:.0f}s"
    record("C5 Bayesian Gaussian", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_c5_bayesian_bernoulli():
    phe = _fe({"name": "PHE", "a": 1.1})
    summary, secs = campaign("bayes-bernoulli", ("RB-SDA", "TS", phe), 200)
    rb, ts = summary["RB-SDA"].final_mean, summary["TS"].final_mean
    ph = summary["PHE(a=1.1)"].final_mean
    ok = ts <= 1.05 * rb and rb <= 1.05 * ph
    detail = f"TS {ts:.1f} <= 1.05 x RB-SDA {rb:.1f} <= 1.05 x PHE {ph:.1f}; {secs:.0f}s"
    record("C5 Bayesian Bernoulli", ok, detail)
    assert ok, detail


# ------------------------------------------------------------------ 6: exponential

@pytest.mark.slow
def test_c6_forced_exploration_matches_ssmc():
    summary, secs = campaign("exponential-5", (_fe(RB_FE), "SSMC"), 500)
    rb, ss = summary["RB-SDA+FE"].final_mean, summary["SSMC"].final_mean
    ok = abs(rb - ss) <= 0.2 * ss
    detail = f"exponential-5: RB-SDA+FE {rb:.1f} vs SSMC {ss:.1f} (within 20%); {secs:.0f}s"
    record("C6 forced exploration", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_c6_heavy_tail_without_forced_exploration():
    summary, secs = campaign("exponential-3", ("RB-SDA",), 500)
    s = summary["RB-SDA"]
    q99, q50 = s.quantile(99)[-1], s.quantile(50)[-1]
    ok = q99 >= 3 * q50
    detail = f"exponential-3 RB-SDA: q99 {q99:.1f} >= 3 x median {q50:.1f}; {secs:.0f}s"
    record("C6 heavy tail", ok, detail)
    assert ok, detail


# ------------------------------------------------------------------ 7: balance

def test_c7_balance_oracles():
    rng = np.random.default_rng(20201206)
    closed = exponential_balance_closed_form(2, 1, 10)
    ok_closed = closed == 1 / 21
    worst, n = 0.0, 100_000
    for mu1, muk, M in itertools.product((0.5, 0.7, 0.9), (0.1, 0.3, 0.45), (1, 3, 8)):
        exact = balance_function(BalanceQuery("bernoulli", mu1, muk, M, 2)).value
        mc = balance_function(BalanceQuery("bernoulli", mu1, muk, M, 2, mode="montecarlo",
                                           mc_samples=n), rng)
        # standard error of the estimator under the exact law (the sample one is
        # zero when no loss is observed)
        se = max(mc.stderr, math.sqrt(exact * (1 - exact) / n), 1e-300)
        worst = max(worst, abs(exact - mc.value) / se)
    ok_mc = worst <= 4
    ok_mono = True
    for mu1, muk in [(0.5, 0.0), (1.0, 0.5), (0.2, 0.1)]:
        grid = np.array([[balance_function(BalanceQuery("gaussian", mu1, muk, M, j)).value
                          for j in range(1, 6)] for M in range(0, 11)])
        ok_mono &= bool(np.all(np.diff(grid, axis=0) <= 1e-12)
                        and np.all(np.diff(grid[1:], axis=1) <= 1e-12))
    ok = ok_closed and ok_mc and ok_mono
    detail = f"closed form (2,1,10) = {closed!r} == 1/21: {ok_closed}; Bernoulli exact vs " \
        f"MC worst |z| = {worst:.2f} over 27 points (<= 4); Gaussian monotone in M, j: {ok_mono}"
    record("C7 balance oracles", ok, detail)
    assert ok, detail


# ------------------------------------------------------------------ 8: diversity

def test_c8_diversity_oracles():
    ok_enum = all(diversity_pmf_exact(m, H, exact=True) == enumerate_distinct_law(m, H)
                  for m in range(1, 7) for H in range(1, 7))
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(500):
        H = int(rng.integers(1, 41))
        j = int(rng.integers(1, H + 1))
        starts = rng.integers(0, H - j + 1, size=int(rng.integers(1, 13))).tolist()
        mismatches += max_disjoint_blocks(BlockDraw(starts, j, H)) != \
            brute_force_disjoint(starts, j)
    probs = {H: diversity_cdf_exact(H, H, H / 3) for H in (30, 60, 120)}
    ratio = probs[30] / probs[120]
    ok = ok_enum and mismatches == 0 and ratio >= 10
    detail = f"enumeration H, m <= 6: {ok_enum}; disjoint-block mismatches {mismatches}/500; " \
        f"P(X_HH1 <= H/3) = " + ", ".join(f"{p:.3g} (H={H})" for H, p in probs.items()) + \
        f", decay 30->120 x{ratio:.3g} (>= 10)"
    record("C8 diversity oracles", ok, detail)
    assert ok, detail


# ------------------------------------------------------------------ 9: engine invariants

FUZZ_FAMILIES = {
    "bernoulli": ([0.3, 0.5, 0.45], 1.0),
    "gaussian": ([0.0, 0.5, 0.2], 1.0),
    "poisson": ([1.0, 2.0, 1.5], 1.0),
    "exponential": ([1.0, 2.0, 1.5], 1.0),
    "truncated_gaussian": ([0.3, 0.6, 0.5], 0.5),
}
FUZZ_VARIANTS = [SdaConfig("RB"), SdaConfig("WR", forced_exploration=True), SdaConfig("LB"),
                 SdaConfig("LDS", forced_exploration=True), SdaConfig("SSMC")]


def test_c9_engine_invariants():
    T, seeds = 2000, range(50)
    failures = []
    for (family, (means, sigma)), cfg in itertools.product(FUZZ_FAMILIES.items(), FUZZ_VARIANTS):
        inst = BanditInstance.from_means(family, means, sigma)
        for seed in seeds:
            a = run_policy(SdaPolicy(cfg), inst, T, [T], np.random.default_rng(seed))
            b = run_policy(SdaPolicy(cfg), inst, T, [T], np.random.default_rng(seed))
            where = (family, cfg.label, seed)
            if a.counts.sum() != T:
                failures.append(("sum counts", where))
            if a.diagnostics["min_leader_slack"] < 0:
                failures.append(("leader bound", where))
            if a.diagnostics["min_pull_set"] < 1:
                failures.append(("empty pull set", where))
            if not (np.array_equal(a.regrets, b.regrets) and np.array_equal(a.counts, b.counts)):
                failures.append(("determinism", where))
        spec = {"name": f"{cfg.sampler.name}-SDA" if cfg.sampler.name != "SSMC" else "SSMC",
                "forced_exploration": cfg.forced_exploration}
        exp = ExperimentConfig.from_dict(dict(family=family, means=means, sigma=sigma,
                                              horizon=T, runs=len(seeds), algorithms=[spec],
                                              checkpoints=[100, T], base_seed=9))
        if run_experiment(exp, threads=1).summary != run_experiment(exp, threads=4).summary:
            failures.append(("thread invariance", (family, cfg.label)))
    ok = not failures
    detail = f"5 families x 5 sampler/flag variants x 50 seeds at T={T}: " + \
        ("all invariants hold" if ok else f"{len(failures)} violations, first {failures[0]}")
    record("C9 engine invariants", ok, detail)
    assert ok, detail
