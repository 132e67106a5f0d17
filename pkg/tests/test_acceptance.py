"""Acceptance criteria, one test per criterion at the stated tolerances.

Each test records a PASS/FAIL line; the lines are printed in the terminal
summary (see ``conftest.py``) and immediately when run with ``-s``.
"""
import math
import subprocess
import sys

import numpy as np
import pytest

from lcwra.dcp import _p1_feasible, solve_dcp
from lcwra.fitcurve import fit_power_law
from lcwra.model import (Budgets, LearningErrorModel, RadioParams, Scenario, UserLink, theta,
                         theta_gradient)
from lcwra.ranking import RankedGroup, lp_oracle_p3_task, solve_p3_task, solve_ranking
from lcwra.serialization import builtin_path, draw_channel, read_curve_points
from lcwra.sim import load_sweep, reproduce_vehicular, run_sweep

from conftest import NOISE, RADIO, random_p1_scenario

RESULTS: list[str] = []


def record(name: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def fig2a():
    return run_sweep(load_sweep("fig2a"))


@pytest.fixture(scope="module")
def fig2b():
    return run_sweep(load_sweep("fig2b"))


# 1 -------------------------------------------------------------------------
@pytest.mark.parametrize("name,target", [("cnn", (7.3, 0.69)), ("svm", (6.24, 0.72))])
def test_c1_curve_fit(name, target):
    fit = fit_power_law(read_curve_points(builtin_path(f"{name}_points.csv")))
    da = fit.a / target[0] - 1
    db = fit.b / target[1] - 1
    record(f"C1 fit {name}", abs(da) <= 0.05 and abs(db) <= 0.05,
           f"a={fit.a:.4f} ({da:+.1%}) b={fit.b:.4f} ({db:+.1%}), tolerance 5%")


# 2 -------------------------------------------------------------------------
def test_c2_vehicular():
    rep = reproduce_vehicular(1e-9)
    got = rep["lcwra"]["samples"]
    fair = rep["time_fair"]["samples"]
    a, b = got["detect_a"], got["detect_b"]
    ok = abs(a - 137) <= 1 and abs(b - 22) <= 1 and fair == {"detect_a": 80, "detect_b": 80}
    record("C2 vehicular", ok, f"ranking ({a}, {b}), time fairness ({fair['detect_a']}, {fair['detect_b']})")


# 3 -------------------------------------------------------------------------
def test_c3_p3_vs_lp_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 11))
        U = rng.uniform(0.1, 100, n)
        V = rng.uniform(1, 1e4, n)
        order = np.lexsort((np.arange(n), -U))
        group = RankedGroup("m", tuple((f"u{i}", float(U[i]), float(V[i])) for i in order))
        demand = float(rng.uniform(0, 1) * V.sum())
        closed = float(solve_p3_task(group, demand).sum())
        oracle = lp_oracle_p3_task(group, demand)
        worst = max(worst, abs(closed - oracle) / max(oracle, 1e-300))
    record("C3 closed form vs LP", worst <= 1e-9, f"max relative gap {worst:.2e} over 200 instances")


# 4 -------------------------------------------------------------------------
def test_c4_dcp_iterates():
    rng = np.random.default_rng(7)
    infeasible = nonmono = unconverged = 0
    most = 0
    for _ in range(50):
        sc = random_p1_scenario(rng)
        _, trace = solve_dcp(sc, outer_tol=1e-6, max_outer=100)
        infeasible += sum(not _p1_feasible(sc, t, e) for t, e in trace.iterates)
        ob = np.array(trace.objectives)
        nonmono += int(np.any(np.diff(ob) > 1e-9 * ob[:-1]))
        unconverged += int(trace.termination != "converged")
        most = max(most, len(ob) - 1)
    record("C4 DCP iterates", infeasible == 0 and nonmono == 0 and unconverged == 0,
           f"{infeasible} infeasible iterates, {nonmono} non-monotone runs, {unconverged} unconverged, "
           f"max {most} outer iterations")


# 5 -------------------------------------------------------------------------
def _caps_slack(sc, alloc):
    return all(alloc.bits[u.user_id] < u.cap_bits * (1 - 1e-9) for u in sc.users)


def test_c5_dcp_matches_ranking():
    rng = np.random.default_rng(11)
    gaps, tried = [], 0
    while len(gaps) < 20 and tried < 200:
        tried += 1
        sc = random_p1_scenario(rng, eligible=True, cap_range=(1.5, 3.0))
        r, _ = solve_ranking(sc, 1e-12)
        d, _ = solve_dcp(sc)
        if not (_caps_slack(sc, r) and _caps_slack(sc, d)):
            continue
        gaps.append(abs(d.objective - r.objective) / r.objective)
    worst = max(gaps) if gaps else math.inf
    record("C5 DCP vs ranking", len(gaps) == 20 and worst <= 1e-3,
           f"{len(gaps)} slack-cap instances, max relative gap {worst:.2e}")


# 6 -------------------------------------------------------------------------
def _dominance(summary, ours, others):
    worst = math.inf
    for i in range(len(summary.config.values)):
        mine = summary.per_run(i, ours)
        for s in others:
            theirs = summary.per_run(i, s)
            worst = min(worst, float(np.min((theirs - mine) / theirs)))
    return worst


def test_c6_dominance(fig2a, fig2b):
    ma = _dominance(fig2a, "dcp", ("time_fair", "throughput_fair"))
    mb = _dominance(fig2b, "ranking", ("time_fair", "throughput_fair"))
    mid = 1
    cut = 1 - fig2b.mean(mid, "ranking") / fig2b.mean(mid, "time_fair")
    complete = all(c.status == "ok" for s in (fig2a, fig2b) for c in s.cells if c.scheme != "dcp_imperfect")
    ok = complete and ma >= -1e-9 and mb >= -1e-9 and cut >= 0.10
    record("C6 dominance", ok,
           f"min relative margin fig2a {ma:.3g}, fig2b {mb:.3g}; mean cut vs time fairness at "
           f"t_max={fig2b.config.values[mid]:g}: {cut:.1%}")


# 7 -------------------------------------------------------------------------
def _monotone_violations(summary, schemes):
    bad = 0
    for s in schemes:
        runs = np.array([summary.per_run(i, s) for i in range(len(summary.config.values))])
        bad += int(np.sum(np.diff(runs, axis=0) > 1e-9 * runs[:-1]))
    return bad


def test_c7_monotone(fig2a, fig2b):
    bad_a = _monotone_violations(fig2a, ("dcp", "time_fair", "throughput_fair"))
    bad_b = _monotone_violations(fig2b, ("ranking", "time_fair", "throughput_fair"))
    k = run_sweep(load_sweep("k4_vs_k6"))
    k4, k6 = k.per_run(0, "ranking"), k.per_run(1, "ranking")
    bad_k = int(np.sum(k6 > k4 * (1 + 1e-9)))
    record("C7 monotonicity", bad_a == 0 and bad_b == 0 and bad_k == 0 and not np.isnan(k6).any(),
           f"violations: e_max {bad_a}, t_max {bad_b}, K=6 over K=4 {bad_k} of {len(k6)}")


# 8 -------------------------------------------------------------------------
def test_c8_rate_function():
    rng = np.random.default_rng(99)
    radio = RADIO
    link = UserLink("u", 1e-9, 1.0, 1e12)
    worst_fd = 0.0
    for _ in range(100):
        t, e = rng.uniform(0.01, 50), rng.uniform(1e-4, 2)
        gt, ge = theta_gradient(t, e, link, radio)
        ht, he = 1e-5 * t, 1e-5 * e
        ft = (theta(t + ht, e, link, radio) - theta(t - ht, e, link, radio)) / (2 * ht)
        fe = (theta(t, e + he, link, radio) - theta(t, e - he, link, radio)) / (2 * he)
        worst_fd = max(worst_fd, np.hypot(gt - ft, ge - fe) / np.hypot(gt, ge))
    conc = homog = 0
    for _ in range(1000):
        x = rng.uniform([0.01, 0], [50, 2])
        y = rng.uniform([0.01, 0], [50, 2])
        lam = rng.uniform()
        z = lam * x + (1 - lam) * y
        lhs = theta(*z, link, radio)
        rhs = lam * theta(*x, link, radio) + (1 - lam) * theta(*y, link, radio)
        conc += int(lhs < rhs * (1 - 1e-12) - 1e-9)
        s = rng.uniform(0.01, 100)
        homog += int(abs(theta(*(s * x), link, radio) - s * theta(*x, link, radio))
                     > 1e-12 * max(1.0, s * theta(*x, link, radio)))
    g = draw_channel(np.random.default_rng(5), 1e-9, size=1_000_000)
    mean_err = abs(g.mean() / 1e-9 - 1)
    ok = worst_fd <= 1e-6 and conc == 0 and homog == 0 and mean_err <= 0.01
    record("C8 rate function", ok,
           f"gradient max rel err {worst_fd:.1e}; concavity {conc}/1000, homogeneity {homog}/1000 failures; "
           f"channel mean off by {mean_err:.2%}")


# 9 -------------------------------------------------------------------------
def test_c9_reproducible_csv(tmp_path):
    outs = []
    for i in range(2):
        p = tmp_path / f"run{i}.csv"
        subprocess.run([sys.executable, "-m", "lcwra", "sweep", "fig2b", "--seed", "7", "--csv", str(p)],
                       check=True, capture_output=True)
        outs.append(p.read_bytes())
    record("C9 reproducible CSV", outs[0] == outs[1] and len(outs[0]) > 0,
           f"{len(outs[0])} bytes, identical={outs[0] == outs[1]}")
