"""Acceptance suite: one test per criterion, each recording a pass/fail verdict.

Reference values come from the oracles module (HiGHS and brute-force
enumeration) or from hand-derived costs on tiny deterministic scenarios.
"""

import time

import numpy as np
import pytest

from coopcache.cli import main
from coopcache.heuristics import algcov, gap_sum, gap_symmetric, iad, lower_bound_flb, p_star, psc
from coopcache.indirect import LayeredModel, multi_step
from coopcache.planner import build_full_lp, build_reduced_lp, build_symmetric_lp, evaluate_cost
from coopcache.lp import solve
from coopcache.probmodel import ProbabilityMatrix
from coopcache.setcover import weighted_setcover_bound
from coopcache.sim.experiment import ExperimentConfig, run_experiment
from coopcache.sim.replay import copcash, replay_window, replay_windows
from coopcache.sim.trace import IntervalizedTrace, generate_bernoulli_trace, write_trace_csv

from acceptance_log import verdict
import oracles

P_GRID = [round(0.1 * k, 1) for k in range(11)]


def optimum(lp):
    sol = solve(lp)
    assert sol.is_optimal
    return sol.optimum


def trace_of(n, intervals, seconds=60.0):
    return IntervalizedTrace(seconds, tuple(np.array(p, dtype=np.int64).reshape(-1, 2) for p in intervals), n)


@pytest.fixture(scope="module")
def lp_instances():
    """Criterion 1 instances with their full, reduced and (if uniform) symmetric optima."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    out = []
    for _ in range(200):
        n = int(rng.integers(2, 5))
        pm = ProbabilityMatrix(oracles.random_symmetric(n, rng))
        out.append((pm, optimum(build_full_lp(pm)), optimum(build_reduced_lp(pm)), None))
    for n in range(2, 6):
        for p in P_GRID:
            pm = ProbabilityMatrix.uniform(n, p)
            out.append((pm, optimum(build_full_lp(pm)), optimum(build_reduced_lp(pm)), optimum(build_symmetric_lp(n, p))))
    return out, time.perf_counter() - t0


def test_criterion_01_lp_equivalence(lp_instances):
    instances, elapsed = lp_instances
    worst = max(abs(full - red) for _, full, red, _ in instances)
    worst_sym = max(max(abs(sym - full), abs(sym - red)) for _, full, red, sym in instances if sym is not None)
    ok = worst <= 1e-6 and worst_sym <= 1e-6 and elapsed < 60.0
    verdict(1, ok, f"{len(instances)} instances, max|full-reduced|={worst:.1e}, "
                   f"max symmetric dev={worst_sym:.1e}, {elapsed:.1f}s")


def test_criterion_02_psc_closed_form():
    worst = 0.0
    for n in range(2, 11):
        for p in P_GRID:
            x = psc(ProbabilityMatrix.uniform(n, p)).x.x
            worst = max(worst, float(np.max(np.abs(x - 1.0 / (1.0 + (n - 1) * p)))))
    verdict(2, worst <= 1e-7, f"99 instances, max deviation {worst:.1e}")


def test_criterion_03_bound_soundness(lp_instances):
    instances, _ = lp_instances
    worst_psc = worst_sc = worst_lb = -np.inf
    for pm, full, _, sym in instances:
        worst_psc = max(worst_psc, psc(pm).lower_bound_used - full)
        worst_sc = max(worst_sc, weighted_setcover_bound(pm) - full)
        if sym is not None:
            p = float(pm.offdiagonal()[0])
            worst_lb = max(worst_lb, lower_bound_flb(pm.n, p) - full)
    ok = max(worst_psc, worst_sc, worst_lb) <= 1e-6
    verdict(3, ok, f"max(bound - opt): PSC {worst_psc:.1e}, set cover {worst_sc:.1e}, f_LB {worst_lb:.1e}")


def test_criterion_04_gap_soundness():
    worst_gap = -np.inf
    for n in range(2, 6):
        for p in P_GRID:
            pm = ProbabilityMatrix.uniform(n, p)
            opt = oracles.full_lp_optimum(pm.p)[0]
            realized = evaluate_cost(pm, algcov(pm).x).total - opt
            worst_gap = max(worst_gap, realized - gap_symmetric(n, p).gap)
    grid = np.arange(0.0, 1.0 + 5e-4, 1e-3)
    over_cap, off_cell = [], []
    for n in range(2, 51):
        g = np.array([gap_sum(n, p) for p in grid])
        if g.max() > 0.25 * n:
            over_cap.append(n)
        if abs(p_star(n) - grid[g.argmax()]) > 1e-3:
            off_cell.append(n)
    ok = worst_gap <= 1e-6 and not over_cap and not off_cell
    verdict(4, ok, f"max(realized - G_sym)={worst_gap:.1e}, n over 0.25N: {over_cap}, p* off cell: {off_cell}")


def random_layers(n, T, rng):
    return LayeredModel(tuple(ProbabilityMatrix(oracles.random_symmetric(n, rng)) for _ in range(T)))


def test_criterion_05_multi_step_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    worst_exact = 0.0
    for _ in range(3):
        m = random_layers(3, 2, rng)
        layers = [l.p for l in m.layers]
        for s_in in range(1, 8):
            dist = oracles.layered_distribution(layers, {u for u in range(3) if s_in >> u & 1})
            for s_out in range(8):
                key = frozenset(u for u in range(3) if s_out >> u & 1)
                worst_exact = max(worst_exact, abs(multi_step(m, s_in, s_out, 0, 2) - dist.get(key, 0.0)))
    worst_z = 0.0
    for _ in range(2):
        m = random_layers(5, 3, rng)
        layers = [l.p for l in m.layers]
        for s_in in (0b00001, 0b00110):
            draws = oracles.sample_reverse_reach(layers, {u for u in range(5) if s_in >> u & 1}, 100_000, rng)
            for s_out in range(32):
                if s_in & ~s_out:
                    continue
                q = multi_step(m, s_in, s_out, 0, 3)
                freq = float(np.mean(draws == s_out))
                # binomial standard error of a frequency; the sample std is 0 when a rare set never shows up
                se = np.sqrt(max(q * (1.0 - q), 1.0 / draws.size) / draws.size)
                worst_z = max(worst_z, abs(freq - q) / se)
    elapsed = time.perf_counter() - t0
    ok = worst_exact <= 1e-12 and worst_z <= 4.0 and elapsed < 30.0
    verdict(5, ok, f"exact dev {worst_exact:.1e}, max |z| {worst_z:.2f}, {elapsed:.1f}s")


def test_criterion_06_star():
    n = 4
    pm = ProbabilityMatrix.star(n, hub=0, p_hub=1.0, p_leaf=0.0)
    adj = np.eye(n, dtype=bool)[None].copy()
    adj[0, 0, 1:] = adj[0, 1:, 0] = True
    x_iad = iad(pm).x.x
    iad_cost = replay_window(adj, x_iad, "direct")
    # hub gets 1/4 + 3/2, each leaf 1/2 + 1/4 and downloads the missing 1/4
    expected_iad = 1 / n + (n - 1) / 2 + (n - 1) * 0.25
    alg_cost = replay_window(adj, algcov(pm).x.x, "direct")
    opt = oracles.full_lp_optimum(pm.p)[0]
    ok = abs(iad_cost - expected_iad) <= 1e-12 and iad_cost > alg_cost and abs(alg_cost - opt) <= 1e-6
    verdict(6, ok, f"IAD {iad_cost:.6g} (hand {expected_iad:.6g}), AlgCov {alg_cost:.6g}, optimum {opt:.6g}")


def test_criterion_07_replay_matches_expectation():
    details, ok = [], True
    for p, seed in ((0.1, 71), (0.5, 72)):
        pm = ProbabilityMatrix.uniform(6, p)
        itrace = generate_bernoulli_trace(pm, 10_000, seed=seed)
        windows = itrace.group_adjacency(range(6)).reshape(10_000, 1, 6, 6)
        x = algcov(pm).x
        costs = replay_windows(windows, x.x, "direct")
        se = costs.std(ddof=1) / np.sqrt(costs.size)
        exact = evaluate_cost(pm, x).total
        z = abs(costs.mean() - exact) / se
        ok &= z <= 3.0
        details.append(f"p={p}: mean {costs.mean():.4f} vs {exact:.4f}, z={z:.2f}")
    verdict(7, ok, "; ".join(details))


def report_means(report, strategies, deadlines, mode):
    return {s: [report.get(s, d, mode).mean_cost for d in deadlines] for s in strategies}


@pytest.fixture(scope="module")
def synthetic_reports():
    deadlines = [1800.0, 3600.0, 7200.0]
    sym_trace = generate_bernoulli_trace(ProbabilityMatrix.uniform(10, 0.05), 400, seed=11)
    sym_cfg = ExperimentConfig(
        group_size=6, deadlines=deadlines, group_trials=50, th_sym=0.3, th_max=1.2, th_asym=1.5,
        modes=["direct", "indirect"], group_type="symmetric", seed=7,
    )
    star_p = np.full((13, 13), 0.001)
    star_p[0, :] = star_p[:, 0] = 0.9
    np.fill_diagonal(star_p, 1.0)
    star_trace = generate_bernoulli_trace(ProbabilityMatrix(star_p), 400, seed=12)
    star_cfg = ExperimentConfig(
        group_size=6, deadlines=deadlines, group_trials=50, th_sym=0.3, th_asym=1.5,
        modes=["direct", "indirect"], group_type="asymmetric", seed=7,
    )
    return deadlines, run_experiment(sym_cfg, sym_trace), run_experiment(star_cfg, star_trace), sym_cfg.strategies


def test_criterion_08_qualitative_properties(synthetic_reports):
    deadlines, sym, star, strategies = synthetic_reports
    failures = []
    for name, rep in (("symmetric", sym), ("star", star)):
        for mode in ("direct", "indirect"):
            for s, vals in report_means(rep, strategies, deadlines, mode).items():
                if any(b > a + 1e-12 for a, b in zip(vals, vals[1:])):
                    failures.append(f"{name}/{mode}/{s} increases with deadline")
    direct = report_means(sym, strategies, deadlines, "direct")
    indirect = report_means(sym, strategies, deadlines, "indirect")
    for s in strategies:
        if any(i > d + 1e-12 for i, d in zip(indirect[s], direct[s])):
            failures.append(f"symmetric/{s} indirect above direct")
    for mode in ("direct", "indirect"):
        means = report_means(sym, strategies, deadlines, mode)
        for k in range(len(deadlines)):
            rivals = max(means[s][k] for s in ("optimal", "algcov", "iad"))
            if means["1/N"][k] < rivals - 1e-12:
                failures.append(f"symmetric/{mode} 1/N not worst at {deadlines[k]}")
            if not means["target-set"][k] > means["algcov"][k]:
                failures.append(f"symmetric/{mode} target-set not above algcov at {deadlines[k]}")
        star_means = report_means(star, strategies, deadlines, mode)
        for k in range(len(deadlines)):
            if star_means["target-set"][k] > 1.05 * star_means["optimal"][k]:
                failures.append(f"star/{mode} target-set above 1.05 x optimal at {deadlines[k]}")
    verdict(8, not failures, "; ".join(failures) or f"{len(sym.groups)} symmetric and {len(star.groups)} star groups")


def test_criterion_09_copcash_two_intervals():
    # users 0 and 1 meet; then 0 joins {2, 3} and 1 joins {4, 5}
    it = trace_of(6, [[(0, 1)], [(0, 2), (0, 3), (2, 3), (1, 4), (1, 5), (4, 5)]])
    ind = copcash(it, range(6), 2, "indirect")
    dirc = copcash(it, range(6), 2, "direct")
    ok = abs(ind - 1.0) <= 1e-12 and abs(dirc - 3.0) <= 1e-12
    verdict(9, ok, f"indirect {ind:.6g}, direct {dirc:.6g}")


def test_criterion_10_determinism(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    write_trace_csv(generate_bernoulli_trace(ProbabilityMatrix.uniform(8, 0.1), 120, seed=4).to_encounter_trace(), trace)
    cfg = tmp_path / "cfg.json"
    ExperimentConfig(
        group_size=4, deadlines=[1800.0, 3600.0], group_trials=6, group_type="any",
        modes=["direct", "indirect"], seed=3,
    ).save(cfg)
    outs = []
    for k, jobs in enumerate((1, 1, 2, 3)):
        out = tmp_path / f"r{k}.csv"
        assert main(["experiment", str(cfg), str(trace), "--out", str(out), "--jobs", str(jobs)]) == 0
        outs.append(out.read_bytes())
    capsys.readouterr()
    ok = all(o == outs[0] for o in outs) and len(outs[0]) > 0
    verdict(10, ok, f"4 runs with jobs 1,1,2,3, {len(outs[0])} bytes each")
