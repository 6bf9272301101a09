import numpy as np
import pytest

from coopcache import InsufficientGroupsError, TraceError
from coopcache.probmodel import ProbabilityMatrix, expected_degree
import coopcache.sim.experiment as exp
from coopcache.sim.experiment import (
    CostReport,
    ExperimentConfig,
    estimate_layered,
    estimate_probabilities,
    expectation_deviation,
    run_experiment,
    select_groups,
)
from coopcache.sim.trace import IntervalizedTrace, generate_bernoulli_trace


def star_matrix(U, p_hub, p_leaf):
    p = np.full((U, U), p_leaf)
    p[0, :] = p[:, 0] = p_hub
    np.fill_diagonal(p, 1.0)
    return ProbabilityMatrix(p)


# ---- estimation -------------------------------------------------------------


def test_estimate_always_and_never():
    it = IntervalizedTrace(60.0, tuple(np.array([[0, 1]]) for _ in range(6)), 3)
    p = estimate_probabilities(it, [0, 1, 2], 2).p
    assert p[0, 1] == 1.0 and p[1, 0] == 1.0
    assert p[0, 2] == 0.0 and p[1, 2] == 0.0
    assert np.all(np.diag(p) == 1.0)


def test_estimate_generator_roundtrip():
    p_int = 0.2
    it = generate_bernoulli_trace(ProbabilityMatrix.uniform(3, p_int), 20_000, seed=5)
    q = 1 - (1 - p_int) ** 2
    est = estimate_probabilities(it, [0, 1, 2], 2).p[0, 1]
    se = np.sqrt(q * (1 - q) / 10_000)
    assert abs(est - q) <= 3 * se


def test_estimate_empty_window_set():
    it = IntervalizedTrace(60.0, (np.zeros((0, 2)),), 2)
    with pytest.raises(TraceError):
        estimate_probabilities(it, [0, 1], 2)


def test_estimate_layered_per_position():
    contacts = [np.array([[0, 1]]), np.zeros((0, 2))] * 4
    it = IntervalizedTrace(60.0, tuple(contacts), 2)
    m = estimate_layered(it, [0, 1], 2)
    assert m.T == 2 and m.layers[0].p[0, 1] == 1.0 and m.layers[1].p[0, 1] == 0.0


# ---- expectation deviation --------------------------------------------------


def test_ed_symmetric_is_zero():
    assert expectation_deviation(ProbabilityMatrix.uniform(6, 0.37)) == pytest.approx(0.0, abs=1e-12)


def test_ed_star():
    assert expectation_deviation(ProbabilityMatrix.star(4, 0, 1.0, 0.0)) == pytest.approx(2.0)


def test_ed_matches_expected_degrees():
    rng = np.random.default_rng(1)
    pm = ProbabilityMatrix.random(7, rng)
    degs = [expected_degree(pm, i) for i in range(7)]
    assert expectation_deviation(pm) == pytest.approx(max(degs) - min(degs))
    sub = [1, 4, 6]
    sub_pm = ProbabilityMatrix(pm.p[np.ix_(sub, sub)])
    assert expectation_deviation(pm, sub) == pytest.approx(expectation_deviation(sub_pm))
    with pytest.raises(ValueError):
        expectation_deviation(pm, [])


# ---- group selection --------------------------------------------------------


def test_vacuous_thresholds_admit_any_group():
    it = generate_bernoulli_trace(star_matrix(7, 0.9, 0.05), 40, seed=2, interval_seconds=60.0)
    cfg = ExperimentConfig(group_size=3, deadlines=[120.0], interval_seconds=60.0, group_trials=35,
                           th_sym=1e300, th_asym=float("inf"), th_max=0.0)
    groups = select_groups(it, cfg)
    assert len(groups) == 35 and len(set(groups)) == 35


def test_isolated_users_have_no_symmetric_groups():
    it = IntervalizedTrace(60.0, (np.zeros((0, 2)),) * 4, 8)
    cfg = ExperimentConfig(group_size=3, deadlines=[120.0], interval_seconds=60.0, th_max=1.2)
    with pytest.raises(InsufficientGroupsError) as info:
        select_groups(it, cfg)
    assert info.value.found == 0 and "found 0" in str(info.value)


def test_planted_star_is_asymmetric():
    U = 9
    it = generate_bernoulli_trace(star_matrix(U, 0.95, 0.0), 200, seed=3)
    cfg = ExperimentConfig(group_size=4, deadlines=[120.0], interval_seconds=60.0, group_trials=10,
                           group_type="asymmetric", th_asym=2.0)
    groups = select_groups(it, cfg)
    assert all(0 in g for g in groups)
    pm = estimate_probabilities(it, range(U), 2)
    assert all(expectation_deviation(pm, g) >= 2.0 for g in groups)


def test_selection_is_seeded():
    it = generate_bernoulli_trace(ProbabilityMatrix.uniform(9, 0.2), 40, seed=4)
    cfg = ExperimentConfig(group_size=4, deadlines=[120.0], interval_seconds=60.0, group_trials=5,
                           group_type="any", seed=3)
    assert select_groups(it, cfg) == select_groups(it, cfg)
    other = ExperimentConfig(**{**cfg.to_dict(), "seed": 4})
    assert select_groups(it, other) != select_groups(it, cfg)


def test_sampled_selection_path(monkeypatch):
    monkeypatch.setattr(exp, "ENUMERATION_LIMIT", 0)
    it = generate_bernoulli_trace(ProbabilityMatrix.uniform(9, 0.2), 40, seed=4)
    cfg = ExperimentConfig(group_size=4, deadlines=[120.0], interval_seconds=60.0, group_trials=5,
                           group_type="any", seed=3)
    a = select_groups(it, cfg)
    assert a == select_groups(it, cfg) and len(set(a)) == 5 and all(len(g) == 4 for g in a)


def test_universe_smaller_than_group():
    it = IntervalizedTrace(60.0, (np.zeros((0, 2)),) * 2, 3)
    with pytest.raises(InsufficientGroupsError):
        select_groups(it, ExperimentConfig(group_size=4, deadlines=[60.0], interval_seconds=60.0))


# ---- config -----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(th_sym=2.0, th_asym=1.0)
    with pytest.raises(ValueError):
        ExperimentConfig(deadlines=[1000.0], interval_seconds=900.0)
    with pytest.raises(ValueError):
        ExperimentConfig(strategies=["greedy"])
    with pytest.raises(ValueError):
        ExperimentConfig(modes=["broadcast"])
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"nope": 1})


def test_config_json_roundtrip(tmp_path):
    cfg = ExperimentConfig(group_size=4, deadlines=[900, 1800], modes="indirect", seed=9)
    path = tmp_path / "cfg.json"
    cfg.save(path)
    back = ExperimentConfig.load(path)
    assert back == cfg and back.modes == ["indirect"] and back.deadlines == [900.0, 1800.0]


# ---- run_experiment ---------------------------------------------------------


def small_run(jobs=1, seed=0, **kw):
    it = generate_bernoulli_trace(ProbabilityMatrix.uniform(8, 0.1), 48, seed=seed, interval_seconds=60.0)
    cfg = ExperimentConfig(group_size=4, deadlines=[120.0, 240.0], interval_seconds=60.0, group_trials=4,
                           group_type="any", modes=["direct", "indirect"], **kw)
    return cfg, run_experiment(cfg, it, jobs=jobs)


def test_full_download_is_exactly_n():
    cfg, rep = small_run()
    for d in cfg.deadlines:
        for m in cfg.modes:
            row = rep.get("full-download", d, m)
            assert row.mean_cost == 4.0 and row.stderr == 0.0


def test_report_shape_and_ranges():
    cfg, rep = small_run()
    assert len(rep.rows) == len(cfg.modes) * len(cfg.strategies) * len(cfg.deadlines)
    for r in rep.rows:
        assert 0.0 <= r.mean_cost <= 4.0 + 1e-12
        assert r.trials == 4 * (48 // int(r.deadline_sec / 60.0))


def test_report_deterministic_and_job_independent():
    _, a = small_run(jobs=1)
    _, b = small_run(jobs=1)
    _, c = small_run(jobs=2)
    assert a.to_csv_string() == b.to_csv_string() == c.to_csv_string()


def test_report_csv_roundtrip(tmp_path):
    _, rep = small_run()
    path = tmp_path / "r.csv"
    rep.write_csv(path)
    assert path.read_text().splitlines()[0] == "strategy,deadline_sec,mode,mean_cost,stderr,trials"
    back = CostReport.read_csv(path)
    assert back.rows == rep.rows


def test_interval_mismatch_rejected():
    it = generate_bernoulli_trace(ProbabilityMatrix.uniform(5, 0.1), 10, seed=0, interval_seconds=30.0)
    with pytest.raises(ValueError):
        run_experiment(ExperimentConfig(group_size=3, deadlines=[120.0], interval_seconds=60.0), it)


def test_deadline_longer_than_trace():
    it = generate_bernoulli_trace(ProbabilityMatrix.uniform(5, 0.3), 2, seed=0, interval_seconds=60.0)
    cfg = ExperimentConfig(group_size=3, deadlines=[60.0, 240.0], interval_seconds=60.0, group_trials=2,
                           group_type="any")
    with pytest.raises(TraceError):
        run_experiment(cfg, it)
