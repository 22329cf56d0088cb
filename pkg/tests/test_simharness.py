import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdroute.core import DayLog, InputError, Request, save_requests
from pdroute.demand import build_histograms
from pdroute.network import TravelTimeOracle, grid_graph, save_graph
from pdroute.rollout import GreedyPolicy, RolloutConfig
from pdroute.simharness import (CSV_COLUMNS, ExperimentConfig, SyntheticSpec, arrivals_by_step,
                                generate_synthetic_history, rejection_table, run_experiment, simulate_day,
                                uniform_spec)

from conftest import counter_example_setup, random_graph


def test_empty_day():
    _, oracle, cfg, _ = counter_example_setup()
    res = simulate_day(DayLog("2024-05-08", 2, 5, []), GreedyPolicy(), cfg, oracle, check=True)
    m = res.metrics
    assert (m.n_requests, m.n_rejected, m.total_cost, m.terminal_cost, m.stage_cost_sum) == (0, 0, 0, 0, 0)
    assert m.pct_rejected == 0.0


@pytest.mark.parametrize("fleet, rejected, cost", [(1, {3}, 360), (2, {3}, 0), (3, set(), 180)])
def test_counter_example_days(fleet, rejected, cost):
    _, oracle, cfg, day = counter_example_setup(fleet)
    m = simulate_day(day, GreedyPolicy(), cfg, oracle, check=True).metrics
    assert {r.id for r in m.records if r.rejected} == rejected
    assert m.total_cost == cost
    assert m.terminal_cost == (math.inf if rejected else cost)
    assert m.pct_rejected == pytest.approx(100 * len(rejected) / 3)


def test_scheduled_requests_grouped_at_start():
    _, oracle, cfg, _ = counter_example_setup()
    cfg = replace(cfg, t_start=100)
    day = DayLog("d", 0, 1, [Request(1, 1, 2, 10, 500), Request(2, 1, 2, 50, 600), Request(3, 1, 2, 150, 700)])
    assert [(t, [r.id for r in g]) for t, g in arrivals_by_step(day, cfg)] == [(100, [1, 2]), (150, [3])]


def _random_day(rng, n, k, t_end):
    reqs = []
    for i in range(k):
        e = int(rng.integers(0, t_end // 3))
        p, d = rng.choice(np.arange(1, n + 1), size=2, replace=False)
        reqs.append(Request(i + 1, int(p), int(d), e, e + int(rng.integers(1, 600))))
    reqs.sort(key=lambda r: (r.entry_time, r.id))
    return DayLog("2024-05-07", 1, 5, reqs)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_jump_and_check_modes_agree(seed):
    rng = np.random.default_rng(seed)
    oracle = TravelTimeOracle(random_graph(rng, int(rng.integers(4, 9))))
    _, _, cfg, _ = counter_example_setup()
    cfg = replace(cfg, t_end=3000, t_last=1000, depots=(1,), fleet_size=int(rng.integers(1, 3)),
                  w_pick=oracle.diameter(), w_drop=oracle.diameter(), capacity=int(rng.integers(1, 3)))
    day = _random_day(rng, oracle.graph.n, int(rng.integers(0, 8)), cfg.t_end)
    fast = simulate_day(day, GreedyPolicy(), cfg, oracle)
    slow = simulate_day(day, GreedyPolicy(), cfg, oracle, check=True)
    assert fast.state.routes == slow.state.routes and fast.state.rejected == slow.state.rejected
    if not slow.state.rejected:
        assert slow.metrics.stage_cost_sum == slow.metrics.terminal_cost == fast.metrics.total_cost
    else:
        assert slow.metrics.stage_cost_sum == math.inf


def test_synthetic_spec_validation():
    with pytest.raises(InputError):
        SyntheticSpec((1.0,), (1.0,), {0: 1}, 0, 100)
    with pytest.raises(InputError):
        SyntheticSpec((1.0, 0), (1.0, 0), {0: 1}, 0, 100)
    with pytest.raises(InputError):
        SyntheticSpec((1.0, 1), (1.0, 1), {0: -1}, 0, 100)
    with pytest.raises(InputError):
        generate_synthetic_history(uniform_spec(3, 1, [0], 0, 100), -1, 0)


def test_synthetic_history_matches_spec():
    pw = (5.0, 3.0, 1.0, 1.0)
    spec = SyntheticSpec(pw, (1.0, 1.0, 1.0, 1.0), {20: 200.0}, 0, 24 * 3600)
    days = generate_synthetic_history(spec, 30, seed=4, start_date="2024-05-01")
    reqs = [r for d in days for r in d.requests]
    assert abs(len(reqs) / 30 - 200) < 10
    freq = np.bincount([r.pickup - 1 for r in reqs], minlength=4) / len(reqs)
    assert np.abs(freq - np.array(pw) / sum(pw)).sum() < 0.02
    assert all(r.pickup != r.dropoff and 60 <= r.desired_pickup_time - r.entry_time <= 900 for r in reqs)
    assert len({r.id for r in reqs}) == len(reqs)
    h = build_histograms(days, 4)
    assert h.pickup_distribution(5, days[0].weekday, 20).sum() == pytest.approx(1.0)
    again = generate_synthetic_history(spec, 30, seed=4, start_date="2024-05-01")
    assert [d.requests for d in again] == [d.requests for d in days]


def test_synthetic_window_is_respected():
    spec = uniform_spec(5, 30, [19, 20, 21], t_start=19 * 3600 + 1800, t_last=21 * 3600)
    for d in generate_synthetic_history(spec, 5, seed=0):
        for r in d.requests:
            assert r.entry_time >= spec.t_start and r.desired_pickup_time <= spec.t_last


def test_rejection_table_decreases():
    _, oracle, cfg, day = counter_example_setup()
    assert rejection_table([day], [1, 2, 3], GreedyPolicy, cfg, oracle) == {1: 1, 2: 1, 3: 0}


def _experiment_files(tmp_path):
    graph = grid_graph(4, 4, 60)
    save_graph(graph, tmp_path / "g.txt")
    spec = uniform_spec(16, 8, [0, 1], 0, 7200)
    days = generate_synthetic_history(spec, 5, seed=2)
    paths = []
    for d in days:
        p = tmp_path / f"day_{d.date}.txt"
        save_requests(d, p)
        paths.append(str(p))
    return str(tmp_path / "g.txt"), paths


def test_experiment_outputs_are_reproducible(tmp_path):
    g, paths = _experiment_files(tmp_path)
    _, _, cfg, _ = counter_example_setup()
    cfg = replace(cfg, t_start=0, t_end=9000, t_last=7200, depots=(6,), w_pick=400, w_drop=400)
    outs = []
    for k in range(2):
        ec = ExperimentConfig(g, paths[3:], cfg, train_days=paths[:3], policies=("greedy", "rollout"),
                              fleet_sizes=(1, 2), rollout=RolloutConfig(K=600, n_scenarios=2, n_routes=3),
                              seed=7, out_dir=str(tmp_path / f"run{k}"))
        res = run_experiment(ec)
        outs.append((open(res["days"]).read(), open(res["summary"]).read()))
    assert outs[0] == outs[1]
    rows = list(csv.reader(outs[0][0].splitlines()))
    assert rows[0] == CSV_COLUMNS and len(rows) == 1 + 2 * 2 * 2
    assert all(r[-1] == "NA" for r in rows[1:])
    assert outs[0][1].count("summary policy=") == 4


def test_failed_day_is_recorded(tmp_path):
    g, paths = _experiment_files(tmp_path)
    _, _, cfg, _ = counter_example_setup()
    cfg = replace(cfg, t_start=0, t_end=9000, t_last=7200, depots=(6,), w_pick=400, w_drop=400)
    ec = ExperimentConfig(g, paths[:2], cfg, out_dir=str(tmp_path / "out"))

    def flaky(fn, jobs):
        for k, job in enumerate(jobs):
            yield (None, "SimulationError: boom") if k == 0 else fn(job)

    res = run_experiment(ec, map_fn=flaky)
    summary = open(res["summary"]).read()
    assert "failed date=" in summary and "boom" in summary
    assert len(open(res["days"]).read().splitlines()) == 2


def test_experiment_config_validation(tmp_path):
    _, _, cfg, _ = counter_example_setup()
    with pytest.raises(InputError):
        ExperimentConfig(str(tmp_path / "missing.txt"), [], cfg)
    g, paths = _experiment_files(tmp_path)
    with pytest.raises(InputError):
        ExperimentConfig(g, paths, cfg, policies=("mcts",))
