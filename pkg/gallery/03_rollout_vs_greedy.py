"""
Looking ahead before assigning
==============================

Greedy insertion places each request where it adds the least wait right
now. Rollout also tries a handful of alternatives (other robots, handing
a cluster of waiting requests to another robot) and scores each by
simulating greedy over sampled futures. With the true future as the only
scenario this shows how much lookahead can buy; with sampled scenarios
the gain depends on how predictable demand is.
"""
# %%
from dataclasses import replace

from pdroute.core import ProblemConfig
from pdroute.demand import DemandModel, HistoricalMeanForecaster, build_histograms
from pdroute.fleetsize import restart_and_optimize
from pdroute.network import TravelTimeOracle, grid_graph
from pdroute.rollout import GreedyPolicy, RolloutConfig, RolloutPolicy
from pdroute.simharness import generate_synthetic_history, simulate_day, uniform_spec

graph = grid_graph(6, 6, 60)
oracle = TravelTimeOracle(graph)
config = ProblemConfig(t_start=19 * 3600, t_end=22 * 3600, t_last=21 * 3600, w_pick=400, w_drop=400,
                       capacity=2, depots=(19,))
spec = uniform_spec(graph.n, 20, [19, 20], config.t_start, config.t_last)
train = generate_synthetic_history(spec, 30, seed=1, start_date="2024-03-04")
test = generate_synthetic_history(spec, 10, seed=2, start_date="2024-04-03")

# %%
fleet = restart_and_optimize(train, config, oracle).fleet
print("restart-and-optimize fleet:", fleet)
short = replace(config, fleet_size=fleet - 2)

# %%
cfg = RolloutConfig(K=1800, n_scenarios=10, n_routes=8)
model = DemandModel(HistoricalMeanForecaster().fit(train), build_histograms(train, graph.n), cfg.n_scenarios)
policies = {
    "greedy": lambda day: GreedyPolicy(),
    "rollout": lambda day: RolloutPolicy(cfg, model),
    "rollout, true future": lambda day: RolloutPolicy(replace(cfg, n_scenarios=1), oracle_future=day.requests),
}
for name, make in policies.items():
    ms = [simulate_day(d, make(d), short, oracle, seed=k).metrics for k, d in enumerate(test)]
    waits = sum(m.avg_wait_pick for m in ms) / len(ms)
    print(f"{name:22s} rejected {sum(m.n_rejected for m in ms):3d}   mean wait {waits:6.1f} s")
