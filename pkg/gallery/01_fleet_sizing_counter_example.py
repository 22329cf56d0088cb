"""
Why growing the fleet on the fly undersizes it
==============================================

Three requests on a 5x5 grid (60 s per block, depot in the middle, 300 s
wait limits). Sizing the fleet by adding a robot whenever a request does
not fit says two robots are enough. Replaying the same day with two
robots from the start rejects the last request, because the second robot
now takes r2 and nobody is near r3 in time.
"""
# %%
from dataclasses import replace

from pdroute.core import DayLog, ProblemConfig, Request
from pdroute.fleetsize import restart_and_optimize, single_pass
from pdroute.network import TravelTimeOracle, grid_graph
from pdroute.rollout import GreedyPolicy
from pdroute.simharness import simulate_day

graph = grid_graph(5, 5, 60)
oracle = TravelTimeOracle(graph)
config = ProblemConfig(t_start=0, t_end=6000, t_last=3000, w_pick=300, w_drop=300, depots=(13,))
day = DayLog("2024-05-07", 1, 5, [
    Request(1, 4, 18, 60, 300),
    Request(2, 24, 16, 120, 300),
    Request(3, 25, 10, 180, 240),
])

# %%
# Single pass: r1 and r2 share robot 0, r3 forces a second robot.
sp = single_pass([day], config, oracle)
print(sp.format(), end="")
print("assignments while sizing:", sp.traces[day.date])

# %%
# Replay with two robots: greedy now gives r2 to the idle robot.
two = simulate_day(day, GreedyPolicy(), replace(config, fleet_size=2), oracle)
print("rejected with 2 robots:", sorted(two.state.rejected))
for m, route in enumerate(two.state.routes):
    print(f"robot {m}:", [(s.node, s.kind.name.lower(), s.request, s.time) for s in route.stops])

# %%
# Restart-and-optimize replays the day from scratch at each size.
ro = restart_and_optimize([day], config, oracle)
three = simulate_day(day, GreedyPolicy(), replace(config, fleet_size=ro.fleet), oracle)
print(f"restart-and-optimize: {ro.fleet} robots, rejected {sorted(three.state.rejected)}, "
      f"total wait {three.metrics.total_cost} s")
