"""
Sampling the next hour of demand
================================

A forecaster turns past days into request counts per five-minute
interval; conditional histograms place each request. Every scenario is
one plausible next hour, and the rollout planner averages over them.
"""
# %%
from collections import Counter

from pdroute.core import DayLog
from pdroute.demand import DemandContext, DemandModel, HistoricalMeanForecaster, build_histograms, interval_counts
from pdroute.simharness import SyntheticSpec, generate_synthetic_history

# 16 nodes; node 1 and node 16 are busy pickup spots.
weights = [8.0] + [1.0] * 14 + [8.0]
spec = SyntheticSpec(tuple(weights), (1.0,) * 16, {19: 24.0, 20: 12.0}, t_start=19 * 3600, t_last=21 * 3600)
history = generate_synthetic_history(spec, 28, seed=0, start_date="2024-03-04")
print("days:", len(history), "requests:", sum(len(d.requests) for d in history))

# %%
forecaster = HistoricalMeanForecaster().fit(history)
hist = build_histograms(history, 16)
monday = history[0]
ctx = DemandContext(monday.month, monday.weekday, 19)
print("forecast for 19:00 on", monday.date, forecaster.forecast([0] * 12, ctx).counts)
print("observed that day      ", tuple(interval_counts(monday.requests, 19 * 3600)))

# %%
# Counts are looked up by month, weekday and hour, so ask for a Monday in March.
model = DemandModel(forecaster, hist, n_scenarios=5)
scenarios = model.scenarios([0] * 12, DayLog("2024-03-25", 0, 3), 19 * 3600, seed=3)
for k, sc in enumerate(scenarios):
    top = Counter(r.pickup for r in sc.requests).most_common(2)
    print(f"scenario {k}: {len(sc)} requests, busiest pickups {top}")
