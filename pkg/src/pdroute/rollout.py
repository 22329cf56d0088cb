"""One-request-at-a-time rollout with the greedy policy as base policy.

Each arriving request tries every promising control; a control's value is
its stage cost plus the mean cost of running the greedy policy for ``K``
seconds against each sampled scenario of future requests. Requests that
arrive later in the same step are placed by the greedy policy during that
evaluation only.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import DayLog, FleetState, Request, step_order
from .demand import DemandModel, Scenario, interval_counts, SECONDS_PER_HOUR
from .greedy import greedy_step, run_base_policy
from .routesgen import ClusterParams, Control, apply_control, generate_promising_controls


@dataclass(frozen=True)
class RolloutConfig:
    K: int = 3600
    n_scenarios: int = 20
    n_routes: int = 15
    seed: int = 0
    cluster: ClusterParams = ClusterParams()

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.n_scenarios < 1:
            raise ValueError("n_scenarios must be >= 1")
        if self.n_routes < 1:
            raise ValueError("n_routes must be >= 1")


@dataclass
class Decision:
    request: int
    controls: list[Control]
    estimates: list[float]
    chosen: int  # index into controls, -1 when rejected
    greedy_index: int = 0

    @property
    def greedy_estimate(self) -> float:
        return self.estimates[self.greedy_index]

    @property
    def chosen_estimate(self) -> float:
        return self.estimates[self.chosen]


def evaluate_control(state: FleetState, request: Request, control: Control, scenarios: Sequence[Scenario],
                     cfg: RolloutConfig, later: Sequence[Request] = ()) -> float:
    """Stage cost of ``control`` plus the mean K-step greedy cost over ``scenarios``."""
    after = apply_control(state, request, control)
    if not scenarios:
        scenarios = [Scenario()]
    total = 0
    for sc in scenarios:
        future = list(later) + [r for r in sc.requests if r.entry_time > state.now]
        total += run_base_policy(after, cfg.K, future)
    return control.stage_cost + total / len(scenarios)


def rollout_decide(state: FleetState, request: Request, scenarios: Sequence[Scenario], cfg: RolloutConfig,
                   later: Sequence[Request] = ()) -> Decision:
    controls = generate_promising_controls(state, request, cfg.n_routes, cfg.cluster)
    if not controls:
        return Decision(request.id, [], [], -1, -1)
    if len(controls) == 1:
        ests = [float(controls[0].stage_cost)]
    else:
        ests = [evaluate_control(state, request, c, scenarios, cfg, later) for c in controls]
    greedy_index = next(k for k, c in enumerate(controls) if c.kind == "insert"
                        and c.stage_cost == min(x.stage_cost for x in controls if x.kind == "insert"))
    best = int(np.argmin(ests))  # first minimum wins
    return Decision(request.id, controls, ests, best, greedy_index)


def rollout_assign(state: FleetState, request: Request, scenarios: Sequence[Scenario], cfg: RolloutConfig,
                   later: Sequence[Request] = ()) -> Control | None:
    d = rollout_decide(state, request, scenarios, cfg, later)
    return None if d.chosen < 0 else d.controls[d.chosen]


def _place(state: FleetState, request: Request, control: Control | None) -> FleetState:
    if control is None:
        out = state.copy()
        out.enter(request)
        out.reject(request.id)
        return out
    return apply_control(state, request, control)


class GreedyPolicy:
    name = "greedy"

    def start_day(self, day: DayLog, state: FleetState) -> None:
        pass

    def decide(self, state: FleetState, request: Request, later: Sequence[Request] = ()) -> FleetState:
        return greedy_step(state, request)[0]

    def plan_step(self, state: FleetState, arrivals: Sequence[Request]) -> FleetState:
        ordered = step_order(arrivals, state.config.t_start)
        for k, r in enumerate(ordered):
            state = self.decide(state, r, ordered[k + 1:])
        return state


class RolloutPolicy(GreedyPolicy):
    """Rollout planner with hourly scenario refresh.

    ``demand`` produces scenarios for the hour ahead from the arrivals seen in
    the hour just finished. ``oracle_future`` replaces sampling with the true
    future (a single scenario), which is how the dominance checks run.
    """
    name = "rollout"

    def __init__(self, cfg: RolloutConfig, demand: DemandModel | None = None,
                 oracle_future: Sequence[Request] | None = None, record: bool = False):
        if demand is None and oracle_future is None:
            raise ValueError("rollout needs a demand model or the true future")
        self.cfg = cfg
        self.demand = demand
        self.oracle_future = None if oracle_future is None else list(oracle_future)
        self.record = record
        self.decisions: list[Decision] = []
        self._day: DayLog | None = None
        self._hour: int | None = None
        self._scenarios: list[Scenario] = []
        self._seen: list[Request] = []

    def reseed(self, seed: int) -> None:
        self.cfg = replace(self.cfg, seed=seed)

    def start_day(self, day: DayLog, state: FleetState) -> None:
        self._day = day
        self._hour = None
        self._seen = []
        self.decisions = []

    def scenarios(self, state: FleetState) -> list[Scenario]:
        if self.oracle_future is not None:
            return [Scenario([r for r in self.oracle_future if r.entry_time > state.now])]
        hour = state.now // SECONDS_PER_HOUR
        if hour != self._hour:
            self._hour = hour
            start = hour * SECONDS_PER_HOUR
            observed = interval_counts(self._seen, start - SECONDS_PER_HOUR, self.demand.n_intervals)
            day = self._day or DayLog("", 0, 1)
            # one seed per (run seed, hour) keeps scenarios reproducible
            seed = int(np.random.SeedSequence([self.cfg.seed, hour]).generate_state(1)[0])
            self._scenarios = self.demand.scenarios(observed, day, start, seed, state.config.t_last)
        return self._scenarios

    def decide(self, state: FleetState, request: Request, later: Sequence[Request] = ()) -> FleetState:
        self._seen.append(request)
        d = rollout_decide(state, request, self.scenarios(state), self.cfg, later)
        if self.record:
            self.decisions.append(d)
        return _place(state, request, None if d.chosen < 0 else d.controls[d.chosen])


def plan_step(state: FleetState, arrivals: Sequence[Request], policy: GreedyPolicy) -> FleetState:
    """Place this step's arrivals one at a time in canonical order, each decision fixed before the next."""
    return policy.plan_step(state, arrivals)


def timed_plan_step(state: FleetState, arrivals: Sequence[Request], policy: GreedyPolicy,
                    times: list[float] | None = None) -> FleetState:
    ordered = step_order(arrivals, state.config.t_start)
    for k, r in enumerate(ordered):
        t0 = time.perf_counter()
        state = policy.decide(state, r, ordered[k + 1:])
        if times is not None:
            times.append(time.perf_counter() - t0)
    return state
