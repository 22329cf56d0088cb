"""Day simulator, service metrics, synthetic workloads and experiment sweeps."""
from __future__ import annotations

import csv
import datetime as dt
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import groupby
from typing import Callable, Sequence

import numpy as np

from .core import (DayLog, FleetState, InputError, ProblemConfig, Request, SimulationError, StopKind, advance_to,
                   immediate_cost, load_requests, stage_cost, validate_route)
from .network import StreetGraph, TravelTimeOracle, load_graph
from .rollout import GreedyPolicy, RolloutConfig, RolloutPolicy, timed_plan_step

CSV_COLUMNS = ["date", "policy", "fleet", "avg_wait_pick", "avg_trip", "pct_rejected", "total_cost", "mean_plan_time"]


@dataclass(frozen=True)
class RequestRecord:
    id: int
    robot: int
    wait_pick: int | None
    trip: int | None
    rejected: bool


@dataclass
class DayMetrics:
    date: str
    n_requests: int
    n_rejected: int
    avg_wait_pick: float
    avg_trip_length: float
    pct_rejected: float
    total_cost: int  # waits summed over serviced requests
    terminal_cost: float  # h at the end of the day: infinite once anything was rejected
    records: list[RequestRecord] = field(default_factory=list)
    plan_times: list[float] = field(default_factory=list)
    stage_cost_sum: float | None = None  # only tracked when stepping second by second

    @property
    def mean_plan_time(self) -> float:
        return float(np.mean(self.plan_times)) if self.plan_times else 0.0


@dataclass
class SimResult:
    metrics: DayMetrics
    state: FleetState


def arrivals_by_step(day: DayLog, config: ProblemConfig) -> list[tuple[int, list[Request]]]:
    """Arrival groups keyed by decision time; scheduled requests are all handled at ``t_start``."""
    timed = sorted(((max(r.entry_time, config.t_start), r) for r in day.requests), key=lambda x: x[0])
    out = []
    for t, grp in groupby(timed, key=lambda x: x[0]):
        if t >= config.t_end:
            break
        out.append((t, [r for _, r in grp]))
    return out


def check_invariants(before: FleetState, after: FleetState) -> list[str]:
    """Rules that must hold after one planning step turns ``before`` into ``after`` (same clock)."""
    problems = []
    cfg = after.config
    ref = after.copy()
    ref.routes = list(before.routes) + after.routes[len(before.routes):]
    seen: dict[int, int] = {}
    for m, route in enumerate(after.routes):
        if m < len(before.routes) and route is before.routes[m]:
            pass
        else:
            v = validate_route(route, ref)
            if v is not None:
                problems.append(f"robot {m}: {v}")
        if route.load > cfg.capacity:
            problems.append(f"robot {m}: load {route.load} over capacity")
        for rid in route.index:
            if rid in seen:
                problems.append(f"request {rid} on robots {seen[rid]} and {m}")
            seen[rid] = m
            if after.assignment.get(rid) != m:
                problems.append(f"request {rid} on robot {m} but assigned to {after.assignment.get(rid)}")
    for rid, m in after.assignment.items():
        if seen.get(rid) != m:
            problems.append(f"request {rid} assigned to {m} but missing from its route")
    if after.rejected & set(after.assignment):
        problems.append(f"requests both rejected and assigned: {sorted(after.rejected & set(after.assignment))}")
    for m, route in enumerate(before.routes):
        for s in route.stops[:route.done]:
            if s.kind == StopKind.PICKUP and s.request in route.index and route.index[s.request][1] >= route.done:
                if after.assignment.get(s.request) != m:
                    problems.append(f"request {s.request} moved off robot {m} after pickup")
    return problems


def _final_checks(state: FleetState) -> list[str]:
    problems = []
    for m, route in enumerate(state.routes):
        if route.done != len(route.stops) - 1:
            problems.append(f"robot {m}: {len(route.stops) - 1 - route.done} stops left at end of day")
        if route.stops[-1].time > state.config.t_end:
            problems.append(f"robot {m}: back at depot at {route.stops[-1].time}")
    missing = set(state.requests) - set(state.assignment) - state.rejected
    if missing:
        problems.append(f"requests never decided: {sorted(missing)}")
    return problems


def day_metrics(day: DayLog, state: FleetState, plan_times: list[float], stage_sum: float | None = None) -> DayMetrics:
    records = []
    waits, trips = [], []
    for r in sorted(day.requests, key=lambda r: r.id):
        if r.id in state.rejected:
            records.append(RequestRecord(r.id, -1, None, None, True))
            continue
        full = state.request(r.id)
        w = full.planned_pickup_time - r.desired_pickup_time
        trip = full.planned_dropoff_time - full.planned_pickup_time
        waits.append(w)
        trips.append(trip)
        records.append(RequestRecord(r.id, full.assigned_robot, w, trip, False))
    n = len(day.requests)
    n_rej = len(state.rejected)
    return DayMetrics(
        date=day.date, n_requests=n, n_rejected=n_rej,
        avg_wait_pick=float(np.mean(waits)) if waits else 0.0,
        avg_trip_length=float(np.mean(trips)) if trips else 0.0,
        pct_rejected=100.0 * n_rej / n if n else 0.0,
        total_cost=state.serviced_cost(), terminal_cost=immediate_cost(state),
        records=records, plan_times=plan_times, stage_cost_sum=stage_sum)


def simulate_day(day: DayLog, policy: GreedyPolicy, config: ProblemConfig, oracle: TravelTimeOracle,
                 seed: int | None = None, check: bool = False) -> SimResult:
    """Replay one day under ``policy``.

    Normally the clock jumps from one arrival time to the next, which gives
    the same trajectory as stepping every second because nothing but
    arrivals changes a plan. With ``check`` the day is stepped second by
    second, every invariant is asserted after each step and the stage costs
    are summed.
    """
    if seed is not None and hasattr(policy, "reseed"):
        policy.reseed(seed)
    state = FleetState.initial(config, oracle)
    policy.start_day(day, state)
    times: list[float] = []
    steps = arrivals_by_step(day, config)
    if not check:
        for t, group in steps:
            state = advance_to(state, t)
            state = timed_plan_step(state, group, policy, times)
        state = advance_to(state, config.t_end)
        return SimResult(day_metrics(day, state, times), state)

    pending = dict(steps)
    stage_sum = 0
    for t in range(config.t_start, config.t_end):
        before = state
        if t in pending:
            state = timed_plan_step(state, pending[t], policy, times)
            problems = check_invariants(before, state)
            if problems:
                raise SimulationError(f"t={t}: " + "; ".join(problems))
        nxt = advance_to(state, t + 1)
        stage_sum += stage_cost(before, nxt)
        state = nxt
    problems = _final_checks(state)
    if problems:
        raise SimulationError("end of day: " + "; ".join(problems))
    return SimResult(day_metrics(day, state, times, stage_sum), state)


# ---------------------------------------------------------------- synthetic workloads

@dataclass(frozen=True)
class SyntheticSpec:
    """Node-weighted pickup/dropoff distributions and a Poisson arrival rate per hour of the day."""
    pickup_weights: tuple[float, ...]
    dropoff_weights: tuple[float, ...]
    hourly_rates: dict[int, float]
    t_start: int
    t_last: int
    lead_min: int = 60
    lead_max: int = 900

    def __post_init__(self):
        pw, dw = np.asarray(self.pickup_weights, float), np.asarray(self.dropoff_weights, float)
        if len(pw) != len(dw) or len(pw) < 2:
            raise InputError("pickup and dropoff weights must cover the same (>= 2) nodes")
        if (pw < 0).any() or (dw < 0).any() or pw.sum() <= 0 or dw.sum() <= 0:
            raise InputError("weights must be non-negative with positive total")
        if np.count_nonzero(dw) < 2 and np.count_nonzero(pw) == 1 and np.flatnonzero(pw)[0] == np.flatnonzero(dw)[0]:
            raise InputError("pickup and dropoff weights leave no distinct node pair")
        if any(r < 0 for r in self.hourly_rates.values()):
            raise InputError("arrival rates must be non-negative")
        if not 1 <= self.lead_min <= self.lead_max:
            raise InputError("need 1 <= lead_min <= lead_max")

    @property
    def n_nodes(self) -> int:
        return len(self.pickup_weights)


def uniform_spec(n_nodes: int, rate: float, hours: Sequence[int], t_start: int, t_last: int,
                 lead_min: int = 60, lead_max: int = 900) -> SyntheticSpec:
    return SyntheticSpec((1.0,) * n_nodes, (1.0,) * n_nodes, {h: rate for h in hours}, t_start, t_last,
                         lead_min, lead_max)


def generate_synthetic_history(spec: SyntheticSpec, n_days: int, seed: int, start_date: str = "2024-01-01",
                               first_id: int = 1) -> list[DayLog]:
    """``n_days`` i.i.d. days drawn from ``spec``; requests that would ask for a pickup outside
    ``[t_start, t_last]`` are discarded."""
    if n_days < 0:
        raise InputError("n_days must be >= 0")
    rng = np.random.default_rng(seed)
    pw = np.asarray(spec.pickup_weights, float)
    pw = pw / pw.sum()
    dw = np.asarray(spec.dropoff_weights, float)
    n = spec.n_nodes
    d0 = dt.date.fromisoformat(start_date)
    days = []
    next_id = first_id
    for i in range(n_days):
        date = d0 + dt.timedelta(days=i)
        reqs = []
        for h in sorted(spec.hourly_rates):
            k = int(rng.poisson(spec.hourly_rates[h]))
            if k == 0:
                continue
            entries = rng.integers(h * 3600, (h + 1) * 3600, size=k)
            leads = rng.integers(spec.lead_min, spec.lead_max + 1, size=k)
            picks = rng.choice(n, size=k, p=pw)
            for e, lead, p in zip(entries.tolist(), leads.tolist(), picks.tolist()):
                q = dw.copy()
                q[p] = 0.0
                if q.sum() <= 0:
                    q = np.ones(n)
                    q[p] = 0.0
                d = int(rng.choice(n, p=q / q.sum()))
                if e < spec.t_start or e + lead > spec.t_last:
                    continue
                reqs.append((e, e + lead, p + 1, d + 1))
        reqs.sort()
        day = DayLog(date.isoformat(), date.weekday(), date.month)
        for e, desired, p, d in reqs:
            day.requests.append(Request(next_id, p, d, e, desired))
            next_id += 1
        days.append(day)
    return days


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentConfig:
    graph: str
    test_days: list[str]
    problem: ProblemConfig
    train_days: list[str] = field(default_factory=list)
    policies: tuple[str, ...] = ("greedy",)
    fleet_sizes: tuple[int, ...] = (3,)
    rollout: RolloutConfig = RolloutConfig()
    forecaster: str = "historical-mean"  # "bootstrap", or a precomputed-forecast file path
    n_intervals: int = 12
    lead: int = 60
    seed: int = 0
    jobs: int = 1
    timing: bool = False  # wall-clock planning time makes the CSV non-reproducible
    out_dir: str = "."

    def __post_init__(self):
        for p in [self.graph, *self.test_days, *self.train_days]:
            if not os.path.exists(p):
                raise InputError(f"no such file: {p}")
        for p in self.policies:
            if p not in ("greedy", "rollout"):
                raise InputError(f"unknown policy {p!r}")


def build_demand(kind: str, history: Sequence[DayLog], n_nodes: int, rollout: RolloutConfig, seed: int,
                 n_intervals: int = 12, lead: int = 60):
    from .demand import (BootstrapForecaster, DemandModel, HistoricalMeanForecaster, PrecomputedForecaster,
                         build_histograms)
    if not history:
        raise InputError("rollout needs training days for its demand model")
    hist = build_histograms(history, n_nodes)
    if kind == "historical-mean":
        fc = HistoricalMeanForecaster(n_intervals).fit(history)
    elif kind == "bootstrap":
        fc = BootstrapForecaster(n_intervals, seed=seed).fit(history)
    elif os.path.exists(kind):
        fc = PrecomputedForecaster.load(kind, n_intervals)
    else:
        raise InputError(f"unknown forecaster {kind!r}")
    return DemandModel(fc, hist, rollout.n_scenarios, lead)


def make_policy(name: str, rollout: RolloutConfig | None = None, demand=None) -> GreedyPolicy:
    if name == "greedy":
        return GreedyPolicy()
    if name == "rollout":
        return RolloutPolicy(rollout or RolloutConfig(), demand)
    raise InputError(f"unknown policy {name!r}")


def day_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


_ORACLES: dict[int, TravelTimeOracle] = {}


def _oracle_for(graph: StreetGraph) -> TravelTimeOracle:
    o = _ORACLES.get(id(graph))
    if o is None or o.graph is not graph:
        o = _ORACLES[id(graph)] = TravelTimeOracle(graph)
    return o


def _run_one(args):
    graph, day, policy_name, fleet, problem, rollout, demand, seed = args
    oracle = _oracle_for(graph)
    cfg = replace(problem, fleet_size=fleet)
    policy = make_policy(policy_name, replace(rollout, seed=seed), demand)
    try:
        return simulate_day(day, policy, cfg, oracle).metrics, None
    except Exception as exc:  # a failed day is recorded, the sweep goes on
        return None, f"{type(exc).__name__}: {exc}"


def format_row(day: DayLog, policy: str, fleet: int, m: DayMetrics, timing: bool) -> list[str]:
    return [day.date, policy, str(fleet), f"{m.avg_wait_pick:.3f}", f"{m.avg_trip_length:.3f}",
            f"{m.pct_rejected:.3f}", str(m.total_cost), f"{m.mean_plan_time:.6f}" if timing else "NA"]


def run_experiment(cfg: ExperimentConfig, map_fn: Callable | None = None) -> dict[str, str]:
    """Sweep fleet sizes x policies x test days; writes ``days.csv`` and ``summary.txt`` into ``out_dir``."""
    graph = load_graph(cfg.graph)
    t_last = cfg.problem.t_last
    test = [load_requests(p, t_last) for p in cfg.test_days]
    train = [load_requests(p, t_last) for p in cfg.train_days]
    demand = None
    if "rollout" in cfg.policies:
        demand = build_demand(cfg.forecaster, train, graph.n, cfg.rollout, cfg.seed, cfg.n_intervals, cfg.lead)
    jobs = []
    for fleet in cfg.fleet_sizes:
        for policy in cfg.policies:
            for k, day in enumerate(test):
                jobs.append((graph, day, policy, fleet, cfg.problem, cfg.rollout, demand, day_seed(cfg.seed, k)))
    if map_fn is None:
        if cfg.jobs > 1:
            with ProcessPoolExecutor(cfg.jobs) as ex:
                results = list(ex.map(_run_one, jobs))
        else:
            results = [_run_one(j) for j in jobs]
    else:
        results = list(map_fn(_run_one, jobs))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    agg: dict[tuple[str, int], list[DayMetrics]] = {}
    failures = []
    for (_, day, policy, fleet, *_), (m, err) in zip(jobs, results):
        if m is None:
            failures.append(f"failed date={day.date} policy={policy} fleet={fleet} error={err}")
            continue
        w.writerow(format_row(day, policy, fleet, m, cfg.timing))
        agg.setdefault((policy, fleet), []).append(m)
    lines = []
    for (policy, fleet), ms in agg.items():
        n_req = sum(m.n_requests for m in ms)
        n_rej = sum(m.n_rejected for m in ms)
        served = [r.wait_pick for m in ms for r in m.records if not r.rejected]
        trips = [r.trip for m in ms for r in m.records if not r.rejected]
        lines.append(f"summary policy={policy} fleet={fleet} days={len(ms)} requests={n_req} rejected={n_rej} "
                     f"pct_rejected={100.0 * n_rej / n_req if n_req else 0.0:.3f} "
                     f"avg_wait_pick={np.mean(served) if served else 0.0:.3f} "
                     f"avg_trip={np.mean(trips) if trips else 0.0:.3f}")
    lines += failures
    os.makedirs(cfg.out_dir, exist_ok=True)
    paths = {"days": os.path.join(cfg.out_dir, "days.csv"), "summary": os.path.join(cfg.out_dir, "summary.txt")}
    with open(paths["days"], "w") as fh:
        fh.write(buf.getvalue())
    with open(paths["summary"], "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return paths


def rejection_table(days: Sequence[DayLog], fleet_sizes: Sequence[int], policy_factory: Callable[[], GreedyPolicy],
                    config: ProblemConfig, oracle: TravelTimeOracle) -> dict[int, int]:
    """Total rejections per fleet size over ``days``."""
    out = {}
    for m in fleet_sizes:
        cfg = replace(config, fleet_size=m)
        out[m] = sum(simulate_day(d, policy_factory(), cfg, oracle).metrics.n_rejected for d in days)
    return out
