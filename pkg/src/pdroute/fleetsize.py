"""Offline fleet sizing from historical days.

``single_pass`` grows the fleet the moment a request cannot be placed and
keeps going; ``restart_and_optimize`` replays each day from scratch with a
fixed fleet until nothing is rejected. Only the second one guarantees that
the greedy policy serves every request of the history.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .core import DayLog, FleetState, InputError, ProblemConfig, advance_to, step_order
from .greedy import greedy_assign, greedy_step
from .network import TravelTimeOracle
from .rollout import GreedyPolicy
from .simharness import arrivals_by_step, simulate_day

DEFAULT_M_MAX = 100


class ConfigurationError(InputError):
    """The depots cannot reach a pickup within the wait limit."""


class FleetSizeExceeded(RuntimeError):
    def __init__(self, date: str, m_max: int):
        super().__init__(f"day {date or '<undated>'} still rejects requests with {m_max} robots (exceeds M_max)")
        self.date = date
        self.m_max = m_max


@dataclass
class FleetSizingReport:
    algorithm: str
    sizes: dict[str, int]
    traces: dict[str, list[tuple[int, int]]] = field(default_factory=dict)  # (request id, robot)
    m_max: int | None = None

    @property
    def fleet(self) -> int:
        return max(self.sizes.values(), default=1)

    def format(self) -> str:
        lines = [f"day {date} size {m}" for date, m in self.sizes.items()]
        lines.append(f"fleet {self.fleet}")
        return "\n".join(lines) + "\n"


def _key(day: DayLog, k: int) -> str:
    return day.date or f"day{k}"


def nearest_depot(config: ProblemConfig, oracle: TravelTimeOracle, node: int) -> int:
    return min(config.depots, key=lambda b: (oracle.time(b, node), b))


def single_pass_day(day: DayLog, config: ProblemConfig, oracle: TravelTimeOracle) -> tuple[int, list[tuple[int, int]]]:
    state = FleetState.initial(replace(config, fleet_size=1), oracle)
    trace = []
    for t, group in arrivals_by_step(day, config):
        state = advance_to(state, t)
        for req in step_order(group, config.t_start):
            nxt = greedy_assign(state, req)
            if nxt is None:
                state = state.copy()
                state.add_robot(nearest_depot(config, oracle, req.pickup))
                nxt = greedy_assign(state, req)
                if nxt is None:
                    raise ConfigurationError(
                        f"request {req.id} cannot be served even by a fresh robot at the nearest depot; "
                        f"some node is farther than the pickup wait limit from every depot")
            state = nxt
            trace.append((req.id, state.assignment[req.id]))
    return state.fleet_size, trace


def single_pass(history: Sequence[DayLog], config: ProblemConfig, oracle: TravelTimeOracle) -> FleetSizingReport:
    if not history:
        raise InputError("empty history")
    rep = FleetSizingReport("single-pass", {})
    for k, day in enumerate(history):
        size, trace = single_pass_day(day, config, oracle)
        rep.sizes[_key(day, k)] = size
        rep.traces[_key(day, k)] = trace
    return rep


def replay_rejects(day: DayLog, config: ProblemConfig, oracle: TravelTimeOracle, size: int) -> bool:
    """Whether the greedy policy with ``size`` robots rejects anything on ``day`` (stops at the first one)."""
    state = FleetState.initial(replace(config, fleet_size=size), oracle)
    for t, group in arrivals_by_step(day, config):
        state = advance_to(state, t)
        for req in step_order(group, config.t_start):
            state, served = greedy_step(state, req)
            if not served:
                return True
    return False


def restart_and_optimize(history: Sequence[DayLog], config: ProblemConfig, oracle: TravelTimeOracle,
                         m_max: int = DEFAULT_M_MAX) -> FleetSizingReport:
    if not history:
        raise InputError("empty history")
    if m_max < 1:
        raise InputError("M_max must be >= 1")
    rep = FleetSizingReport("restart-and-optimize", {}, m_max=m_max)
    for k, day in enumerate(history):
        for size in range(1, m_max + 1):
            if not replay_rejects(day, config, oracle, size):
                rep.sizes[_key(day, k)] = size
                break
        else:
            raise FleetSizeExceeded(day.date, m_max)
    return rep


@dataclass
class StabilityReport:
    fleet: int
    rejected: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.rejected.values())

    @property
    def stable(self) -> bool:
        return self.total == 0


def verify_stability(fleet: int, days: Sequence[DayLog], policy_factory: Callable[[], GreedyPolicy],
                     config: ProblemConfig, oracle: TravelTimeOracle) -> StabilityReport:
    cfg = replace(config, fleet_size=fleet)
    out = {}
    for k, day in enumerate(days):
        out[_key(day, k)] = simulate_day(day, policy_factory(), cfg, oracle).metrics.n_rejected
    return StabilityReport(fleet, out)
