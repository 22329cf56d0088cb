"""Requests, routes, fleet state and the wait-time cost structure.

Times are integer seconds. A route is stored as its stop sequence: the
executed prefix ``stops[:done]`` is frozen, the remainder is the plan. Between
stops the robot follows the shortest path, leaving as soon as it can and
waiting at a pickup node when it arrives before the desired pickup time.

The cost of an assigned request is its pickup wait plus its in-vehicle
detour, which collapses to ``dropoff_time - desired_pickup - direct_time``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from os import PathLike
from typing import Iterable, NamedTuple, Sequence

from .network import TravelTimeOracle

UNASSIGNED = -1
INFINITE = math.inf


class InputError(ValueError):
    """Malformed request log or configuration."""


class SimulationError(RuntimeError):
    """Internal state inconsistency; always a bug."""


class StopKind(enum.IntEnum):
    DEPOT_START = 0
    PICKUP = 1
    DROPOFF = 2
    DEPOT_END = 3


class Stop(NamedTuple):
    node: int
    time: int
    kind: StopKind
    request: int = UNASSIGNED


@dataclass(frozen=True)
class Request:
    id: int
    pickup: int
    dropoff: int
    entry_time: int
    desired_pickup_time: int
    assigned_robot: int = UNASSIGNED
    planned_pickup_time: int | None = None
    planned_dropoff_time: int | None = None
    picked_up: bool = False
    dropped_off: bool = False

    def __post_init__(self):
        if self.entry_time >= self.desired_pickup_time:
            raise InputError(f"request {self.id}: entry time {self.entry_time} must precede "
                             f"desired pickup {self.desired_pickup_time}")
        if self.pickup == self.dropoff:
            raise InputError(f"request {self.id}: pickup and dropoff are both node {self.pickup}")
        if self.dropped_off and not self.picked_up:
            raise InputError(f"request {self.id}: dropped off before pickup")


@dataclass(frozen=True)
class ProblemConfig:
    t_start: int
    t_end: int
    t_last: int
    w_pick: int = 900
    w_drop: int = 900
    capacity: int = 16
    depots: tuple[int, ...] = (1,)
    fleet_size: int = 3

    def __post_init__(self):
        object.__setattr__(self, "depots", tuple(self.depots))
        if not self.t_start < self.t_last < self.t_end:
            raise InputError(f"need t_start < t_last < t_end, got {self.t_start}, {self.t_last}, {self.t_end}")
        if self.w_pick <= 0 or self.w_drop <= 0:
            raise InputError("wait limits must be positive")
        if self.capacity < 1:
            raise InputError("capacity must be >= 1")
        if not self.depots:
            raise InputError("at least one depot is required")
        if self.fleet_size < 0:
            raise InputError("fleet size must be >= 0")

    def depot_of(self, robot: int) -> int:
        return self.depots[robot % len(self.depots)]

    def buffer_ok(self, oracle: TravelTimeOracle) -> bool:
        """End-of-day buffer covers three graph diameters."""
        return self.t_end - self.t_last >= 3 * oracle.diameter()

    def depots_cover(self, oracle: TravelTimeOracle) -> bool:
        """Every node is reachable from some depot within the pickup wait limit."""
        n = oracle.graph.n
        return all(min(oracle.time(b, i) for b in self.depots) <= self.w_pick for i in range(1, n + 1))


@dataclass(frozen=True)
class Route:
    robot: int
    depot: int
    stops: tuple[Stop, ...]
    done: int
    # the pending leg towards stops[done] leaves `origin` at time `depart`
    origin: int
    depart: int
    cost: int = 0

    @cached_property
    def index(self) -> dict[int, tuple[int, int]]:
        """request id -> (pickup stop index, dropoff stop index)."""
        picks: dict[int, int] = {}
        out: dict[int, tuple[int, int]] = {}
        for k, s in enumerate(self.stops):
            if s.kind == StopKind.PICKUP:
                picks[s.request] = k
            elif s.kind == StopKind.DROPOFF:
                out[s.request] = (picks.get(s.request, -1), k)
        return out

    @property
    def pending(self) -> tuple[Stop, ...]:
        """Unexecuted pickup/dropoff stops (depot end excluded)."""
        return self.stops[self.done:-1]

    @property
    def load(self) -> int:
        load = 0
        for s in self.stops[:self.done]:
            if s.kind == StopKind.PICKUP:
                load += 1
            elif s.kind == StopKind.DROPOFF:
                load -= 1
        return load

    def requests(self) -> set[int]:
        return set(self.index)

    def onboard(self) -> dict[int, int]:
        """Picked-up, not yet dropped requests -> executed pickup time."""
        out = {}
        for s in self.stops[:self.done]:
            if s.kind == StopKind.PICKUP:
                out[s.request] = s.time
            elif s.kind == StopKind.DROPOFF:
                out.pop(s.request, None)
        return out

    def anchor(self, now: int, oracle: TravelTimeOracle) -> tuple[int, int, int]:
        """Where the robot can re-plan from at ``now``.

        Returns ``(node, depart, last_node)``: the node the next leg starts
        from, the earliest departure time from it, and the last node the robot
        has physically reached. A robot mid-edge is committed to that edge.
        """
        target = self.stops[self.done].node
        node, t = self.origin, self.depart
        if t >= now:
            return node, t, node
        while node != target:
            nxt = oracle.next_hop(node, target)
            t_next = t + oracle.time(node, nxt)
            if t_next > now:
                return nxt, t_next, node
            node, t = nxt, t_next
            if t == now:
                break
        return node, now, node


def idle_route(robot: int, depot: int, t_start: int) -> Route:
    return Route(robot, depot,
                 (Stop(depot, t_start, StopKind.DEPOT_START), Stop(depot, t_start, StopKind.DEPOT_END)),
                 done=1, origin=depot, depart=t_start, cost=0)


def request_cost(req: Request, pick_time: int, drop_time: int, oracle: TravelTimeOracle) -> int:
    return drop_time - req.desired_pickup_time - oracle.time(req.pickup, req.dropoff)


def sequence_cost(prefix: Sequence[Stop], pending: Sequence[tuple[int, StopKind, int]], anchor: int, depart: int,
                  depot: int, requests: dict[int, Request], oracle: TravelTimeOracle, config: ProblemConfig,
                  ) -> tuple[int, list[int], int] | None:
    """Time a pending stop sequence and check every constraint on the way.

    ``pending`` holds ``(node, kind, request id)`` triples. Returns
    ``(route cost, stop times, depot return time)`` or ``None`` when a
    capacity, wait-limit or end-of-day constraint breaks.
    """
    load = 0
    picks: dict[int, int] = {}
    cost = 0
    for s in prefix:
        if s.kind == StopKind.PICKUP:
            load += 1
            picks[s.request] = s.time
        elif s.kind == StopKind.DROPOFF:
            load -= 1
            cost += request_cost(requests[s.request], picks[s.request], s.time, oracle)
    w_pick, w_drop, cap = config.w_pick, config.w_drop, config.capacity
    t, node = depart, anchor
    times = []
    for n, kind, rid in pending:
        t += oracle.row(node)[n]
        node = n
        req = requests[rid]
        if kind == StopKind.PICKUP:
            if t < req.desired_pickup_time:
                t = req.desired_pickup_time
            elif t - req.desired_pickup_time > w_pick:
                return None
            load += 1
            if load > cap:
                return None
            picks[rid] = t
        else:
            direct = oracle.row(req.pickup)[req.dropoff]
            if t - picks[rid] - direct > w_drop:
                return None
            load -= 1
            cost += t - req.desired_pickup_time - direct
        times.append(t)
    t_back = t + oracle.row(node)[depot]
    if t_back > config.t_end:
        return None
    return cost, times, t_back


def build_route(base: Route, pending: Sequence[tuple[int, StopKind, int]], now: int, requests: dict[int, Request],
                oracle: TravelTimeOracle, config: ProblemConfig, check: bool = True) -> Route | None:
    """Re-plan ``base`` with a new pending stop order, keeping the executed prefix.

    With ``check`` the result is ``None`` when any constraint breaks;
    otherwise timing is produced regardless of violations.
    """
    anchor, depart, _ = base.anchor(now, oracle)
    prefix = base.stops[:base.done]
    if check:
        res = sequence_cost(prefix, pending, anchor, depart, base.depot, requests, oracle, config)
        if res is None:
            return None
        cost, times, t_back = res
    else:
        cost, times, t_back = _time_unchecked(prefix, pending, anchor, depart, base.depot, requests, oracle)
    stops = prefix + tuple(Stop(n, t, k, r) for (n, k, r), t in zip(pending, times)) \
        + (Stop(base.depot, t_back, StopKind.DEPOT_END),)
    return Route(base.robot, base.depot, stops, base.done, anchor, depart, cost)


def _time_unchecked(prefix, pending, anchor, depart, depot, requests, oracle):
    picks = {}
    cost = 0
    for s in prefix:
        if s.kind == StopKind.PICKUP:
            picks[s.request] = s.time
        elif s.kind == StopKind.DROPOFF:
            cost += request_cost(requests[s.request], picks[s.request], s.time, oracle)
    t, node = depart, anchor
    times = []
    for n, kind, rid in pending:
        t += oracle.time(node, n)
        node = n
        req = requests[rid]
        if kind == StopKind.PICKUP:
            t = max(t, req.desired_pickup_time)
            picks[rid] = t
        else:
            cost += request_cost(req, picks.get(rid, t), t, oracle)
        times.append(t)
    return cost, times, t + oracle.time(node, depot)


class FleetState:
    """Snapshot of the fleet at time ``now`` (before this step's arrivals are placed).

    Routes and request records are immutable, so ``copy`` is shallow and
    cheap; every policy works on copies.
    """

    def __init__(self, config: ProblemConfig, oracle: TravelTimeOracle, routes: list[Route] | None = None,
                 now: int | None = None, requests: dict[int, Request] | None = None,
                 assignment: dict[int, int] | None = None, rejected: set[int] | None = None):
        self.config = config
        self.oracle = oracle
        self.now = config.t_start if now is None else now
        if routes is None:
            routes = [idle_route(m, config.depot_of(m), config.t_start) for m in range(config.fleet_size)]
        self.routes = routes
        self.requests = {} if requests is None else requests
        self.assignment = {} if assignment is None else assignment
        self.rejected = set() if rejected is None else rejected

    @classmethod
    def initial(cls, config: ProblemConfig, oracle: TravelTimeOracle, fleet_size: int | None = None) -> "FleetState":
        if fleet_size is not None:
            config = replace(config, fleet_size=fleet_size)
        return cls(config, oracle)

    def copy(self) -> "FleetState":
        return FleetState(self.config, self.oracle, list(self.routes), self.now, dict(self.requests),
                          dict(self.assignment), set(self.rejected))

    @property
    def fleet_size(self) -> int:
        return len(self.routes)

    @property
    def robot_locations(self) -> list[int]:
        return [r.anchor(self.now, self.oracle)[2] for r in self.routes]

    @property
    def robot_loads(self) -> list[int]:
        return [r.load for r in self.routes]

    @property
    def assignments(self) -> list[set[int]]:
        out = [set() for _ in self.routes]
        for rid, m in self.assignment.items():
            out[m].add(rid)
        return out

    def add_robot(self, depot: int) -> int:
        m = len(self.routes)
        self.routes.append(idle_route(m, depot, self.config.t_start))
        return m

    def enter(self, request: Request) -> None:
        self.requests[request.id] = request

    def commit(self, route: Route, request_ids: Iterable[int] = ()) -> None:
        """Install ``route`` for its robot and assign ``request_ids`` to it."""
        self.routes[route.robot] = route
        for rid in request_ids:
            self.assignment[rid] = route.robot

    def reject(self, request_id: int) -> None:
        self.rejected.add(request_id)

    def request(self, request_id: int) -> Request:
        """Full request record with assignment, planned times and service flags."""
        base = self.requests[request_id]
        m = self.assignment.get(request_id)
        if m is None:
            return base
        route = self.routes[m]
        ip, idrop = route.index[request_id]
        return replace(base, assigned_robot=m,
                       planned_pickup_time=route.stops[ip].time if ip >= 0 else None,
                       planned_dropoff_time=route.stops[idrop].time,
                       picked_up=0 <= ip < route.done, dropped_off=idrop < route.done)

    def serviced_cost(self) -> int:
        """Sum of waits over assigned requests; rejected ones are accounted separately."""
        return sum(r.cost for r in self.routes)


def wait_times(state: FleetState, request_id: int) -> tuple[float, float]:
    if request_id not in state.requests:
        raise KeyError(f"unknown request {request_id}")
    if request_id in state.rejected:
        return INFINITE, INFINITE
    req = state.request(request_id)
    if req.assigned_robot == UNASSIGNED:
        raise ValueError(f"request {request_id} is neither assigned nor rejected")
    w_pick = req.planned_pickup_time - req.desired_pickup_time
    w_drop = req.planned_dropoff_time - (req.planned_pickup_time + state.oracle.time(req.pickup, req.dropoff))
    return w_pick, w_drop


def immediate_cost(state: FleetState) -> float:
    if state.rejected:
        return INFINITE
    return state.serviced_cost()


def stage_cost(prev: FleetState, nxt: FleetState) -> float:
    if nxt.now != prev.now + 1:
        raise ValueError(f"stage cost needs consecutive states, got t={prev.now} and t={nxt.now}")
    if nxt.rejected - prev.rejected:
        return INFINITE
    if prev.now == prev.config.t_start:
        return nxt.serviced_cost()
    return nxt.serviced_cost() - prev.serviced_cost()


@dataclass(frozen=True)
class Violation:
    kind: str
    stop_index: int
    message: str

    def __str__(self):
        return f"{self.kind} at stop {self.stop_index}: {self.message}"


def validate_route(route: Route, state: FleetState, config: ProblemConfig | None = None) -> Violation | None:
    """Check a route against the structural, capacity and wait-time rules.

    Returns ``None`` for a valid route, otherwise the first violation found.
    """
    config = config or state.config
    oracle = state.oracle
    stops = route.stops
    if len(stops) < 2:
        return Violation("structure", 0, "route needs depot start and end")
    first, last = stops[0], stops[-1]
    if first != Stop(route.depot, config.t_start, StopKind.DEPOT_START):
        return Violation("structure", 0, f"route must start at depot {route.depot} at {config.t_start}")
    if last.kind != StopKind.DEPOT_END or last.node != route.depot:
        return Violation("structure", len(stops) - 1, "route must end at its depot")
    if last.time > config.t_end:
        return Violation("depot-return", len(stops) - 1, f"returns at {last.time} after end {config.t_end}")
    for k, s in enumerate(stops[1:-1], 1):
        if s.kind not in (StopKind.PICKUP, StopKind.DROPOFF):
            return Violation("structure", k, f"unexpected {s.kind.name} stop")
    if not 1 <= route.done <= len(stops) - 1:
        return Violation("structure", route.done, "executed prefix length out of range")

    if route.robot < len(state.routes):
        current = state.routes[route.robot]
        if route.stops[:current.done] != current.stops[:current.done] or route.done < current.done:
            return Violation("prefix", current.done, "already traversed part of the route was modified")

    for k in range(1, len(stops)):
        a, b = stops[k - 1], stops[k]
        need = oracle.time(a.node, b.node)
        if k == route.done:
            if b.time < route.depart + oracle.time(route.origin, b.node):
                return Violation("timing", k, "next stop unreachable from the robot's position in time")
        elif b.time - a.time < need:
            return Violation("timing", k, f"{b.time - a.time}s between stops, need {need}s")

    load = 0
    picked: dict[int, int] = {}
    dropped: set[int] = set()
    for k, s in enumerate(stops):
        if s.kind == StopKind.PICKUP:
            if s.request in picked:
                return Violation("structure", k, f"request {s.request} picked up twice")
            req = state.requests[s.request]
            if s.node != req.pickup:
                return Violation("structure", k, f"request {s.request} picked up at wrong node")
            if s.time < req.desired_pickup_time:
                return Violation("time-window", k, f"request {s.request} picked up before desired time")
            if s.time - req.desired_pickup_time > config.w_pick:
                return Violation("pickup-wait", k,
                                 f"request {s.request} waits {s.time - req.desired_pickup_time}s > {config.w_pick}s")
            picked[s.request] = s.time
            load += 1
            if load > config.capacity:
                return Violation("capacity", k, f"load {load} exceeds capacity {config.capacity}")
        elif s.kind == StopKind.DROPOFF:
            if s.request not in picked or s.request in dropped:
                return Violation("precedence", k, f"request {s.request} dropped before pickup")
            req = state.requests[s.request]
            if s.node != req.dropoff:
                return Violation("structure", k, f"request {s.request} dropped at wrong node")
            w = s.time - picked[s.request] - oracle.time(req.pickup, req.dropoff)
            if w > config.w_drop:
                return Violation("dropoff-wait", k, f"request {s.request} detour {w}s > {config.w_drop}s")
            dropped.add(s.request)
            load -= 1
    if set(picked) != dropped:
        missing = sorted(set(picked) - dropped)
        return Violation("precedence", len(stops) - 1, f"requests {missing} never dropped off")
    return None


def advance_to(state: FleetState, t: int) -> FleetState:
    """Move the clock to ``t``, executing every stop scheduled at or before it."""
    if t < state.now:
        raise ValueError(f"cannot move clock backwards from {state.now} to {t}")
    out = state.copy()
    out.now = t
    for m, route in enumerate(state.routes):
        done = route.done
        last = len(route.stops) - 1
        while done < last and route.stops[done].time <= t:
            done += 1
        if done != route.done:
            load = route.load
            for s in route.stops[route.done:done]:
                load += 1 if s.kind == StopKind.PICKUP else -1
                if load < 0 or load > state.config.capacity:
                    raise SimulationError(f"robot {m}: load {load} after executing {s}")
            s = route.stops[done - 1]
            out.routes[m] = replace(route, done=done, origin=s.node, depart=s.time)
    return out


def advance(state: FleetState) -> FleetState:
    return advance_to(state, state.now + 1)


# ---------------------------------------------------------------- request logs

@dataclass
class DayLog:
    date: str
    weekday: int
    month: int
    requests: list[Request] = field(default_factory=list)


def canonical_order(requests: Iterable[Request]) -> list[Request]:
    """Processing order within one step: desired pickup, then entry time, then id."""
    return sorted(requests, key=lambda r: (r.desired_pickup_time, r.entry_time, r.id))


def step_order(requests: Iterable[Request], t_start: int) -> list[Request]:
    """Canonical order, except that scheduled requests (entered before ``t_start``) go first."""
    return sorted(requests, key=lambda r: (r.entry_time >= t_start, r.desired_pickup_time, r.entry_time, r.id))


def parse_requests(text: str, source: str = "<string>", t_last: int | None = None) -> DayLog:
    day = DayLog("", 0, 1)
    prev_entry = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        where = f"{source}:{lineno}"
        if parts[0] == "day" and len(parts) == 4:
            try:
                day.date, day.weekday, day.month = parts[1], int(parts[2]), int(parts[3])
            except ValueError as exc:
                raise InputError(f"{where}: {exc}") from exc
            if not (0 <= day.weekday <= 6 and 1 <= day.month <= 12):
                raise InputError(f"{where}: weekday must be 0-6 and month 1-12")
            continue
        if parts[0] != "request" or len(parts) != 6:
            raise InputError(f"{where}: cannot parse {raw.strip()!r}")
        try:
            rid, entry, desired, pick, drop = map(int, parts[1:])
        except ValueError as exc:
            raise InputError(f"{where}: {exc}") from exc
        if rid in seen:
            raise InputError(f"{where}: duplicate request id {rid}")
        if prev_entry is not None and entry < prev_entry:
            raise InputError(f"{where}: requests must be sorted by entry time")
        if entry >= desired:
            raise InputError(f"{where}: entry time {entry} must precede desired pickup {desired}")
        if t_last is not None and desired > t_last:
            raise InputError(f"{where}: desired pickup {desired} is after the last allowed time {t_last}")
        try:
            day.requests.append(Request(rid, pick, drop, entry, desired))
        except InputError as exc:
            raise InputError(f"{where}: {exc}") from exc
        seen.add(rid)
        prev_entry = entry
    return day


def load_requests(path: str | PathLike, t_last: int | None = None) -> DayLog:
    with open(path) as fh:
        return parse_requests(fh.read(), str(path), t_last)


def format_requests(day: DayLog) -> str:
    lines = []
    if day.date:
        lines.append(f"day {day.date} {day.weekday} {day.month}")
    for r in sorted(day.requests, key=lambda r: (r.entry_time, r.id)):
        lines.append(f"request {r.id} {r.entry_time} {r.desired_pickup_time} {r.pickup} {r.dropoff}")
    return "\n".join(lines) + "\n"


def save_requests(day: DayLog, path: str | PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(format_requests(day))


def check_requests_reachable(requests: Iterable[Request], n_nodes: int) -> None:
    for r in requests:
        for node in (r.pickup, r.dropoff):
            if not 1 <= node <= n_nodes:
                raise InputError(f"request {r.id}: node {node} not in graph")
