"""Candidate controls for one incoming request.

Besides the plain cheapest insertion into each robot, every robot that can
take the request may hand a cluster of its not-yet-picked-up requests to
another robot. Clusters come from HDBSCAN over pickup/dropoff coordinates
and desired pickup time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FleetState, Request, Route, StopKind, build_route, validate_route
from .greedy import _with_request, insertion_procedure
from .hdbscan import hdbscan_labels, single_linkage_labels

DEFAULT_ROUTES = 15
MIN_CLUSTER_SIZE = 2


@dataclass(frozen=True)
class RequestFeature:
    pickup_x: float
    pickup_y: float
    dropoff_x: float
    dropoff_y: float
    desired_pickup_time: float

    def vector(self) -> tuple[float, ...]:
        return (self.pickup_x, self.pickup_y, self.dropoff_x, self.dropoff_y, self.desired_pickup_time)


@dataclass(frozen=True)
class RequestCluster:
    members: tuple[int, ...]
    valid: bool


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int = MIN_CLUSTER_SIZE
    time_weight: float | None = None  # None: map extent / w_pick
    method: str = "hdbscan"  # or "single-linkage"
    threshold: float = 1.0  # single-linkage only


@dataclass(frozen=True)
class Control:
    """A new route per changed robot plus the resulting assignments."""
    kind: str  # "insert" or "swap"
    routes: tuple[Route, ...]
    moves: tuple[tuple[int, int], ...]
    stage_cost: int
    source: int
    target: int = -1
    cluster: tuple[int, ...] = field(default=())


def map_extent(state: FleetState) -> float:
    xy = np.array([(nd.x, nd.y) for nd in state.oracle.graph.nodes])
    return float(np.hypot(*(xy.max(axis=0) - xy.min(axis=0)))) or 1.0


def request_features(requests: list[Request], state: FleetState, time_weight: float | None = None) -> np.ndarray:
    graph = state.oracle.graph
    if time_weight is None:
        time_weight = map_extent(state) / state.config.w_pick
    rows = []
    for r in requests:
        px, py = graph.coords(r.pickup)
        dx, dy = graph.coords(r.dropoff)
        rows.append(RequestFeature(px, py, dx, dy, r.desired_pickup_time * time_weight).vector())
    return np.array(rows, dtype=float).reshape(len(rows), 5)


def cluster_requests(avail: list[Request], state: FleetState, params: ClusterParams = ClusterParams(),
                     picked_up: set[int] = frozenset()) -> list[RequestCluster]:
    """Cluster one robot's requests; a cluster is valid when none of its members is on board yet."""
    if len(avail) < params.min_cluster_size:
        return []
    x = request_features(avail, state, params.time_weight)
    if params.method == "hdbscan":
        labels = hdbscan_labels(x, params.min_cluster_size)
    else:
        labels = single_linkage_labels(x, params.threshold, params.min_cluster_size)
    out = []
    for c in range(int(labels.max()) + 1):
        members = tuple(sorted(avail[k].id for k in np.flatnonzero(labels == c)))
        out.append(RequestCluster(members, not any(m in picked_up for m in members)))
    return out


def remove_requests(state: FleetState, route: Route, rids: set[int]) -> Route | None:
    pending = [(s.node, s.kind, s.request) for s in route.pending if s.request not in rids]
    return build_route(route, pending, state.now, state.requests, state.oracle, state.config)


def insert_requests(state: FleetState, robot: int, requests: list[Request]) -> Route | None:
    """Insert requests one at a time (ascending desired pickup time) into ``robot``'s route."""
    cur = state.copy()
    for r in sorted(requests, key=lambda r: (r.desired_pickup_time, r.id)):
        route = insertion_procedure(cur, robot, r)
        if route is None:
            return None
        cur.routes[robot] = route
    return cur.routes[robot]


def _picked_up(route: Route) -> set[int]:
    return {s.request for s in route.stops[:route.done] if s.kind == StopKind.PICKUP}


def generate_promising_controls(state: FleetState, request: Request, n_routes: int = DEFAULT_ROUTES,
                                params: ClusterParams = ClusterParams()) -> list[Control]:
    """Candidate controls sorted by stage cost, at most ``n_routes`` of them.

    The cheapest plain insertion (the greedy choice) is always kept, so a
    single-route list reproduces the greedy policy.
    """
    if n_routes < 1:
        raise ValueError("n_routes must be >= 1")
    state = _with_request(state, request)
    base_cost = state.serviced_cost()
    found: list[Control] = []
    greedy: Control | None = None
    for m, base in enumerate(state.routes):
        inserted = insertion_procedure(state, m, request)
        if inserted is None:
            continue
        plain = Control("insert", (inserted,), ((request.id, m),), inserted.cost - base.cost, m)
        found.append(plain)
        if greedy is None or plain.stage_cost < greedy.stage_cost:
            greedy = plain
        if state.fleet_size < 2:
            continue
        avail = [state.requests[rid] for rid, (_, d) in base.index.items() if d >= base.done]
        picked = _picked_up(base)
        for cluster in cluster_requests(avail, state, params, picked):
            if not cluster.valid:
                continue
            members = set(cluster.members)
            shrunk = remove_requests(state, inserted, members)
            if shrunk is None:
                continue
            tmp = state.copy()
            tmp.routes[m] = shrunk
            for k in range(state.fleet_size):
                if k == m:
                    continue
                grown = insert_requests(tmp, k, [state.requests[r] for r in cluster.members])
                if grown is None:
                    continue
                delta = shrunk.cost + grown.cost - base.cost - state.routes[k].cost
                moves = ((request.id, m),) + tuple((r, k) for r in cluster.members)
                found.append(Control("swap", (shrunk, grown), moves, delta, m, k, cluster.members))
    if greedy is None:
        return []
    rest = sorted((c for c in found if c is not greedy), key=lambda c: c.stage_cost)[:n_routes - 1]
    assert state.serviced_cost() == base_cost
    return sorted([greedy] + rest, key=lambda c: (c.stage_cost, c is not greedy))


def apply_control(state: FleetState, request: Request, control: Control) -> FleetState:
    out = state.copy()
    out.enter(request)
    for route in control.routes:
        out.routes[route.robot] = route
    for rid, robot in control.moves:
        out.assignment[rid] = robot
    return out


def control_violations(state: FleetState, request: Request, control: Control) -> list[str]:
    """Every rule a control's routes break (empty when valid); used by tests and debug runs."""
    ref = _with_request(state, request)
    out = []
    for route in control.routes:
        v = validate_route(route, ref)
        if v is not None:
            out.append(f"robot {route.robot}: {v}")
    moved = {rid for rid, _ in control.moves}
    for m, route in enumerate(state.routes):
        if moved & _picked_up(route) and any(rid in _picked_up(route) and robot != m for rid, robot in control.moves):
            out.append(f"robot {m}: picked-up request reassigned")
    return out
