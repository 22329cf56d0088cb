"""Greedy base policy: cheapest single insertion of a request into one robot's route."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby
from typing import Iterable

from .core import (FleetState, ProblemConfig, Request, Route, StopKind, advance_to, build_route,
                   step_order)


@dataclass(frozen=True)
class InsertionCandidate:
    robot: int
    pick_index: int
    drop_index: int
    route: Route
    delta: int


def insertion_slots(n_pending: int) -> list[tuple[int, int]]:
    """All (pick, drop) gap pairs for a route with ``n_pending`` unexecuted stops.

    Gap ``k`` sits right after the k-th element of ``[robot position, *pending]``,
    so gap 0 is "next" and gap ``n_pending`` is "just before returning to the
    depot". When both indices are equal the dropoff directly follows the pickup.
    """
    return [(i, j) for i in range(n_pending + 1) for j in range(i, n_pending + 1)]


def splice(pending: list[tuple[int, StopKind, int]], request: Request, i: int, j: int):
    pick = (request.pickup, StopKind.PICKUP, request.id)
    drop = (request.dropoff, StopKind.DROPOFF, request.id)
    return pending[:i] + [pick] + pending[i:j] + [drop] + pending[j:]


def _with_request(state: FleetState, request: Request) -> FleetState:
    if state.requests.get(request.id) is request:
        return state
    state = state.copy()
    state.enter(request)
    return state


def insertion_candidates(state: FleetState, robot: int, request: Request) -> list[InsertionCandidate]:
    """Every valid insertion, unpruned, in slot order. Reference path for tests."""
    state = _with_request(state, request)
    base = state.routes[robot]
    pending = [(s.node, s.kind, s.request) for s in base.pending]
    out = []
    for i, j in insertion_slots(len(pending)):
        route = build_route(base, splice(pending, request, i, j), state.now, state.requests, state.oracle,
                            state.config)
        if route is not None:
            out.append(InsertionCandidate(robot, i, j, route, route.cost - base.cost))
    return out


def insertion_procedure(state: FleetState, robot: int, request: Request) -> Route | None:
    """Cheapest valid route for ``robot`` after inserting ``request``, or ``None``.

    Ties go to the lowest (pick, drop) slot. Two monotone cut-offs skip slots
    that cannot be valid: the new pickup only gets later as its slot moves
    back, and so does the new dropoff for a fixed pickup slot.
    """
    state = _with_request(state, request)
    cfg, oracle, reqs = state.config, state.oracle, state.requests
    base = state.routes[robot]
    anchor, depart, _ = base.anchor(state.now, oracle)
    pending = [(s.node, s.kind, s.request) for s in base.pending]
    n = len(pending)
    w_pick, w_drop, cap, t_end = cfg.w_pick, cfg.w_drop, cfg.capacity, cfg.t_end
    depot = base.depot
    direct_new = oracle.time(request.pickup, request.dropoff)

    load0 = 0
    picks0: dict[int, int] = {}
    cost0 = 0
    for s in base.stops[:base.done]:
        if s.kind == StopKind.PICKUP:
            load0 += 1
            picks0[s.request] = s.time
        elif s.kind == StopKind.DROPOFF:
            load0 -= 1
            r = reqs[s.request]
            cost0 += s.time - r.desired_pickup_time - oracle.time(r.pickup, r.dropoff)

    def run(seq, t, node, load, cost, picks):
        # returns (t, node, load, cost) after serving seq, or None on a violation
        for nd, kind, rid in seq:
            t += oracle.row(node)[nd]
            node = nd
            r = reqs[rid]
            if kind == StopKind.PICKUP:
                if t < r.desired_pickup_time:
                    t = r.desired_pickup_time
                elif t - r.desired_pickup_time > w_pick:
                    return None
                load += 1
                if load > cap:
                    return None
                picks[rid] = t
            else:
                direct = oracle.row(r.pickup)[r.dropoff]
                if t - picks[rid] - direct > w_drop:
                    return None
                load -= 1
                cost += t - r.desired_pickup_time - direct
        return t, node, load, cost

    best_cost = None
    best_slot = None
    # walk the existing prefix one stop at a time; state before gap i
    pre = (depart, anchor, load0, cost0)
    pre_picks = dict(picks0)
    for i in range(n + 1):
        if i > 0:
            pre = run(pending[i - 1:i], *pre, pre_picks)
            if pre is None:
                break
        t_i, node_i, load_i, cost_i = pre
        tp = t_i + oracle.row(node_i)[request.pickup]
        if tp - request.desired_pickup_time > w_pick:
            break
        tp = max(tp, request.desired_pickup_time)
        if load_i + 1 > cap:
            continue
        picks = dict(pre_picks)
        picks[request.id] = tp
        mid = (tp, request.pickup, load_i + 1, cost_i)
        for j in range(i, n + 1):
            if j > i:
                mid = run(pending[j - 1:j], *mid, picks)
                if mid is None:
                    break
            t_j, node_j, load_j, cost_j = mid
            td = t_j + oracle.row(node_j)[request.dropoff]
            if td - tp - direct_new > w_drop:
                break
            tail = run(pending[j:], td, request.dropoff, load_j - 1,
                       cost_j + td - request.desired_pickup_time - direct_new, dict(picks))
            if tail is None:
                continue
            t_last, node_last, _, cost = tail
            if t_last + oracle.row(node_last)[depot] > t_end:
                continue
            if best_cost is None or cost < best_cost:
                best_cost, best_slot = cost, (i, j)
    if best_slot is None:
        return None
    route = build_route(base, splice(pending, request, *best_slot), state.now, reqs, oracle, cfg)
    assert route is not None and route.cost == best_cost
    return route


def greedy_candidates(state: FleetState, request: Request) -> list[tuple[int, Route]]:
    """(stage cost, route) for every robot that can take ``request``, in robot order."""
    state = _with_request(state, request)
    out = []
    for m, base in enumerate(state.routes):
        route = insertion_procedure(state, m, request)
        if route is not None:
            out.append((route.cost - base.cost, route))
    return out


def greedy_assign(state: FleetState, request: Request, config: ProblemConfig | None = None) -> FleetState | None:
    """Control chosen by the greedy policy for one request, or ``None`` if no robot can take it.

    The returned state has the request entered and assigned; ties in added
    cost go to the lowest robot id.
    """
    best = None
    for delta, route in greedy_candidates(state, request):
        if best is None or delta < best[0]:
            best = (delta, route)
    if best is None:
        return None
    out = state.copy()
    out.enter(request)
    out.commit(best[1], [request.id])
    return out


def greedy_step(state: FleetState, request: Request) -> tuple[FleetState, bool]:
    """Assign or reject ``request``; returns the new state and whether it was served."""
    nxt = greedy_assign(state, request)
    if nxt is not None:
        return nxt, True
    out = state.copy()
    out.enter(request)
    out.reject(request.id)
    return out, False


def rejection_penalty(config: ProblemConfig) -> int:
    return config.w_pick + config.w_drop


def run_base_policy(state: FleetState, horizon: int, future: Iterable[Request],
                    config: ProblemConfig | None = None) -> int:
    """Cost of following the greedy policy for ``horizon`` steps against ``future`` arrivals.

    Requests entering before ``now + horizon`` are placed greedily in step
    order (earlier entries count as arriving at ``now``); each rejection adds
    ``w_pick + w_drop``. Planned waits only change when a request is
    inserted, so the clock jumps between arrival times.
    """
    if horizon <= 0:
        return 0
    config = config or state.config
    stop = state.now + horizon
    arrivals = sorted(((max(r.entry_time, state.now), r) for r in future if r.entry_time < stop), key=lambda x: x[0])
    start_cost = state.serviced_cost()
    penalty = 0
    cur = state
    for t, group in groupby(arrivals, key=lambda x: x[0]):
        if t > cur.now:
            cur = advance_to(cur, t)
        for req in step_order([r for _, r in group], config.t_start):
            nxt = greedy_assign(cur, req)
            if nxt is None:
                penalty += rejection_penalty(config)
            else:
                cur = nxt
    return cur.serviced_cost() - start_cost + penalty
