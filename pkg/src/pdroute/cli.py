"""Command-line entry point: ``pdroute <command> [flags]``.

Exit codes: 0 success, 1 bad input, 2 infeasible (fleet sizing hit M_max).
"""
from __future__ import annotations

import argparse
import configparser
import glob
import os
import sys
from dataclasses import replace

from . import demand as dm
from .core import DayLog, InputError, ProblemConfig, check_requests_reachable, format_requests, load_requests
from .fleetsize import ConfigurationError, FleetSizeExceeded, restart_and_optimize, single_pass
from .network import GraphError, TravelTimeOracle, load_graph
from .rollout import RolloutConfig
from .routesgen import ClusterParams
from .simharness import (CSV_COLUMNS, ExperimentConfig, build_demand, format_row, generate_synthetic_history,
                         make_policy, run_experiment, simulate_day, uniform_spec)

# evening service window: 19:00 to 03:00, seconds since midnight of the service date
DEFAULTS = {
    "problem": {"t_start": "68400", "t_end": "97200", "t_last": "93600", "w_pick": "900", "w_drop": "900",
                "capacity": "16", "depots": "1", "fleet_size": "3"},
    "rollout": {"K": "3600", "n_scenarios": "20", "n_routes": "15", "min_cluster_size": "2"},
    "demand": {"forecaster": "historical-mean", "n_intervals": "12", "lead": "60"},
    "synthetic": {"rate": "20", "hours": "19-25", "lead_min": "60", "lead_max": "900"},
    "experiment": {"policies": "greedy", "fleet_sizes": "3", "out_dir": "results"},
}

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2


class CliError(InputError):
    pass


def read_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keep "K" upper case
    cp.read_dict(DEFAULTS)
    if path:
        if not os.path.exists(path):
            raise CliError(f"config file not found: {path}")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise CliError(f"malformed config {path}: {exc}") from exc
    return cp


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _hours(text: str) -> list[int]:
    a, _, b = text.partition("-")
    return list(range(int(a), int(b) + 1)) if b else [int(a)]


def problem_config(cp, args) -> ProblemConfig:
    p = cp["problem"]
    try:
        cfg = ProblemConfig(t_start=p.getint("t_start"), t_end=p.getint("t_end"), t_last=p.getint("t_last"),
                            w_pick=p.getint("w_pick"), w_drop=p.getint("w_drop"), capacity=p.getint("capacity"),
                            depots=_ints(p["depots"]), fleet_size=p.getint("fleet_size"))
    except ValueError as exc:
        raise CliError(f"bad [problem] value: {exc}") from exc
    if getattr(args, "fleet", None) is not None:
        cfg = replace(cfg, fleet_size=args.fleet)
    return cfg


def rollout_config(cp, args) -> RolloutConfig:
    r = cp["rollout"]
    try:
        return RolloutConfig(K=r.getint("K"), n_scenarios=r.getint("n_scenarios"), n_routes=r.getint("n_routes"),
                             seed=args.seed, cluster=ClusterParams(min_cluster_size=r.getint("min_cluster_size")))
    except ValueError as exc:
        raise CliError(f"bad [rollout] value: {exc}") from exc


def history_files(path: str) -> list[str]:
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "*.txt")))
    else:
        files = sorted(glob.glob(path))
    if not files:
        raise CliError(f"no request logs found at {path}")
    return files


def load_history(path: str, cfg: ProblemConfig, n_nodes: int):
    days = [load_requests(f, cfg.t_last) for f in history_files(path)]
    for d in days:
        check_requests_reachable(d.requests, n_nodes)
    return days


def demand_model(cp, args, history, n_nodes, ro):
    d = cp["demand"]
    return build_demand(args.forecaster or d["forecaster"], history, n_nodes, ro, args.seed,
                        d.getint("n_intervals"), d.getint("lead"))


def emit(text: str, out: str | None) -> None:
    if out:
        d = os.path.dirname(out)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_validate(args, cp) -> int:
    graph = load_graph(args.graph)
    cfg = problem_config(cp, args)
    oracle = TravelTimeOracle(graph)
    lines = [f"graph {args.graph} nodes {graph.n} edges {len(graph.edges)} ok"]
    for d in cfg.depots:
        if not 1 <= d <= graph.n:
            raise CliError(f"depot {d} not in graph")
    for path in args.requests or []:
        day = load_requests(path, cfg.t_last)
        check_requests_reachable(day.requests, graph.n)
        lines.append(f"requests {path} count {len(day.requests)} ok")
    if not cfg.depots_cover(oracle):
        lines.append("warning: some node is farther than w_pick from every depot")
    if not cfg.buffer_ok(oracle):
        lines.append("warning: t_end - t_last is below three graph diameters")
    emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args, cp) -> int:
    graph = load_graph(args.graph)
    cfg = problem_config(cp, args)
    oracle = TravelTimeOracle(graph)
    day = load_requests(args.day, cfg.t_last)
    check_requests_reachable(day.requests, graph.n)
    demand = None
    ro = rollout_config(cp, args)
    if args.policy == "rollout":
        if not args.history:
            raise CliError("--policy rollout needs --history for its demand model")
        history = load_history(args.history, cfg, graph.n)
        demand = demand_model(cp, args, history, graph.n, ro)
    policy = make_policy(args.policy, ro, demand)
    res = simulate_day(day, policy, cfg, oracle, seed=args.seed, check=args.check)
    m = res.metrics
    lines = [",".join(CSV_COLUMNS), ",".join(format_row(day, args.policy, cfg.fleet_size, m, args.timing))]
    if args.routes:
        lines.append("")
        for r in m.records:
            lines.append(f"# request {r.id} robot {r.robot} wait_pick {r.wait_pick} trip {r.trip}"
                         + (" rejected" if r.rejected else ""))
    emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_fleet_size(args, cp) -> int:
    graph = load_graph(args.graph)
    cfg = problem_config(cp, args)
    oracle = TravelTimeOracle(graph)
    history = load_history(args.history, cfg, graph.n)
    if args.algo == "single":
        rep = single_pass(history, cfg, oracle)
    else:
        rep = restart_and_optimize(history, cfg, oracle, args.mmax)
    emit(rep.format(), args.out)
    return EXIT_OK


def cmd_sample_demand(args, cp) -> int:
    graph = load_graph(args.graph)
    cfg = problem_config(cp, args)
    history = load_history(args.history, cfg, graph.n)
    ro = replace(rollout_config(cp, args), n_scenarios=args.n or cp["rollout"].getint("n_scenarios"))
    model = demand_model(cp, args, history, graph.n, ro)
    day = DayLog(args.date, args.weekday, args.month)
    hour_start = args.hour * dm.SECONDS_PER_HOUR
    if hour_start < cfg.t_start:
        hour_start += 24 * dm.SECONDS_PER_HOUR
    observed = [0] * model.n_intervals
    scenarios = model.scenarios(observed, day, hour_start, args.seed, cfg.t_last)
    out = []
    for k, sc in enumerate(scenarios):
        out.append(f"scenario {k} count {len(sc)}")
        out += [f"request {r.id} {r.entry_time} {r.desired_pickup_time} {r.pickup} {r.dropoff}" for r in sc.requests]
    emit("\n".join(out) + "\n", args.out)
    return EXIT_OK


def cmd_gen_history(args, cp) -> int:
    s = cp["synthetic"]
    cfg = problem_config(cp, args)
    n_nodes = load_graph(args.graph).n if args.graph else args.nodes
    if not n_nodes:
        raise CliError("gen-history needs --graph or --nodes")
    rate = args.rate if args.rate is not None else s.getfloat("rate")
    spec = uniform_spec(n_nodes, rate, _hours(args.hours or s["hours"]), cfg.t_start, cfg.t_last,
                        s.getint("lead_min"), s.getint("lead_max"))
    days = generate_synthetic_history(spec, args.days, args.seed, args.start_date)
    os.makedirs(args.out_dir, exist_ok=True)
    for d in days:
        with open(os.path.join(args.out_dir, f"day_{d.date}.txt"), "w") as fh:
            fh.write(format_requests(d))
    sys.stdout.write(f"wrote {len(days)} days to {args.out_dir}\n")
    return EXIT_OK


def cmd_experiment(args, cp) -> int:
    e = cp["experiment"]
    if "graph" not in e or "test" not in e:
        raise CliError("[experiment] needs graph and test entries")
    cfg = ExperimentConfig(
        graph=e["graph"], test_days=history_files(e["test"]), problem=problem_config(cp, args),
        train_days=history_files(e["train"]) if e.get("train") else [],
        policies=tuple(e["policies"].replace(",", " ").split()), fleet_sizes=_ints(e["fleet_sizes"]),
        rollout=rollout_config(cp, args), forecaster=cp["demand"]["forecaster"],
        n_intervals=cp["demand"].getint("n_intervals"), lead=cp["demand"].getint("lead"), seed=args.seed,
        jobs=args.jobs, timing=args.timing, out_dir=args.out_dir or e["out_dir"])
    paths = run_experiment(cfg)
    sys.stdout.write(f"wrote {paths['days']} and {paths['summary']}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file with [problem], [rollout], [demand], "
                                         "[synthetic] and [experiment] sections")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes for day sweeps")
    common.add_argument("--out", help="output file (default: standard output)")

    p = argparse.ArgumentParser(prog="pdroute", description="Multi-capacity robot routing simulator and fleet sizing.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="check graph and request files")
    v.add_argument("--graph", required=True)
    v.add_argument("--requests", nargs="*", help="request log files")

    s = sub.add_parser("simulate", parents=[common], help="replay one day under a policy")
    s.add_argument("--graph", required=True)
    s.add_argument("--day", required=True, help="request log of the day")
    s.add_argument("--policy", choices=["greedy", "rollout"], default="greedy")
    s.add_argument("--fleet", type=int, help="fleet size (overrides config)")
    s.add_argument("--history", help="training logs (dir or glob) for the rollout demand model")
    s.add_argument("--forecaster", help="historical-mean, bootstrap, or a precomputed forecast file")
    s.add_argument("--check", action="store_true", help="step every second and assert invariants")
    s.add_argument("--routes", action="store_true", help="append per-request records")
    s.add_argument("--timing", action="store_true", help="report wall-clock planning time (not reproducible)")

    f = sub.add_parser("fleet-size", parents=[common], help="size the fleet from historical days")
    f.add_argument("--graph", required=True)
    f.add_argument("--history", required=True, help="directory or glob of day logs")
    f.add_argument("--algo", choices=["single", "restart"], default="restart")
    f.add_argument("--mmax", type=int, default=100, help="largest fleet tried by restart (default 100)")

    d = sub.add_parser("sample-demand", parents=[common], help="sample future-request scenarios for one hour")
    d.add_argument("--graph", required=True)
    d.add_argument("--history", required=True)
    d.add_argument("--date", default="")
    d.add_argument("--weekday", type=int, required=True)
    d.add_argument("--month", type=int, required=True)
    d.add_argument("--hour", type=int, required=True)
    d.add_argument("--n", type=int, help="number of scenarios")
    d.add_argument("--forecaster")

    g = sub.add_parser("gen-history", parents=[common], help="write synthetic day logs")
    g.add_argument("--graph")
    g.add_argument("--nodes", type=int)
    g.add_argument("--days", type=int, required=True)
    g.add_argument("--rate", type=float, help="mean requests per hour")
    g.add_argument("--hours", help="active hours, e.g. 19-25")
    g.add_argument("--start-date", default="2024-01-01")
    g.add_argument("--out-dir", required=True)

    x = sub.add_parser("experiment", parents=[common], help="run a fleet x policy x day sweep from a config")
    x.add_argument("--out-dir")
    x.add_argument("--timing", action="store_true")
    return p


COMMANDS = {"validate": cmd_validate, "simulate": cmd_simulate, "fleet-size": cmd_fleet_size,
            "sample-demand": cmd_sample_demand, "gen-history": cmd_gen_history, "experiment": cmd_experiment}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        cp = read_config(args.config)
        return COMMANDS[args.command](args, cp)
    except FleetSizeExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, GraphError, ConfigurationError, dm.DemandError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
