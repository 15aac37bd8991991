"""Command line entry points: synthetic data, offline paths, zonings, runs."""

from __future__ import annotations

import argparse
import os
import sys

from . import network as net_mod
from .network import ConfigError, SyntheticConfig, generate_synthetic_city, load_network, load_trace
from .pathstore import (
    PathPruneConfig,
    enumerate_paths,
    load_store,
    prune_paths_data_driven,
    save_store,
    store_key,
)
from .sim import SimConfig, make_zoning, run_simulation
from .zoning import save_zoning


def _parse_config_file(path) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: expected key = value, got {raw.strip()!r}")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _cmd_gen_synthetic(args):
    cfg = SyntheticConfig(
        suburbs=args.suburbs,
        downtown_size=args.downtown_size,
        suburb_size=args.suburb_size,
        edge_seconds=args.edge_seconds,
        horizon=args.horizon,
        delta=args.delta,
        uniform_rate=args.uniform_rate,
        train_period=args.train_period,
        fl_batch=args.fl_batch,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    net, trace = generate_synthetic_city(cfg)
    net_mod.save_network(net, os.path.join(args.out, "network.csv"), os.path.join(args.out, "coords.csv"))
    net_mod.save_trace(trace, net, os.path.join(args.out, "trace.csv"))
    for day in range(args.sample_days):
        sample_cfg = SyntheticConfig(**{**cfg.__dict__, "seed": cfg.seed + 1000 + day})
        _, day_trace = generate_synthetic_city(sample_cfg)
        os.makedirs(os.path.join(args.out, "samples"), exist_ok=True)
        net_mod.save_trace(day_trace, net, os.path.join(args.out, "samples", f"day_{day}.csv"))
    print(f"wrote network ({len(net)} nodes, {len(net.edges)} edges) and trace ({len(trace)} requests) to {args.out}")


def _cmd_build_paths(args):
    net = load_network(args.network)
    if args.segments:
        durations = [int(x) for x in args.segments.split(",")]
        gammas = [float(x) for x in args.gammas.split(",")] if args.gammas else [1.0] * len(durations)
        history = load_trace(args.history, net) if args.history else net_mod.DemandTrace([])
        prune = PathPruneConfig(durations, gammas, history)
        if prune.tau != args.tau:
            raise ConfigError(f"segments sum to {prune.tau}, expected tau={args.tau}")
        key = store_key(net, args.tau, prune)
        paths = prune_paths_data_driven(net, prune)
    else:
        key = store_key(net, args.tau)
        paths = enumerate_paths(net, args.tau)
    if os.path.exists(args.out) and not args.force:
        try:
            load_store(args.out, key)
            print(f"{args.out} already holds {key}; use --force to rebuild")
            return
        except Exception:
            pass
    save_store(paths, key, args.out)
    print(f"wrote {len(paths)} paths (key {key}) to {args.out}")


def _cmd_cluster(args):
    net = load_network(args.network)
    if args.coords:
        net_mod.load_coords(net, args.coords)
    zoning = make_zoning(args.method, net, args.zone_size)
    save_zoning(zoning, net, args.out)
    print(f"wrote {zoning.num_zones} zones to {args.out}")


def _cmd_simulate(args):
    overrides = _parse_config_file(args.config) if args.config else {}

    def pick(name, cast, default):
        if getattr(args, name, None) is not None:
            return getattr(args, name)
        if name in overrides:
            return cast(overrides[name])
        return default

    kappa_raw = pick("kappa", str, "4")
    kappa = int(kappa_raw) if str(kappa_raw).isdigit() else str(kappa_raw)
    config = SimConfig(
        delta=pick("delta", int, 60),
        tau=pick("tau", int, 300),
        lam=pick("lam", int, 600),
        kappa=kappa,
        fleet_size=pick("fleet", int, 100),
        zone_sizes=tuple(int(x) for x in str(pick("zone_sizes", str, "0,60,120,300")).split(",")),
        clustering=pick("clustering", str, "hac_max"),
        sample_zone_size=pick("sample_zone_size", int, 600),
        rho=pick("rho", int, 900),
        num_samples=pick("samples_count", int, 5),
        method=pick("method", str, "zac"),
        solver_backend=pick("backend", str, "auto"),
        max_destinations=pick("max_destinations", int, 12),
        node_budget=pick("node_budget", int, 10_000),
        seed=pick("seed", int, 0),
        horizon=pick("horizon", int, 3600),
    )
    net = load_network(args.network)
    trace = load_trace(args.trace, net)
    sample_traces = None
    if config.method == "zacbenders":
        if not args.samples:
            raise ConfigError("zacbenders needs --samples DIR with historical day traces")
        files = sorted(
            os.path.join(args.samples, f) for f in os.listdir(args.samples) if f.endswith(".csv")
        )
        sample_traces = [load_trace(f, net) for f in files]

    paths = None
    if args.paths:
        paths = load_store(args.paths)
    report = run_simulation(config, net, trace, sample_traces, paths)
    report.write(args.out)
    print(
        f"served {report.served}/{report.total_requests} "
        f"({100 * report.service_rate:.2f}%); outputs in {args.out}"
    )


def main(argv=None):
    parser = argparse.ArgumentParser(prog="ridepool", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="generate the synthetic city and demand")
    g.add_argument("--out", required=True)
    g.add_argument("--suburbs", type=int, default=8)
    g.add_argument("--downtown-size", type=int, default=8, dest="downtown_size")
    g.add_argument("--suburb-size", type=int, default=4, dest="suburb_size")
    g.add_argument("--edge-seconds", type=int, default=30, dest="edge_seconds")
    g.add_argument("--horizon", type=int, default=3600)
    g.add_argument("--delta", type=int, default=60)
    g.add_argument("--uniform-rate", type=float, default=4.0, dest="uniform_rate")
    g.add_argument("--train-period", type=int, default=180, dest="train_period")
    g.add_argument("--fl-batch", type=int, default=2, dest="fl_batch")
    g.add_argument("--sample-days", type=int, default=0, dest="sample_days")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_gen_synthetic)

    b = sub.add_parser("build-paths", help="enumerate or prune offline partial paths")
    b.add_argument("--network", required=True)
    b.add_argument("--tau", type=int, required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--segments", help="comma list of segment durations for pruned generation")
    b.add_argument("--gammas", help="comma list of per-segment request-per-minute thresholds")
    b.add_argument("--history", help="historical trace CSV for scoring segments")
    b.add_argument("--force", action="store_true", help="rebuild even if the cache matches")
    b.set_defaults(func=_cmd_build_paths)

    c = sub.add_parser("cluster", help="cluster locations into zones")
    c.add_argument("--network", required=True)
    c.add_argument("--method", default="hac_max", choices=["hac_max", "hac_avg", "gbc"])
    c.add_argument("--zone-size", type=int, required=True, dest="zone_size")
    c.add_argument("--coords", help="coordinate sidecar (needed for gbc)")
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_cluster)

    s = sub.add_parser("simulate", help="replay a trace under a dispatch method")
    s.add_argument("--network", required=True)
    s.add_argument("--trace", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="key = value file; flags override it")
    s.add_argument("--method", choices=["zac", "zacbenders", "greedy"])
    s.add_argument("--delta", type=int)
    s.add_argument("--tau", type=int)
    s.add_argument("--lambda", "--lam", type=int, dest="lam", help="max extra travel delay")
    s.add_argument("--kappa", help="vehicle capacity, or preset uniform_4|uniform_10|80_20")
    s.add_argument("--fleet", type=int)
    s.add_argument("--samples", help="directory of historical day traces (zacbenders)")
    s.add_argument("--samples-count", type=int, dest="samples_count")
    s.add_argument("--rho", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--horizon", type=int)
    s.add_argument("--zone-sizes", dest="zone_sizes")
    s.add_argument("--backend", choices=["auto", "scipy", "bundled"])
    s.add_argument("--paths", help="path-store cache from build-paths")
    s.set_defaults(func=_cmd_simulate)

    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
