"""Discrete-time dispatch simulation: batch, assign, move, measure."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .assign import AssignmentSolution, greedy_insertion_baseline, rebalance, solve_zac
from .future import abstract_samples, benders_solve
from .network import (
    AssignedRequest,
    ConfigError,
    DemandTrace,
    Request,
    RoadNetwork,
    Stop,
    VehicleState,
)
from .pathstore import PathIndex, build_index, enumerate_paths
from .rpv import build_rpv_graph
from .zoning import Zoning, cluster_gbc, cluster_hac, singleton_zoning

FLEET_PRESETS = ("uniform_4", "uniform_10", "80_20")


@dataclass
class SimConfig:
    delta: int = 60
    tau: int = 300
    lam: int = 600
    kappa: int | str = 4
    fleet_size: int = 100
    zone_sizes: tuple[int, ...] = (0, 60, 120, 300)
    clustering: str = "hac_max"
    sample_zone_size: int = 600
    rho: int = 900
    num_samples: int = 5
    method: str = "zac"
    solver_backend: str = "auto"
    solver_time_limit: float | None = None
    benders_budget: float | None = None
    max_destinations: int = 12
    node_budget: int = 10_000
    bucket_width: int = 10
    rebalance_idle: bool = True
    seed: int = 0
    horizon: int = 3600

    def validate(self):
        if self.delta <= 0 or self.tau <= 0 or self.lam <= 0:
            raise ConfigError("delta, tau and lam must be positive")
        if self.horizon % self.delta != 0:
            raise ConfigError("horizon must be a multiple of delta")
        if self.rho % self.delta != 0:
            raise ConfigError("lookahead must be a multiple of delta")
        if self.method not in ("zac", "zacbenders", "greedy"):
            raise ConfigError(f"unknown method {self.method!r}")
        sizes = tuple(self.zone_sizes)
        if not sizes or sizes[0] != 0 or list(sizes) != sorted(sizes):
            raise ConfigError("zone sizes must be ascending and start at 0")
        if isinstance(self.kappa, str) and self.kappa not in FLEET_PRESETS:
            raise ConfigError(f"unknown fleet preset {self.kappa!r}")
        if self.fleet_size < 1:
            raise ConfigError("fleet must have at least one vehicle")


@dataclass
class EpochRow:
    epoch: int
    t: int
    arrived: int
    served: int
    rejected: int
    objective: float
    paths: int
    truncated: int
    unrealized: int
    benders_iterations: int = 0
    benders_converged: bool = True
    benders_cuts: int = 0
    benders_lower: float = 0.0
    benders_upper: float = 0.0
    benders_gap: float = 0.0
    benders_timeout: bool = False


@dataclass
class MetricsReport:
    config: dict
    total_requests: int = 0
    served: int = 0
    rejected: int = 0
    service_rate: float = 0.0
    wait_mean: float = 0.0
    wait_max: int = 0
    delay_mean: float = 0.0
    delay_max: int = 0
    delay_over_lambda: int = 0
    delay_over_lambda_pct: float = 0.0
    max_delay_excess: int = 0
    truncated_completions: int = 0
    split_failures: int = 0
    benders_timeouts: int = 0
    epochs: list[EpochRow] = field(default_factory=list)
    request_rows: list[dict] = field(default_factory=list, repr=False)
    epoch_wall_seconds: list[float] = field(default_factory=list)
    benders_wall_seconds: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        body = {
            "config": self.config,
            "totals": {
                "total_requests": self.total_requests,
                "served": self.served,
                "rejected": self.rejected,
                "service_rate": round(self.service_rate, 6),
            },
            "service_quality": {
                "wait_mean": round(self.wait_mean, 6),
                "wait_max": self.wait_max,
                "delay_mean": round(self.delay_mean, 6),
                "delay_max": self.delay_max,
                "delay_over_lambda": self.delay_over_lambda,
                "delay_over_lambda_pct": round(self.delay_over_lambda_pct, 6),
                "max_delay_excess": self.max_delay_excess,
            },
            "diagnostics": {
                "truncated_completions": self.truncated_completions,
                "split_failures": self.split_failures,
                "benders_timeouts": self.benders_timeouts,
                "benders_iterations": sum(r.benders_iterations for r in self.epochs),
            },
            "epochs": [asdict(r) for r in self.epochs],
        }
        return json.dumps(body, sort_keys=True, indent=1)

    def write(self, outdir):
        import os

        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "metrics.json"), "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")
        with open(os.path.join(outdir, "epochs.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "epoch", "t", "arrived", "served", "rejected", "objective", "paths",
                    "truncated", "unrealized", "benders_iterations", "benders_converged",
                    "benders_cuts", "benders_lower", "benders_upper", "benders_gap",
                    "benders_timeout",
                ]
            )
            for r in self.epochs:
                writer.writerow(
                    [
                        r.epoch, r.t, r.arrived, r.served, r.rejected, r.objective, r.paths,
                        r.truncated, r.unrealized, r.benders_iterations,
                        int(r.benders_converged), r.benders_cuts, r.benders_lower,
                        r.benders_upper, r.benders_gap, int(r.benders_timeout),
                    ]
                )
        with open(os.path.join(outdir, "requests.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["request", "vehicle", "epoch", "wait", "delay"])
            for row in self.request_rows:
                writer.writerow([row["request"], row["vehicle"], row["epoch"], row["wait"], row["delay"]])
        # wall-clock numbers are non-deterministic; kept out of the files above
        with open(os.path.join(outdir, "timing.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "wall_seconds", "benders_wall_seconds"])
            for i, w in enumerate(self.epoch_wall_seconds):
                bw = self.benders_wall_seconds[i] if i < len(self.benders_wall_seconds) else 0.0
                writer.writerow([i, f"{w:.6f}", f"{bw:.6f}"])


def build_fleet(config: SimConfig, net: RoadNetwork) -> list[VehicleState]:
    rng = np.random.default_rng(config.seed)
    n = len(net)
    caps: list[int]
    if isinstance(config.kappa, str):
        if config.kappa == "uniform_4":
            caps = [int(rng.integers(1, 5)) for _ in range(config.fleet_size)]
        elif config.kappa == "uniform_10":
            caps = [int(rng.integers(1, 11)) for _ in range(config.fleet_size)]
        else:  # 80_20
            caps = [4 if rng.random() < 0.8 else 6 for _ in range(config.fleet_size)]
    else:
        caps = [int(config.kappa)] * config.fleet_size
    return [
        VehicleState(id=i, location=int(rng.integers(0, n)), available_at=0, max_capacity=caps[i])
        for i in range(config.fleet_size)
    ]


def build_zonings(config: SimConfig, net: RoadNetwork) -> dict[int, Zoning]:
    zonings: dict[int, Zoning] = {}
    for size in config.zone_sizes:
        zonings[size] = make_zoning(config.clustering, net, size)
    return zonings


def make_zoning(method: str, net: RoadNetwork, size: int) -> Zoning:
    if size == 0:
        return singleton_zoning(net)
    if method == "hac_max":
        return cluster_hac(net, "complete", size)
    if method == "hac_avg":
        return cluster_hac(net, "mean", size)
    if method == "gbc":
        return cluster_gbc(net, size)
    raise ConfigError(f"unknown clustering method {method!r}")


class Simulation:
    """Owns vehicle state and statistics across the epoch loop."""

    def __init__(self, config: SimConfig, net: RoadNetwork, trace: DemandTrace,
                 index: PathIndex, zonings: dict[int, Zoning],
                 sample_traces: list[DemandTrace] | None = None,
                 sample_zoning: Zoning | None = None):
        config.validate()
        self.config = config
        self.net = net
        self.trace = trace
        self.index = index
        self.zonings = zonings
        self.sample_traces = sample_traces or []
        self.sample_zoning = sample_zoning
        self.vehicles = build_fleet(config, net)
        self.by_id = {v.id: v for v in self.vehicles}
        self.requests: dict[int, Request] = {}
        self.waits: list[int] = []
        self.delays: list[int] = []
        self.request_log: dict[int, dict] = {}  # rid -> vehicle/wait/delay
        self.kappa_eff = max(1, int(round(sum(v.max_capacity for v in self.vehicles) / len(self.vehicles))))
        if config.method == "zacbenders":
            if len(self.sample_traces) < config.num_samples:
                raise ConfigError(
                    f"zacbenders needs at least {config.num_samples} sample traces, "
                    f"got {len(self.sample_traces)}"
                )
            if self.sample_zoning is None:
                raise ConfigError("zacbenders needs the sample zoning")

    # ------------------------------------------------------------- motion

    def _expand_plan(self, plan, anchor_loc: int, anchor_time: int):
        """Node-level itinerary: every intersection on the way gets a Stop,
        so the vehicle can be re-anchored at the next node each epoch."""
        route: list[Stop] = []
        cur_loc, cur_time = anchor_loc, anchor_time
        for node, picks, drops in plan:
            seq = self.net.path_nodes(cur_loc, node)
            for prev, nxt in zip(seq, seq[1:]):
                cur_time += self.net.travel_time(prev, nxt)
                route.append(Stop(node=nxt, time=cur_time))
            if route and route[-1].node == node and route[-1].time == cur_time:
                last = route[-1]  # merge events landing on the same visit
                route[-1] = Stop(
                    node,
                    last.time,
                    last.pickups + tuple(picks),
                    last.dropoffs + tuple(drops),
                )
            else:  # stop at the anchor node itself
                route.append(Stop(node, cur_time, tuple(picks), tuple(drops)))
            cur_loc = node
        return route

    def advance_second(self, t: int):
        """Move every vehicle through second (t, t+1]; fire pickups and
        drop-offs whose planned node time falls in it."""
        for veh in self.vehicles:
            while veh.route and veh.route[0].time <= t + 1:
                stop = veh.route.pop(0)
                veh.location = stop.node
                veh.available_at = stop.time
                # passengers leave before new ones board at the same node
                for rid in stop.dropoffs:
                    entry = next(a for a in veh.onboard if a.request.id == rid)
                    req = entry.request
                    delay = stop.time - (req.arrival + self.net.travel_time(req.origin, req.destination))
                    if delay < 0:
                        raise RuntimeError(f"negative delay for request {rid}")
                    self.delays.append(delay)
                    self.request_log[rid]["delay"] = delay
                    veh.onboard.remove(entry)
                for rid in stop.pickups:
                    entry = next(a for a in veh.onboard if a.request.id == rid)
                    if entry.picked:
                        continue
                    entry.picked = True
                    entry.pickup_time = stop.time
                    wait = stop.time - entry.request.arrival
                    if wait > self.config.tau or wait < 0:
                        raise RuntimeError(
                            f"wait bound violated for request {rid}: {wait}s"
                        )
                    self.waits.append(wait)
                    self.request_log[rid]["wait"] = wait
                    if veh.seated > veh.max_capacity:
                        raise RuntimeError(f"capacity exceeded on vehicle {veh.id}")

    # -------------------------------------------------------------- epoch

    def run_epoch(self, t: int, report: MetricsReport) -> AssignmentSolution:
        config = self.config
        demand = self.trace.between(t - config.delta, t)
        for req in demand:
            self.requests[req.id] = req
        t_start = time.perf_counter()
        benders_wall = 0.0

        if config.method == "greedy":
            solution = greedy_insertion_baseline(
                demand, self.vehicles, self.net, config.tau, config.lam, t
            )
            graph_paths = 0
            truncated = 0
            log = None
        else:
            graph = build_rpv_graph(
                t, self.index, demand, self.vehicles, self.net, self.zonings,
                config.tau, config.lam, config.max_destinations, config.node_budget,
            )
            graph_paths = len(graph.paths)
            truncated = graph.truncated_completions
            if config.method == "zac":
                solution = solve_zac(
                    graph, self.net,
                    time_limit=config.solver_time_limit,
                    backend=config.solver_backend,
                )
                log = None
            else:
                samples = abstract_samples(
                    self.sample_traces[: config.num_samples],
                    self.sample_zoning, self.net, t, config.rho, config.delta,
                    self.kappa_eff, config.tau,
                )
                budget = config.benders_budget
                if budget is None:
                    budget = config.delta / 2.0
                solution, log = benders_solve(
                    graph, samples, self.net,
                    time_budget=budget, backend=config.solver_backend,
                )
                benders_wall = log.wall_seconds

        self._commit(t, solution)
        served_ids = set(solution.request_vehicle)
        if config.rebalance_idle:
            self._rebalance(t, demand, served_ids)

        row = EpochRow(
            epoch=t // config.delta,
            t=t,
            arrived=len(demand),
            served=len(served_ids),
            rejected=len(demand) - len(served_ids),
            objective=float(solution.objective_value),
            paths=graph_paths,
            truncated=truncated,
            unrealized=len(solution.unrealized),
        )
        if log is not None:
            row.benders_iterations = log.iterations
            row.benders_converged = log.converged
            row.benders_cuts = log.cuts_added
            row.benders_lower = float(round(log.lower_bound, 9))
            row.benders_upper = float(round(log.upper_bound, 9))
            row.benders_gap = float(round(log.gap, 9))
            row.benders_timeout = log.timed_out
            if log.timed_out:
                report.benders_timeouts += 1
        report.epochs.append(row)
        report.truncated_completions += truncated
        report.split_failures += len(solution.unrealized)
        report.epoch_wall_seconds.append(time.perf_counter() - t_start)
        report.benders_wall_seconds.append(benders_wall)
        return solution

    def _commit(self, t: int, solution: AssignmentSolution):
        """Bind served requests to vehicles irrevocably and install plans."""
        for rid, vid in sorted(solution.request_vehicle.items()):
            veh = self.by_id[vid]
            veh.onboard.append(AssignedRequest(request=self.requests[rid]))
            self.request_log[rid] = {"vehicle": vid, "epoch": t // self.config.delta}
        touched = set(solution.stop_plans) if self.config.method == "greedy" else set(
            solution.vehicle_path
        )
        for vid in sorted(touched):
            veh = self.by_id[vid]
            plan = solution.stop_plans.get(vid, [])
            loc, when = veh.anchor(t)
            when = max(when, t)
            veh.route = self._expand_plan(plan, loc, when)

    def _rebalance(self, t: int, demand, served_ids):
        idle = {
            v.id: v.anchor(t)[0]
            for v in self.vehicles
            if not v.onboard and not any(s.pickups or s.dropoffs for s in v.route)
        }
        unserved = {r.id: r.origin for r in demand if r.id not in served_ids}
        if not idle or not unserved:
            return
        plan = rebalance(idle, unserved, self.net, backend=self.config.solver_backend)
        for vid, rid in sorted(plan.moves.items()):
            veh = self.by_id[vid]
            loc, when = veh.anchor(t)
            when = max(when, t)
            target = unserved[rid]
            if target == loc:
                continue
            veh.route = self._expand_plan([(target, [], [])], loc, when)

    # ---------------------------------------------------------------- run

    def run(self) -> MetricsReport:
        config = self.config
        report = MetricsReport(config=_config_dict(config))
        total = sum(1 for r in self.trace if r.arrival <= config.horizon)
        for t in range(0, config.horizon + 1):
            if t % config.delta == 0:
                self.run_epoch(t, report)
            self.advance_second(t)
        # drain: carry every onboard passenger to their destination
        t = config.horizon + 1
        limit = config.horizon + 200_000
        while any(v.onboard or v.route for v in self.vehicles):
            self.advance_second(t)
            t += 1
            if t > limit:
                raise RuntimeError("drain phase did not terminate; undelivered passengers remain")

        report.total_requests = total
        report.served = sum(r.served for r in report.epochs)
        report.rejected = sum(r.rejected for r in report.epochs)
        if report.served + report.rejected != total:
            raise RuntimeError(
                f"accounting broke: served {report.served} + rejected {report.rejected} != {total}"
            )
        for rid in sorted(self.request_log):
            row = self.request_log[rid]
            if "wait" not in row or "delay" not in row:
                raise RuntimeError(f"request {rid} was assigned but never completed")
            report.request_rows.append(
                {
                    "request": rid,
                    "vehicle": row["vehicle"],
                    "epoch": row["epoch"],
                    "wait": row["wait"],
                    "delay": row["delay"],
                }
            )
        report.service_rate = report.served / total if total else 0.0
        if self.waits:
            report.wait_mean = float(np.mean(self.waits))
            report.wait_max = int(max(self.waits))
        if self.delays:
            report.delay_mean = float(np.mean(self.delays))
            report.delay_max = int(max(self.delays))
            over = [d - config.lam for d in self.delays if d > config.lam]
            report.delay_over_lambda = len(over)
            report.delay_over_lambda_pct = len(over) / len(self.delays)
            report.max_delay_excess = int(max(over)) if over else 0
        return report


def _config_dict(config: SimConfig) -> dict:
    body = asdict(config)
    body["zone_sizes"] = list(config.zone_sizes)
    return body


def run_simulation(
    config: SimConfig,
    net: RoadNetwork,
    trace: DemandTrace,
    sample_traces: list[DemandTrace] | None = None,
    paths=None,
) -> MetricsReport:
    """End-to-end run: offline artifacts, epoch loop, drain, metrics.

    Deterministic for a fixed seed and config; wall-clock timings are the
    only non-deterministic outputs and are reported separately.
    """
    config.validate()
    if paths is None:
        paths = enumerate_paths(net, config.tau)
    index = build_index(paths, config.bucket_width)
    zonings = build_zonings(config, net)
    sample_zoning = None
    if config.method == "zacbenders":
        sample_zoning = make_zoning(config.clustering, net, config.sample_zone_size)
    sim = Simulation(config, net, trace, index, zonings, sample_traces, sample_zoning)
    return sim.run()
