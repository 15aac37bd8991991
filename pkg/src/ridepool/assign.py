"""Assignment of requests and vehicles to zone paths, rebalancing, and the
sequential insertion baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

from .network import Request, RoadNetwork, VehicleState
from .rpv import RPVGraph, realize_assignment
from .solver import LinearModel, solve_model


@dataclass
class AssignmentSolution:
    request_path: dict[int, int]
    vehicle_path: dict[int, int]
    objective_value: float
    status: str
    request_vehicle: dict[int, int] = field(default_factory=dict)
    stop_plans: dict[int, list] = field(default_factory=dict)
    unrealized: list[int] = field(default_factory=list)
    future_value: float = 0.0

    @property
    def served(self) -> int:
        return len(self.request_vehicle)


def build_zac_model(graph: RPVGraph, weights: dict[int, float] | None = None):
    """Table-style 0/1 program: maximize served requests subject to
    at-most-one path per request and vehicle and pooled seat capacity at
    every position where an assigned pickup can be on board."""
    model = LinearModel(maximize=True)
    x_vars: dict[tuple[int, int], int] = {}
    y_vars: dict[tuple[int, int], int] = {}
    for rid in sorted(graph.request_edges):
        w = 1.0 if weights is None else float(weights.get(rid, 1.0))
        for pid in graph.request_edges[rid]:
            x_vars[(rid, pid)] = model.add_binary(f"x_{rid}_{pid}", obj=w)
    for vid in sorted(graph.vehicle_edges):
        for pid in graph.vehicle_edges[vid]:
            y_vars[(vid, pid)] = model.add_binary(f"y_{vid}_{pid}")

    for rid in sorted(graph.request_edges):
        model.add_constr({x_vars[(rid, pid)]: 1.0 for pid in graph.request_edges[rid]}, "<=", 1.0)
    for vid in sorted(graph.vehicle_edges):
        model.add_constr({y_vars[(vid, pid)]: 1.0 for pid in graph.vehicle_edges[vid]}, "<=", 1.0)

    for zp in graph.paths:
        binding = set()
        for rid, plan in zp.serves.items():
            binding.update(range(plan.pick_pos + 1, plan.drop_pos + 1))
        seen_rows = set()
        for n in sorted(binding):
            lhs = {
                x_vars[(rid, zp.id)]: 1.0
                for rid in zp.serves
                if zp.b_flag(rid, n)
            }
            if not lhs:
                continue
            coeffs = dict(lhs)
            for vid, fit in zp.fits.items():
                if fit.free_seats[n]:
                    coeffs[y_vars[(vid, zp.id)]] = -float(fit.free_seats[n])
            row_key = frozenset(coeffs.items())
            if row_key in seen_rows:
                continue
            seen_rows.add(row_key)
            model.add_constr(coeffs, "<=", 0.0)
    return model, x_vars, y_vars


def verify_zac_solution(graph: RPVGraph, request_path, vehicle_path):
    """Independent re-check of the assignment constraints straight from the
    graph constants; guards against a misbehaving solver backend."""
    seen_r = set()
    for rid, pid in request_path.items():
        if rid in seen_r:
            raise RuntimeError(f"request {rid} assigned twice")
        seen_r.add(rid)
        if pid not in graph.request_edges.get(rid, ()):
            raise RuntimeError(f"request {rid} assigned to inadmissible path {pid}")
    seen_v = set()
    for vid, pid in vehicle_path.items():
        if vid in seen_v:
            raise RuntimeError(f"vehicle {vid} assigned twice")
        seen_v.add(vid)
        if pid not in graph.vehicle_edges.get(vid, ()):
            raise RuntimeError(f"vehicle {vid} assigned to inadmissible path {pid}")
    for zp in graph.paths:
        rids = [rid for rid, p in request_path.items() if p == zp.id]
        vids = [vid for vid, p in vehicle_path.items() if p == zp.id]
        if rids and not vids:
            raise RuntimeError(f"path {zp.id} serves requests without a vehicle")
        for n in range(zp.n_positions):
            load = sum(zp.b_flag(rid, n) for rid in rids)
            cap = sum(zp.fits[vid].free_seats[n] for vid in vids)
            if load > cap:
                raise RuntimeError(f"path {zp.id} position {n}: load {load} > capacity {cap}")


def solve_zac(
    graph: RPVGraph,
    net: RoadNetwork,
    time_limit: float | None = None,
    backend: str = "auto",
    weights: dict[int, float] | None = None,
) -> AssignmentSolution:
    """Exact batch assignment over the RPV graph.

    Optimal unless the time limit cuts the search short, in which case the
    incumbent is returned with status ``feasible``. The returned solution
    carries the per-vehicle stop plans compacted to assigned pickups and
    drop-offs with exact shortest-path times.
    """
    if not graph.paths:
        return AssignmentSolution({}, {}, 0.0, "optimal")
    model, x_vars, y_vars = build_zac_model(graph, weights)
    sol = solve_model(model, backend=backend, time_limit=time_limit)
    if not sol.ok:
        return AssignmentSolution({}, {}, 0.0, sol.status)
    request_path = {rid: pid for (rid, pid), idx in x_vars.items() if sol.x[idx] > 0.5}
    vehicle_path = {vid: pid for (vid, pid), idx in y_vars.items() if sol.x[idx] > 0.5}
    verify_zac_solution(graph, request_path, vehicle_path)
    request_vehicle, plans, unrealized = realize_assignment(graph, request_path, vehicle_path, net)
    return AssignmentSolution(
        request_path=request_path,
        vehicle_path=vehicle_path,
        objective_value=float(round(sol.objective, 9)),
        status=sol.status,
        request_vehicle=request_vehicle,
        stop_plans=plans,
        unrealized=unrealized,
    )


@dataclass
class RebalancePlan:
    moves: dict[int, int]  # vehicle id -> request id whose origin it heads for


def rebalance(
    idle_vehicles: dict[int, int],
    unserved_origins: dict[int, int],
    net: RoadNetwork,
    backend: str = "auto",
) -> RebalancePlan:
    """Send idle vehicles toward unserved request origins, minimizing total
    travel time, with either side fully used. The LP's assignment structure
    is totally unimodular, so the optimum is integral; this is asserted.
    """
    if not idle_vehicles or not unserved_origins:
        return RebalancePlan({})
    vids = sorted(idle_vehicles)
    rids = sorted(unserved_origins)
    model = LinearModel(maximize=False)
    m_vars: dict[tuple[int, int], int] = {}
    for vid in vids:
        for rid in rids:
            cost = net.travel_time(idle_vehicles[vid], unserved_origins[rid])
            m_vars[(vid, rid)] = model.add_var(f"m_{vid}_{rid}", ub=1.0, obj=float(cost))
    for rid in rids:
        model.add_constr({m_vars[(vid, rid)]: 1.0 for vid in vids}, "<=", 1.0)
    for vid in vids:
        model.add_constr({m_vars[(vid, rid)]: 1.0 for rid in rids}, "<=", 1.0)
    model.add_constr({idx: 1.0 for idx in m_vars.values()}, "==", float(min(len(vids), len(rids))))
    sol = solve_model(model, backend=backend)
    if not sol.ok:
        raise RuntimeError(f"rebalancing LP unexpectedly {sol.status}")
    moves = {}
    for (vid, rid), idx in m_vars.items():
        val = sol.x[idx]
        if abs(val - round(val)) > 1e-6:
            raise RuntimeError(f"rebalancing LP returned a fractional value {val}")
        if round(val) == 1:
            moves[vid] = rid
    return RebalancePlan(moves)


def _plan_times(net: RoadNetwork, anchor_loc: int, anchor_time: int, stops):
    times = []
    cur_loc, cur_time = anchor_loc, anchor_time
    for node, _, _ in stops:
        cur_time += net.travel_time(cur_loc, node)
        cur_loc = node
        times.append(cur_time)
    return times


def _plan_feasible(net, vehicle, anchor_loc, anchor_time, stops, reqs, tau, lam):
    """Check wait, delay and seat limits of a stop plan for one vehicle."""
    times = _plan_times(net, anchor_loc, anchor_time, stops)
    onboard = sum(1 for a in vehicle.onboard if a.picked)
    for (node, picks, drops), tm in zip(stops, times):
        for rid in picks:
            req = reqs[rid]
            if node != req.origin or tm > req.arrival + tau:
                return None
            onboard += 1
            if onboard > vehicle.max_capacity:
                return None
        for rid in drops:
            req = reqs[rid]
            if node != req.destination:
                return None
            if tm > req.arrival + net.travel_time(req.origin, req.destination) + lam:
                return None
            onboard -= 1
    return times


def greedy_insertion_baseline(
    demand: list[Request],
    vehicles: list[VehicleState],
    net: RoadNetwork,
    tau: int,
    lam: int,
    now: int,
) -> AssignmentSolution:
    """Sequential baseline: each request, in arrival order, goes to the
    feasible pickup/drop-off insertion that adds the least travel time over
    all vehicles, or is rejected. Mutated stop plans are returned per
    vehicle; vehicle states themselves are left untouched.
    """
    plans: dict[int, list[tuple[int, list[int], list[int]]]] = {}
    anchors: dict[int, tuple[int, int]] = {}
    reqs: dict[int, Request] = {}
    for veh in vehicles:
        loc, when = veh.anchor(now)
        when = max(when, now)
        anchors[veh.id] = (loc, when)
        plan = []
        for stop in veh.route:
            if stop.time > now and (stop.pickups or stop.dropoffs):
                plan.append((stop.node, list(stop.pickups), list(stop.dropoffs)))
        plans[veh.id] = plan
        for a in veh.onboard:
            reqs[a.request.id] = a.request

    request_vehicle: dict[int, int] = {}
    for req in sorted(demand, key=lambda r: (r.arrival, r.id)):
        reqs[req.id] = req
        best = None
        for veh in sorted(vehicles, key=lambda v: v.id):
            loc, when = anchors[veh.id]
            if when + net.travel_time(loc, req.origin) > req.arrival + tau:
                continue
            plan = plans[veh.id]
            base = _plan_times(net, loc, when, plan)
            base_len = base[-1] - when if base else 0
            for p in range(len(plan) + 1):
                for q in range(p, len(plan) + 1):
                    trial = list(plan)
                    trial.insert(p, (req.origin, [req.id], []))
                    trial.insert(q + 1, (req.destination, [], [req.id]))
                    times = _plan_feasible(net, veh, loc, when, trial, reqs, tau, lam)
                    if times is None:
                        continue
                    added = (times[-1] - when) - base_len
                    cand = (added, veh.id, p, q)
                    if best is None or cand < best[0]:
                        best = (cand, trial)
        if best is not None:
            (_, vid, _, _), trial = best
            plans[vid] = trial
            request_vehicle[req.id] = vid

    stop_plans = {vid: plan for vid, plan in plans.items()}
    served_paths = {rid: -1 for rid in request_vehicle}
    vehicle_paths = {vid: -1 for vid in set(request_vehicle.values())}
    return AssignmentSolution(
        request_path=served_paths,
        vehicle_path=vehicle_paths,
        objective_value=float(len(request_vehicle)),
        status="optimal",
        request_vehicle=request_vehicle,
        stop_plans=stop_plans,
        unrealized=[],
    )
