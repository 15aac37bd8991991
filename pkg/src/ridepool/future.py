"""Non-myopic extension: zone/epoch-abstracted demand samples, the
monolithic two-stage program, and its Benders decomposition.

Future requests are grouped per sample by (origin zone, destination zone,
decision epoch) and capped at vehicle capacity per subelement; the second
stage is then a weighted bipartite matching between vehicle supply types
(the zone and epoch where a first-stage path releases its vehicle) and the
subelements. Matchings relax integrally, so slaves are plain LPs whose
duals produce optimality cuts for the master.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .assign import AssignmentSolution, build_zac_model, verify_zac_solution
from .network import ConfigError, DemandTrace, RoadNetwork
from .rpv import RPVGraph, ZonePath, realize_assignment
from .solver import LinearModel, solve_model
from .zoning import Zoning


@dataclass(frozen=True)
class FutureElement:
    origin_zone: int
    dest_zone: int
    epoch: int
    eta: int  # grouped request count

    def subelement_weights(self, kappa: int) -> list[int]:
        full, rest = divmod(self.eta, kappa)
        weights = [kappa] * full
        if rest:
            weights.append(rest)
        return weights


@dataclass
class FutureSampleSet:
    samples: list[list[FutureElement]]
    kappa: int
    zoning: Zoning
    base_epoch: int
    horizon_epochs: int  # lookahead / delta
    delta: int
    tau: int
    supply_types: list[tuple[int, int]] = field(default_factory=list)
    type_index: dict[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.supply_types:
            self.supply_types = [
                (z, e)
                for e in range(self.base_epoch + 1, self.base_epoch + self.horizon_epochs + 1)
                for z in range(self.zoning.num_zones)
            ]
            self.type_index = {te: i for i, te in enumerate(self.supply_types)}

    def has_edge(self, type_id: int, element: FutureElement, net: RoadNetwork) -> bool:
        zone, epoch = self.supply_types[type_id]
        release = epoch * self.delta
        reach = self.zoning.zone_time(net, zone, element.origin_zone)
        return release + reach <= element.epoch * self.delta + self.tau

    def sample_total(self, k: int) -> int:
        return sum(e.eta for e in self.samples[k])


def abstract_samples(
    raw_samples: list[DemandTrace],
    zoning: Zoning,
    net: RoadNetwork,
    t: int,
    rho: int,
    delta: int,
    kappa: int,
    tau: int,
) -> FutureSampleSet:
    """Group each sample's requests in (t, t + rho] by origin zone,
    destination zone and decision epoch; element counts become subelements
    of at most kappa requests each."""
    if kappa < 1:
        raise ConfigError("kappa must be at least 1")
    if rho % delta != 0:
        raise ConfigError("lookahead must be a multiple of delta")
    base_epoch = t // delta
    samples: list[list[FutureElement]] = []
    for trace in raw_samples:
        groups: dict[tuple[int, int, int], int] = {}
        for req in trace.between(t, t + rho):
            key = (
                zoning.assignment[req.origin],
                zoning.assignment[req.destination],
                -(-req.arrival // delta),
            )
            groups[key] = groups.get(key, 0) + 1
        samples.append(
            [FutureElement(oz, dz, ep, eta) for (oz, dz, ep), eta in sorted(groups.items())]
        )
    return FutureSampleSet(
        samples=samples,
        kappa=kappa,
        zoning=zoning,
        base_epoch=base_epoch,
        horizon_epochs=rho // delta,
        delta=delta,
        tau=tau,
    )


def path_supply_type(path: ZonePath, samples: FutureSampleSet) -> int | None:
    """The (zone, epoch) at which a vehicle driving this path is free again,
    or None when it frees up beyond the lookahead."""
    zone = samples.zoning.assignment[path.end_node]
    epoch = -(-path.end_time // samples.delta)
    epoch = max(epoch, samples.base_epoch + 1)
    return samples.type_index.get((zone, epoch))


def _slave_lp(samples: FutureSampleSet, net: RoadNetwork, k: int, supply: dict[int, float]):
    """Primal slave LP for one sample given fixed supply per type."""
    model = LinearModel(maximize=True)
    u_vars: dict[tuple[int, int, int], int] = {}
    elements = samples.samples[k]
    by_type: dict[int, list[int]] = {}
    by_sub: dict[tuple[int, int], list[int]] = {}
    for j, elem in enumerate(elements):
        edge_types = [
            ti for ti in range(len(samples.supply_types)) if samples.has_edge(ti, elem, net)
        ]
        for r, w in enumerate(elem.subelement_weights(samples.kappa)):
            for ti in edge_types:
                idx = model.add_var(f"u_{j}_{r}_{ti}", ub=None, obj=float(w))
                u_vars[(j, r, ti)] = idx
                by_type.setdefault(ti, []).append(idx)
                by_sub.setdefault((j, r), []).append(idx)
    alpha_rows = []
    for ti in range(len(samples.supply_types)):
        coeffs = {idx: 1.0 for idx in by_type.get(ti, ())}
        alpha_rows.append(model.add_constr(coeffs, "<=", float(supply.get(ti, 0.0))))
    beta_rows = {}
    for j, elem in enumerate(elements):
        for r in range(len(elem.subelement_weights(samples.kappa))):
            coeffs = {idx: 1.0 for idx in by_sub.get((j, r), ())}
            beta_rows[(j, r)] = model.add_constr(coeffs, "<=", 1.0)
    return model, u_vars, alpha_rows, beta_rows


def slave_value(
    samples: FutureSampleSet,
    net: RoadNetwork,
    k: int,
    supply: dict[int, float],
    backend: str = "auto",
):
    """Value of the recourse matching for sample k at a fixed first stage,
    with the dual prices used to build an optimality cut.

    The matching's LP relaxation is exact (assignment structure), and
    strong duality ties the returned (alpha, beta) to the value; both are
    asserted to a 1e-6 tolerance.
    """
    model, u_vars, alpha_rows, beta_rows = _slave_lp(samples, net, k, supply)
    sol = solve_model(model, backend=backend)
    if sol.status != "optimal":
        raise RuntimeError(f"slave LP for sample {k} came back {sol.status}")
    alpha = [max(float(sol.duals[r]), 0.0) for r in alpha_rows]
    beta = {jr: max(float(sol.duals[r]), 0.0) for jr, r in beta_rows.items()}
    dual_val = sum(a * supply.get(ti, 0.0) for ti, a in enumerate(alpha)) + sum(beta.values())
    if abs(dual_val - sol.objective) > 1e-6 * max(1.0, abs(sol.objective)):
        raise RuntimeError(
            f"slave duals violate strong duality: primal {sol.objective}, dual {dual_val}"
        )
    return sol.objective, alpha, beta


def build_zacfuture(
    graph: RPVGraph,
    samples: FutureSampleSet,
    net: RoadNetwork,
    weights: dict[int, float] | None = None,
):
    """Monolithic two-stage model: the batch assignment objective plus the
    mean over samples of the future matching value, coupled through the
    supply each chosen path releases."""
    model, x_vars, y_vars = build_zac_model(graph, weights)
    n_samples = len(samples.samples)
    u_vars: dict[tuple[int, int, int, int], int] = {}
    if n_samples == 0:
        return model, x_vars, y_vars, u_vars
    path_type = {zp.id: path_supply_type(zp, samples) for zp in graph.paths}
    y_by_type: dict[int, list[int]] = {}
    for (vid, pid), idx in y_vars.items():
        ti = path_type[pid]
        if ti is not None:
            y_by_type.setdefault(ti, []).append(idx)
    for k, elements in enumerate(samples.samples):
        by_type: dict[int, list[int]] = {}
        by_sub: dict[tuple[int, int], list[int]] = {}
        for j, elem in enumerate(elements):
            edge_types = [
                ti for ti in range(len(samples.supply_types)) if samples.has_edge(ti, elem, net)
            ]
            for r, w in enumerate(elem.subelement_weights(samples.kappa)):
                for ti in edge_types:
                    idx = model.add_binary(f"u_{k}_{j}_{r}_{ti}", obj=float(w) / n_samples)
                    u_vars[(k, j, r, ti)] = idx
                    by_type.setdefault(ti, []).append(idx)
                    by_sub.setdefault((j, r), []).append(idx)
        for sub, idxs in sorted(by_sub.items()):
            model.add_constr({idx: 1.0 for idx in idxs}, "<=", 1.0)
        for ti in sorted(by_type):
            coeffs = {idx: 1.0 for idx in by_type[ti]}
            for idx in y_by_type.get(ti, ()):
                coeffs[idx] = coeffs.get(idx, 0.0) - 1.0
            model.add_constr(coeffs, "<=", 0.0)
    return model, x_vars, y_vars, u_vars


def solve_monolithic(
    graph: RPVGraph,
    samples: FutureSampleSet,
    net: RoadNetwork,
    time_limit: float | None = None,
    backend: str = "auto",
    weights: dict[int, float] | None = None,
) -> AssignmentSolution:
    """Solve the two-stage model in one piece; the Benders convergence
    oracle for tests and small instances."""
    if not graph.paths:
        return AssignmentSolution({}, {}, 0.0, "optimal")
    model, x_vars, y_vars, u_vars = build_zacfuture(graph, samples, net, weights)
    sol = solve_model(model, backend=backend, time_limit=time_limit)
    if not sol.ok:
        return AssignmentSolution({}, {}, 0.0, sol.status)
    request_path = {rid: pid for (rid, pid), idx in x_vars.items() if sol.x[idx] > 0.5}
    vehicle_path = {vid: pid for (vid, pid), idx in y_vars.items() if sol.x[idx] > 0.5}
    verify_zac_solution(graph, request_path, vehicle_path)
    request_vehicle, plans, unrealized = realize_assignment(graph, request_path, vehicle_path, net)
    current = sum(
        1.0 if weights is None else weights.get(rid, 1.0) for rid in request_path
    )
    return AssignmentSolution(
        request_path=request_path,
        vehicle_path=vehicle_path,
        objective_value=float(round(sol.objective, 9)),
        status=sol.status,
        request_vehicle=request_vehicle,
        stop_plans=plans,
        unrealized=unrealized,
        future_value=float(round(sol.objective - current, 9)),
    )


@dataclass
class BendersLog:
    iterations: int = 0
    converged: bool = False
    timed_out: bool = False
    upper_bound: float = 0.0
    lower_bound: float = 0.0
    cuts_added: int = 0
    wall_seconds: float = 0.0
    cut_records: list = field(default_factory=list)  # (sample, alpha, beta_sum)

    @property
    def gap(self) -> float:
        return max(self.upper_bound - self.lower_bound, 0.0)


def benders_solve(
    graph: RPVGraph,
    samples: FutureSampleSet,
    net: RoadNetwork,
    time_budget: float | None = None,
    backend: str = "auto",
    tol: float = 1e-6,
    max_iterations: int = 200,
    weights: dict[int, float] | None = None,
    parallel_slaves: bool = True,
) -> tuple[AssignmentSolution, BendersLog]:
    """Master/slave iteration on the two-stage model.

    Each round solves the master with the current optimality-cut pool,
    fixes the vehicle-path variables, prices every sample's matching dual
    (in parallel when asked), and either terminates when every recourse
    estimate is within tolerance of its slave value or adds the violated
    cuts. Slaves are always feasible, so only optimality cuts arise. On
    budget expiry the best evaluated solution is returned, flagged.
    """
    log = BendersLog()
    t0 = time.perf_counter()
    deadline = None if time_budget is None else t0 + time_budget

    if not graph.paths:
        log.converged = True
        return AssignmentSolution({}, {}, 0.0, "optimal"), log

    model, x_vars, y_vars = build_zac_model(graph, weights)
    n_samples = len(samples.samples) if samples is not None else 0
    if n_samples == 0:
        sol = solve_model(model, backend=backend, time_limit=time_budget)
        request_path = {rid: pid for (rid, pid), idx in x_vars.items() if sol.x[idx] > 0.5}
        vehicle_path = {vid: pid for (vid, pid), idx in y_vars.items() if sol.x[idx] > 0.5}
        verify_zac_solution(graph, request_path, vehicle_path)
        request_vehicle, plans, unrealized = realize_assignment(graph, request_path, vehicle_path, net)
        log.iterations = 1
        log.converged = sol.status == "optimal"
        log.upper_bound = log.lower_bound = sol.objective
        log.wall_seconds = time.perf_counter() - t0
        return (
            AssignmentSolution(
                request_path, vehicle_path, float(round(sol.objective, 9)), sol.status,
                request_vehicle, plans, unrealized,
            ),
            log,
        )

    path_type = {zp.id: path_supply_type(zp, samples) for zp in graph.paths}
    theta = [
        model.add_var(f"theta_{k}", ub=float(samples.sample_total(k)), obj=1.0 / n_samples)
        for k in range(n_samples)
    ]
    type_terms: dict[int, list[int]] = {}
    for (vid, pid), idx in y_vars.items():
        ti = path_type[pid]
        if ti is not None:
            type_terms.setdefault(ti, []).append(idx)

    best = None  # (true value, request_path, vehicle_path, future part)
    while log.iterations < max_iterations:
        log.iterations += 1
        remaining = None if deadline is None else deadline - time.perf_counter()
        if remaining is not None and remaining <= 0:
            log.timed_out = True
            break
        sol = solve_model(model, backend=backend, time_limit=remaining)
        if not sol.ok:
            raise RuntimeError(f"benders master came back {sol.status}")
        log.upper_bound = sol.objective
        request_path = {rid: pid for (rid, pid), idx in x_vars.items() if sol.x[idx] > 0.5}
        vehicle_path = {vid: pid for (vid, pid), idx in y_vars.items() if sol.x[idx] > 0.5}
        supply: dict[int, float] = {}
        for vid, pid in vehicle_path.items():
            ti = path_type[pid]
            if ti is not None:
                supply[ti] = supply.get(ti, 0.0) + 1.0

        def price(k):
            return slave_value(samples, net, k, supply, backend=backend)

        if parallel_slaves and n_samples > 1:
            with ThreadPoolExecutor(max_workers=min(n_samples, 8)) as pool:
                priced = list(pool.map(price, range(n_samples)))
        else:
            priced = [price(k) for k in range(n_samples)]

        x_val = sum(
            (1.0 if weights is None else weights.get(rid, 1.0)) for rid in request_path
        )
        true_val = x_val + sum(v for v, _, _ in priced) / n_samples
        if best is None or true_val > best[0] + tol:
            best = (true_val, request_path, vehicle_path)
        log.lower_bound = best[0]

        converged = True
        for k, (value, alpha, beta) in enumerate(priced):
            if sol.x[theta[k]] > value + tol:
                converged = False
                coeffs: dict[int, float] = {theta[k]: 1.0}
                for ti, a in enumerate(alpha):
                    if a <= 0.0:
                        continue
                    for idx in type_terms.get(ti, ()):
                        coeffs[idx] = coeffs.get(idx, 0.0) - a
                model.add_constr(coeffs, "<=", float(sum(beta.values())))
                log.cuts_added += 1
                log.cut_records.append((k, tuple(alpha), float(sum(beta.values()))))
        if converged:
            log.converged = True
            log.upper_bound = best[0]
            break
        if deadline is not None and time.perf_counter() > deadline:
            log.timed_out = True
            break

    if best is None:
        # budget too tight for a single master solve: fall back to no-op
        request_path, vehicle_path = {}, {}
    else:
        _, request_path, vehicle_path = best
    verify_zac_solution(graph, request_path, vehicle_path)
    request_vehicle, plans, unrealized = realize_assignment(graph, request_path, vehicle_path, net)
    status = "optimal" if log.converged else "feasible"
    log.wall_seconds = time.perf_counter() - t0
    current = sum(1.0 if weights is None else weights.get(rid, 1.0) for rid in request_path)
    return (
        AssignmentSolution(
            request_path=request_path,
            vehicle_path=vehicle_path,
            objective_value=float(round(best[0], 9)) if best else 0.0,
            status=status,
            request_vehicle=request_vehicle,
            stop_plans=plans,
            unrealized=unrealized,
            future_value=float(round((best[0] - current), 9)) if best else 0.0,
        ),
        log,
    )
