"""Online construction of the request-path-vehicle graph.

Each decision epoch, offline partial paths are matched against the fresh
request batch and the current vehicle anchors, compacted to their
pickup/drop-off nodes, completed into zone paths by a pruned exhaustive
search over abstracted destinations, and finally turned into a tripartite
graph carrying the feasibility constants the assignment step needs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .network import Request, RoadNetwork, VehicleState
from .pathstore import PathIndex, get_paths_from_index
from .zoning import Zoning


@dataclass(frozen=True)
class ReqEntry:
    """A request's feasibility data against one candidate path."""

    request: Request
    lb: int  # earliest possible drop-off, absolute seconds
    ub: int  # latest drop-off honouring the delay budget
    picked: bool = False  # already on board (previously assigned requests)
    in_prefix: bool = False  # drop-off servable inside the compacted prefix


@dataclass
class CandidatePath:
    """A compacted offline path anchored at one vehicle (location, time)."""

    anchor_loc: int
    start_time: int  # absolute
    prefix_nodes: tuple[int, ...]
    prefix_times: tuple[int, ...]  # absolute
    new_requests: dict[int, ReqEntry]
    suffix_dests: dict[int, tuple[int, int]]  # destination -> merged (lb, ub)
    vehicle_q: dict[int, dict[int, ReqEntry]]  # eligible vehicle -> q entries


@dataclass(frozen=True)
class SuffixVisit:
    zone_id: int
    center: int
    zone_size: int
    members: tuple[int, ...]
    time: int  # planned absolute visit time (zone-center travel estimate)


@dataclass(frozen=True)
class ServePlan:
    pick_pos: int | None  # None when the passenger is already on board
    pick_time: int | None
    drop_pos: int
    drop_time: int
    drop_node: int
    via_zone: bool


@dataclass
class VehicleFit:
    vehicle_id: int
    capacity: int
    free_seats: tuple[int, ...]  # N at every path position
    q_plans: dict[int, ServePlan]


@dataclass
class ZonePath:
    """Completed path: concrete pickup prefix plus zone drop-off suffix."""

    id: int
    anchor_loc: int
    start_time: int
    prefix_nodes: tuple[int, ...]
    prefix_times: tuple[int, ...]
    suffix: tuple[SuffixVisit, ...]
    serves: dict[int, ServePlan]
    fits: dict[int, VehicleFit]
    truncated: bool = False

    @property
    def n_positions(self) -> int:
        return len(self.prefix_nodes) + len(self.suffix)

    @property
    def end_node(self) -> int:
        return self.suffix[-1].center if self.suffix else self.prefix_nodes[-1]

    @property
    def end_time(self) -> int:
        return self.suffix[-1].time if self.suffix else self.prefix_times[-1]

    def b_flag(self, rid: int, n: int) -> int:
        plan = self.serves.get(rid)
        if plan is None or plan.pick_pos is None:
            return 0
        return 1 if plan.pick_pos < n <= plan.drop_pos else 0


@dataclass
class RPVGraph:
    paths: list[ZonePath]
    request_edges: dict[int, list[int]]
    vehicle_edges: dict[int, list[int]]
    requests: dict[int, Request]
    vehicle_caps: dict[int, int]
    truncated_completions: int = 0


def vehicle_anchor(vehicle: VehicleState, t: int) -> tuple[int, int]:
    loc, when = vehicle.anchor(t)
    return loc, max(when, t)


def process_offline_paths(
    t: int,
    index: PathIndex,
    demand: list[Request],
    vehicles: list[VehicleState],
    net: RoadNetwork,
    tau: int,
    lam: int,
) -> list[CandidatePath]:
    """Match offline partial paths against the current batch and anchors.

    Only paths starting at some vehicle's next (location, time) survive;
    each keeps the requests it can pick within the wait budget together
    with drop-off windows, then is compacted to pickup/drop-off nodes with
    times rederived from exact shortest paths. Work per anchor is pure and
    independent, so anchors may be processed in parallel.
    """
    anchors: dict[tuple[int, int], list[VehicleState]] = {}
    for veh in vehicles:
        loc, when = vehicle_anchor(veh, t)
        if when - t >= tau and tau > 0:
            continue  # cannot pick anything new this epoch; keeps its plan
        anchors.setdefault((loc, when), []).append(veh)

    results: list[CandidatePath] = []
    demand = sorted(demand, key=lambda r: r.id)
    query_cache: dict[tuple[int, int, int], list[int]] = {}

    def cached_query(loc, lo, hi):
        key = (loc, lo, hi)
        hit = query_cache.get(key)
        if hit is None:
            hit = query_cache[key] = get_paths_from_index(index, loc, lo, hi)
        return hit

    for (loc, start_abs) in sorted(anchors):
        s = start_abs - t
        start_ids = set(index.start_ids(loc))
        if not start_ids:
            continue

        per_path: dict[int, dict] = {}
        for req in demand:
            lo = req.arrival - t - s
            hi = req.arrival - t + tau - s
            if hi < 0:
                continue
            hits = cached_query(req.origin, max(lo, 0), hi)
            lb_abs = req.arrival + net.travel_time(req.origin, req.destination)
            ub_abs = lb_abs + lam
            for pid in hits:
                if pid not in start_ids:
                    continue
                path = index.paths[pid]
                pickup_off = path.offset_of(req.origin)
                entry = _drop_entry(path, pickup_off, req, lb_abs, ub_abs, start_abs, t, tau, picked=False)
                if entry is None:
                    continue
                work = per_path.setdefault(pid, {"new": {}, "veh": {}})
                work["new"][req.id] = entry

        for veh in anchors[(loc, start_abs)]:
            get_paths_for_vehicle(t, index, veh, per_path, net, tau, lam)

        merged: dict[tuple, CandidatePath] = {}
        for pid in sorted(per_path):
            work = per_path[pid]
            if not work["new"]:
                continue
            path = index.paths[pid]
            keep = {path.nodes[0]}
            for rid, entry in work["new"].items():
                keep.add(entry.request.origin)
                if entry.in_prefix:
                    keep.add(entry.request.destination)
            for entries in work["veh"].values():
                for entry in entries.values():
                    if not entry.picked:
                        keep.add(entry.request.origin)
                    if entry.in_prefix:
                        keep.add(entry.request.destination)
            nodes = [nd for nd in path.nodes if nd in keep]
            times = [start_abs]
            for prev, cur in zip(nodes, nodes[1:]):
                times.append(times[-1] + net.travel_time(prev, cur))

            suffix: dict[int, tuple[int, int]] = {}
            for entry in list(work["new"].values()) + [
                e for entries in work["veh"].values() for e in entries.values()
            ]:
                if entry.in_prefix:
                    continue
                d = entry.request.destination
                lo_w, hi_w = suffix.get(d, (entry.lb, entry.ub))
                suffix[d] = (min(lo_w, entry.lb), max(hi_w, entry.ub))

            key = (tuple(nodes), tuple(times), tuple(sorted(suffix.items())))
            if key in merged:
                merged[key].new_requests.update(work["new"])
                for vid, entries in work["veh"].items():
                    merged[key].vehicle_q.setdefault(vid, {}).update(entries)
            else:
                merged[key] = CandidatePath(
                    anchor_loc=loc,
                    start_time=start_abs,
                    prefix_nodes=tuple(nodes),
                    prefix_times=tuple(times),
                    new_requests=dict(work["new"]),
                    suffix_dests=suffix,
                    vehicle_q={vid: dict(entries) for vid, entries in work["veh"].items()},
                )
        results.extend(merged[k] for k in sorted(merged))
    return results


def _drop_entry(path, pickup_off, req, lb_abs, ub_abs, start_abs, t, tau, picked):
    """Alg.-style drop handling: serve in prefix when the visit already
    falls inside the window, drop the pairing when a tight deadline cannot
    be met in the prefix, keep it as a suffix destination otherwise."""
    if pickup_off is None:
        return None
    d_off = path.offset_of(req.destination)
    order_ok = d_off is not None and (d_off > pickup_off or (picked and d_off >= 0))
    if order_ok and lb_abs <= start_abs + d_off <= ub_abs:
        return ReqEntry(req, lb_abs, ub_abs, picked=picked, in_prefix=True)
    if ub_abs - t < tau and d_off is None:
        return None
    return ReqEntry(req, lb_abs, ub_abs, picked=picked, in_prefix=False)


def get_paths_for_vehicle(
    t: int,
    index: PathIndex,
    vehicle: VehicleState,
    per_path: dict[int, dict],
    net: RoadNetwork,
    tau: int,
    lam: int,
) -> dict[int, dict]:
    """Fold a vehicle's previously assigned requests into the per-path info.

    A path retains this vehicle's candidacy only if it covers every request
    in the vehicle's plan: picked-up passengers match any path anchored at
    the vehicle's (location, time), unpicked ones need their origin visited
    inside the remaining wait window. Paths serving no new request are left
    untouched. Mutates and returns ``per_path``.
    """
    if not vehicle.onboard:
        return per_path
    loc, start_abs = vehicle_anchor(vehicle, t)
    s = start_abs - t
    start_ids = set(index.start_ids(loc))
    covered: dict[int, dict[int, ReqEntry]] = {}
    for assigned in vehicle.onboard:
        r = assigned.request
        lb_abs = r.arrival + net.travel_time(r.origin, r.destination)
        ub_abs = lb_abs + lam
        if assigned.picked:
            hit_set = start_ids
        else:
            lo = r.arrival - t - s
            hi = r.arrival - t + tau - s
            if hi < 0:
                return per_path  # wait window expired; vehicle keeps its plan
            hit_set = set(get_paths_from_index(index, r.origin, max(lo, 0), hi)) & start_ids
        for pid in per_path:
            if pid not in hit_set or not per_path[pid]["new"]:
                continue
            path = index.paths[pid]
            pickup_off = 0 if assigned.picked else path.offset_of(r.origin)
            entry = _drop_entry(
                path, pickup_off, r, lb_abs, ub_abs, start_abs, t, tau, picked=assigned.picked
            )
            if entry is None:
                continue
            covered.setdefault(pid, {})[r.id] = entry
    need = len(vehicle.onboard)
    for pid, entries in covered.items():
        if len(entries) == need:
            per_path[pid]["veh"][vehicle.id] = entries
    return per_path


@dataclass
class Completion:
    candidate: CandidatePath
    zone_size: int
    visits: tuple[SuffixVisit, ...]
    truncated: bool


def complete_paths(
    t: int,
    candidates: list[CandidatePath],
    zonings: dict[int, Zoning],
    net: RoadNetwork,
    max_destinations: int = 12,
    node_budget: int = 10_000,
) -> list[Completion]:
    """Depth-first completion of each candidate over abstracted drop-offs.

    The zone size is the smallest configured one that brings the number of
    distinct destinations to max_destinations or fewer. Only leaves of the
    search tree are emitted: extending a feasible branch can only grow the
    served set, so interior nodes are dominated by their descendants.
    Every expansion counts against node_budget; exhausting it flags the
    candidate's completions as truncated. Candidates are independent, so
    this loop may be partitioned across workers.
    """
    sizes = sorted(zonings)
    out: list[Completion] = []
    for cand in candidates:
        if not cand.suffix_dests:
            out.append(Completion(cand, 0, (), False))
            continue
        chosen = sizes[-1]
        for size in sizes:
            zones = {zonings[size].assignment[d] for d in cand.suffix_dests}
            if len(zones) <= max_destinations:
                chosen = size
                break
        zoning = zonings[chosen]
        zs = zoning.zone_size
        groups: dict[int, list[int]] = {}
        for d in sorted(cand.suffix_dests):
            groups.setdefault(zoning.assignment[d], []).append(d)
        zone_windows = {
            z: (
                min(cand.suffix_dests[d][0] for d in members),
                max(cand.suffix_dests[d][1] for d in members),
            )
            for z, members in groups.items()
        }
        order = sorted(groups, key=lambda z: (zone_windows[z][0], z))

        budget = node_budget
        truncated = False
        seq: list[SuffixVisit] = []
        # leaf pool keyed by the set of drop-offs actually landing in their
        # windows; only set-maximal leaves survive, the rest are redundant
        found: dict[frozenset, tuple[SuffixVisit, ...]] = {}

        def served_members(z, tv):
            return [
                d
                for d in groups[z]
                if cand.suffix_dests[d][0] - zs <= tv <= cand.suffix_dests[d][1] - zs
            ]

        def leaf_key():
            served = []
            for visit in seq:
                served.extend(served_members(visit.zone_id, visit.time))
            return frozenset(served)

        def better(a, b):
            if a is None:
                return True
            end_a = a[-1].time if a else -1
            end_b = b[-1].time if b else -1
            key_a = (end_a, tuple(v.zone_id for v in a))
            key_b = (end_b, tuple(v.zone_id for v in b))
            return key_b < key_a

        def dfs(cur_node, cur_time, visited):
            nonlocal budget, truncated
            expanded = False
            for z in order:
                if z in visited:
                    continue
                tv = cur_time + net.travel_time(cur_node, zoning.centers[z])
                if not served_members(z, tv):
                    continue
                if budget <= 0:
                    truncated = True
                    break
                budget -= 1
                expanded = True
                seq.append(
                    SuffixVisit(z, zoning.centers[z], zs, tuple(groups[z]), tv)
                )
                visited.add(z)
                dfs(zoning.centers[z], tv, visited)
                visited.remove(z)
                seq.pop()
            if not expanded:
                key = leaf_key()
                if better(found.get(key), tuple(seq)):
                    found[key] = tuple(seq)

        dfs(cand.prefix_nodes[-1], cand.prefix_times[-1], set())
        keys = sorted(found, key=lambda k: (-len(k), sorted(k)))
        kept_keys: list[frozenset] = []
        for key in keys:
            if not any(key <= other for other in kept_keys):
                kept_keys.append(key)
        out.extend(Completion(cand, chosen, found[key], truncated) for key in kept_keys)
    return out


def identify_edges(
    t: int,
    completions: list[Completion],
    demand: list[Request],
    vehicles: list[VehicleState],
    net: RoadNetwork,
    tau: int,
    lam: int,
) -> RPVGraph:
    """Exact re-check of every request and vehicle against each completed
    path, population of the b/N feasibility constants, and redundancy
    pruning of paths whose served-request and vehicle sets are dominated
    within the same anchor.

    The re-check is required because drop-off windows are max-merged while
    processing offline paths, which can admit individual delay violations.
    """
    anchored: dict[tuple[int, int], list[VehicleState]] = {}
    for veh in vehicles:
        anchored.setdefault(vehicle_anchor(veh, t), []).append(veh)

    built: list[ZonePath] = []
    truncated = 0
    for comp in completions:
        cand = comp.candidate
        if comp.truncated:
            truncated += 1
        n_prefix = len(cand.prefix_nodes)
        n_pos = n_prefix + len(comp.visits)

        def serve_plan(entry: ReqEntry):
            req = entry.request
            if entry.picked:
                pick_pos, pick_time = None, None
                after = -1
            else:
                pick_pos = None
                for idx, (node, tm) in enumerate(zip(cand.prefix_nodes, cand.prefix_times)):
                    if node == req.origin and req.arrival <= tm <= req.arrival + tau:
                        pick_pos, pick_time = idx, tm
                        break
                if pick_pos is None:
                    return None
                after = pick_pos
            for idx in range(after + 1 if not entry.picked else 0, n_prefix):
                if cand.prefix_nodes[idx] == req.destination and entry.lb <= cand.prefix_times[idx] <= entry.ub:
                    return ServePlan(pick_pos, pick_time, idx, cand.prefix_times[idx], req.destination, False)
            for k, visit in enumerate(comp.visits):
                if req.destination in visit.members:
                    if entry.lb - visit.zone_size <= visit.time <= entry.ub - visit.zone_size:
                        return ServePlan(
                            pick_pos, pick_time, n_prefix + k, visit.time, req.destination, True
                        )
            return None

        serves = {}
        for rid in sorted(cand.new_requests):
            plan = serve_plan(cand.new_requests[rid])
            if plan is not None:
                serves[rid] = plan
        if not serves:
            continue

        fits: dict[int, VehicleFit] = {}
        for veh in anchored.get((cand.anchor_loc, cand.start_time), ()):
            if veh.onboard:
                entries = cand.vehicle_q.get(veh.id)
                if entries is None or len(entries) != len(veh.onboard):
                    continue
                q_plans = {}
                feasible = True
                for rid, entry in entries.items():
                    plan = serve_plan(entry)
                    if plan is None:
                        feasible = False
                        break
                    q_plans[rid] = plan
                if not feasible:
                    continue
            else:
                q_plans = {}
            occupancy = [0] * n_pos
            for rid, plan in q_plans.items():
                lo = 0 if plan.pick_pos is None else plan.pick_pos + 1
                for n in range(lo, plan.drop_pos + 1):
                    occupancy[n] += 1
            free = tuple(veh.max_capacity - o for o in occupancy)
            if any(f < 0 for f in free):
                continue
            fits[veh.id] = VehicleFit(veh.id, veh.max_capacity, free, q_plans)
        if not fits:
            continue

        built.append(
            ZonePath(
                id=-1,
                anchor_loc=cand.anchor_loc,
                start_time=cand.start_time,
                prefix_nodes=cand.prefix_nodes,
                prefix_times=cand.prefix_times,
                suffix=comp.visits,
                serves=serves,
                fits=fits,
                truncated=comp.truncated,
            )
        )

    # redundancy pruning per anchor: drop paths whose served-request set and
    # eligible-vehicle set are both contained in another path's
    kept: list[ZonePath] = []
    by_anchor: dict[tuple[int, int], list[ZonePath]] = {}
    for zp in built:
        by_anchor.setdefault((zp.anchor_loc, zp.start_time), []).append(zp)
    for key in sorted(by_anchor):
        group = by_anchor[key]
        group.sort(key=lambda zp: (-len(zp.serves), -len(zp.fits), zp.end_time, zp.n_positions, zp.prefix_nodes, tuple(v.zone_id for v in zp.suffix)))
        chosen: list[ZonePath] = []
        for zp in group:
            reqs = set(zp.serves)
            vehs = set(zp.fits)
            dominated = any(
                reqs <= set(other.serves) and vehs <= set(other.fits) for other in chosen
            )
            if not dominated:
                chosen.append(zp)
        kept.extend(chosen)

    request_edges: dict[int, list[int]] = {}
    vehicle_edges: dict[int, list[int]] = {}
    paths: list[ZonePath] = []
    for pid, zp in enumerate(kept):
        zp.id = pid
        paths.append(zp)
        for rid in zp.serves:
            request_edges.setdefault(rid, []).append(pid)
        for vid in zp.fits:
            vehicle_edges.setdefault(vid, []).append(pid)

    return RPVGraph(
        paths=paths,
        request_edges=request_edges,
        vehicle_edges=vehicle_edges,
        requests={r.id: r for r in demand},
        vehicle_caps={v.id: v.max_capacity for v in vehicles},
        truncated_completions=truncated,
    )


def build_rpv_graph(
    t: int,
    index: PathIndex,
    demand: list[Request],
    vehicles: list[VehicleState],
    net: RoadNetwork,
    zonings: dict[int, Zoning],
    tau: int,
    lam: int,
    max_destinations: int = 12,
    node_budget: int = 10_000,
) -> RPVGraph:
    """Full per-epoch pipeline: process offline paths, complete online,
    identify edges."""
    cands = process_offline_paths(t, index, demand, vehicles, net, tau, lam)
    comps = complete_paths(t, cands, zonings, net, max_destinations, node_budget)
    return identify_edges(t, comps, demand, vehicles, net, tau, lam)


def dump_rpv(graph: RPVGraph, net: RoadNetwork) -> str:
    """Plain-text view of an RPV graph for fixtures and debugging."""
    lines = []
    for zp in graph.paths:
        pre = " -> ".join(f"{net.node_ids[n]}@{tm}" for n, tm in zip(zp.prefix_nodes, zp.prefix_times))
        suf = " -> ".join(f"Z{v.zone_id}({net.node_ids[v.center]})@{v.time}" for v in zp.suffix)
        lines.append(f"path {zp.id}: start={net.node_ids[zp.anchor_loc]}@{zp.start_time} | {pre}" + (f" | {suf}" if suf else ""))
        for rid, plan in sorted(zp.serves.items()):
            bvec = "".join(str(zp.b_flag(rid, n)) for n in range(zp.n_positions))
            lines.append(f"  request {rid}: pick@{plan.pick_pos} drop@{plan.drop_pos} b={bvec}")
        for vid, fit in sorted(zp.fits.items()):
            lines.append(f"  vehicle {vid}: N={list(fit.free_seats)}")
    for rid in sorted(graph.request_edges):
        lines.append(f"Pr[{rid}] = {graph.request_edges[rid]}")
    for vid in sorted(graph.vehicle_edges):
        lines.append(f"Pv[{vid}] = {graph.vehicle_edges[vid]}")
    return "\n".join(lines)


def realize_assignment(
    graph: RPVGraph,
    request_path: dict[int, int],
    vehicle_path: dict[int, int],
    net: RoadNetwork,
):
    """Split each path's assigned requests among its assigned vehicles and
    lay out concrete per-vehicle stop plans.

    Splitting respects every vehicle's free-seat profile; the pooled
    capacity constraint of the assignment model makes a feasible split
    exist in all but pathological multi-vehicle cases, which are reported
    through the third return value instead of overloading anybody.
    Zone visits are expanded to the actual member destinations, ordered by
    drop deadline.
    """
    by_path: dict[int, dict] = {}
    for rid, pid in request_path.items():
        by_path.setdefault(pid, {"reqs": [], "vehs": []})["reqs"].append(rid)
    for vid, pid in vehicle_path.items():
        by_path.setdefault(pid, {"reqs": [], "vehs": []})["vehs"].append(vid)

    request_vehicle: dict[int, int] = {}
    plans: dict[int, list[tuple[int, int, list[int], list[int]]]] = {}
    unrealized: list[int] = []

    for pid in sorted(by_path):
        zp = graph.paths[pid]
        rids = sorted(by_path[pid]["reqs"], key=lambda r: (zp.serves[r].pick_pos, r))
        vids = sorted(by_path[pid]["vehs"])
        if not vids:
            unrealized.extend(rids)
            continue
        budgets = {vid: list(zp.fits[vid].free_seats) for vid in vids}

        assignment: dict[int, int] = {}

        def occupies(rid):
            plan = zp.serves[rid]
            return range(plan.pick_pos + 1, plan.drop_pos + 1)

        def backtrack(k):
            if k == len(rids):
                return True
            rid = rids[k]
            span = list(occupies(rid))
            for vid in vids:
                if all(budgets[vid][n] >= 1 for n in span):
                    for n in span:
                        budgets[vid][n] -= 1
                    assignment[rid] = vid
                    if backtrack(k + 1):
                        return True
                    for n in span:
                        budgets[vid][n] += 1
                    del assignment[rid]
            return False

        if not backtrack(0):
            # place what fits, report the rest
            assignment.clear()
            for vid in vids:
                budgets[vid] = list(zp.fits[vid].free_seats)
            for rid in rids:
                placed = False
                for vid in vids:
                    span = list(occupies(rid))
                    if all(budgets[vid][n] >= 1 for n in span):
                        for n in span:
                            budgets[vid][n] -= 1
                        assignment[rid] = vid
                        placed = True
                        break
                if not placed:
                    unrealized.append(rid)

        request_vehicle.update(assignment)

        for vid in vids:
            mine = [rid for rid, v in assignment.items() if v == vid]
            q_plans = zp.fits[vid].q_plans
            events: dict[int, dict] = {}

            def add_event(pos, node, rid, kind, deadline):
                slot = events.setdefault(pos, {})
                slot.setdefault((node, deadline, kind), []).append(rid)

            for rid in mine:
                plan = zp.serves[rid]
                add_event(plan.pick_pos, graph.requests[rid].origin, rid, "pick", plan.pick_time)
                dl = zp.serves[rid].drop_time
                add_event(plan.drop_pos, plan.drop_node, rid, "drop", dl)
            for rid, plan in q_plans.items():
                if plan.pick_pos is not None:
                    add_event(plan.pick_pos, zp.prefix_nodes[plan.pick_pos], rid, "pick", plan.pick_time)
                add_event(plan.drop_pos, plan.drop_node, rid, "drop", plan.drop_time)

            stops: list[tuple[int, list[int], list[int]]] = []  # node, picks, drops
            for pos in range(zp.n_positions):
                if pos < len(zp.prefix_nodes):
                    node = zp.prefix_nodes[pos]
                    picks, drops = [], []
                    for (nd, _dl, kind), rids_here in sorted(events.get(pos, {}).items()):
                        (picks if kind == "pick" else drops).extend(rids_here)
                    if pos == 0 or picks or drops:
                        stops.append((node, picks, drops))
                else:
                    # expand the zone visit into its member drops, deadline order
                    slot = events.get(pos, {})
                    per_node: dict[int, tuple[int, list[int]]] = {}
                    for (nd, dl, kind), rids_here in sorted(slot.items()):
                        cur = per_node.get(nd)
                        if cur is None:
                            per_node[nd] = (dl, list(rids_here))
                        else:
                            per_node[nd] = (min(cur[0], dl), cur[1] + rids_here)
                    for nd in sorted(per_node, key=lambda n: (per_node[n][0], n)):
                        stops.append((nd, [], per_node[nd][1]))
            plans[vid] = stops
    return request_vehicle, plans, sorted(set(unrealized))
