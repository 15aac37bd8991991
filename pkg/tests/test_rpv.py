import itertools

import pytest

from conftest import make_network, random_strong_network
from ridepool.network import AssignedRequest, Request, VehicleState
from ridepool.pathstore import build_index, enumerate_paths
from ridepool.rpv import (
    build_rpv_graph,
    complete_paths,
    dump_rpv,
    get_paths_for_vehicle,
    identify_edges,
    process_offline_paths,
    realize_assignment,
)
from ridepool.zoning import cluster_hac, singleton_zoning


def line_network(n=4, w=50):
    edges = []
    for i in range(n - 1):
        edges.append((i, i + 1, w))
        edges.append((i + 1, i, w))
    return make_network(edges)


def vehicle(vid, loc, when=0, cap=2, onboard=()):
    return VehicleState(id=vid, location=loc, available_at=when, max_capacity=cap,
                        onboard=list(onboard))


def singleton_zonings(net):
    return {0: singleton_zoning(net)}


def test_no_vehicles_gives_no_candidates():
    net = line_network()
    index = build_index(enumerate_paths(net, 120))
    reqs = [Request(0, 0, 2, 0)]
    assert process_offline_paths(0, index, reqs, [], net, 120, 200) == []


def test_drop_window_formula():
    net = line_network()
    index = build_index(enumerate_paths(net, 120))
    req = Request(0, 0, 2, 0)  # travel time 100
    cands = process_offline_paths(0, index, [req], [vehicle(0, 0)], net, 120, 200)
    assert cands
    for cand in cands:
        entry = cand.new_requests[0]
        assert entry.lb == 100  # arrival + direct travel
        assert entry.ub == 300  # lb + lambda
    # two shapes survive: drop handled in the prefix, or left to the suffix
    shapes = {(cand.prefix_nodes, tuple(sorted(cand.suffix_dests))) for cand in cands}
    assert shapes == {((0,), (2,)), ((0, 2), ())}


def test_tight_deadline_removes_request_from_short_paths():
    net = line_network()
    index = build_index(enumerate_paths(net, 120))
    # ub relative to the epoch は 100 + 10 < tau: only paths visiting the
    # destination inside the prefix may keep the request
    req = Request(0, 0, 2, 0)
    cands = process_offline_paths(0, index, [req], [vehicle(0, 0)], net, 120, 10)
    assert cands
    for cand in cands:
        assert 2 in cand.prefix_nodes
        assert not cand.suffix_dests


def oracle_rule_replay(t, paths, demand, vehicles, net, tau, lam):
    """Independent replay of the processing rules over every stored path."""
    cand_pairs = set()
    dest_pairs = set()
    anchors = set()
    for veh in vehicles:
        when = max(veh.available_at, t)
        if when - t < tau:
            anchors.add((veh.location, when))
    for (loc, start_abs) in anchors:
        s = start_abs - t
        for path in paths:
            if path.nodes[0] != loc:
                continue
            kept = {}
            for req in demand:
                if req.origin not in path.nodes:
                    continue
                off = path.offsets[path.nodes.index(req.origin)]
                if not (req.arrival - t - s <= off <= req.arrival - t + tau - s):
                    continue
                lb = req.arrival + net.travel_time(req.origin, req.destination)
                ub = lb + lam
                d_off = (
                    path.offsets[path.nodes.index(req.destination)]
                    if req.destination in path.nodes
                    else None
                )
                in_prefix = d_off is not None and d_off > off and lb <= start_abs + d_off <= ub
                if in_prefix:
                    kept[req.id] = None
                elif ub - t < tau and d_off is None:
                    continue
                else:
                    kept[req.id] = req.destination
            for rid, dest in kept.items():
                cand_pairs.add(((loc, start_abs), rid))
                if dest is not None:
                    dest_pairs.add(((loc, start_abs), dest))
    return cand_pairs, dest_pairs


def test_processing_matches_rule_replay(rng):
    for trial in range(5):
        net = random_strong_network(rng, 20, extra_edges=1)
        tau, lam, t = 120, 240, 600
        paths = enumerate_paths(net, tau)
        index = build_index(paths)
        demand = []
        for i in range(10):
            o, d = rng.choice(len(net), size=2, replace=False)
            demand.append(Request(i, int(o), int(d), int(rng.integers(541, 601))))
        vehicles = [
            vehicle(v, int(rng.integers(0, len(net))), when=600 + int(rng.integers(0, 60)))
            for v in range(3)
        ]
        cands = process_offline_paths(t, index, demand, vehicles, net, tau, lam)
        got_pairs = {
            ((c.anchor_loc, c.start_time), rid) for c in cands for rid in c.new_requests
        }
        got_dests = {
            ((c.anchor_loc, c.start_time), d) for c in cands for d in c.suffix_dests
        }
        want_pairs, want_dests = oracle_rule_replay(t, paths, demand, vehicles, net, tau, lam)
        assert got_pairs == want_pairs
        assert got_dests == want_dests


def test_get_paths_for_vehicle_empty_q_no_change():
    net = line_network()
    index = build_index(enumerate_paths(net, 120))
    per_path = {0: {"new": {}, "veh": {}}}
    before = {k: dict(v) for k, v in per_path.items()}
    get_paths_for_vehicle(0, index, vehicle(0, 0), per_path, net, 120, 200)
    assert per_path == before


def test_picked_passenger_restricts_vehicle_paths():
    net = line_network(5)
    tau, lam = 120, 100
    index = build_index(enumerate_paths(net, tau))
    onboard = AssignedRequest(Request(50, 1, 2, 0), picked=True)
    veh = vehicle(0, 0, when=0, onboard=[onboard])
    new_req = Request(0, 0, 1, 0)
    cands = process_offline_paths(0, index, [new_req], [veh], net, tau, lam)
    # lb = 0 + 50, ub = 150 >= tau: vehicle keeps candidacy even on paths
    # that push the drop to the suffix
    eligible = [c for c in cands if veh.id in c.vehicle_q]
    assert eligible
    for cand in eligible:
        assert 2 in cand.prefix_nodes or 2 in cand.suffix_dests


def test_vehicle_needs_all_q_covered():
    net = line_network(6)
    tau, lam = 150, 400
    index = build_index(enumerate_paths(net, tau))
    q = [
        AssignedRequest(Request(50, 0, 4, 0), picked=True),
        AssignedRequest(Request(51, 1, 5, 0)),  # pickup still pending at node 1
    ]
    veh = vehicle(0, 0, when=0, cap=3, onboard=q)
    new_req = Request(0, 0, 2, 0)
    cands = process_offline_paths(0, index, [new_req], [veh], net, tau, lam)
    for cand in cands:
        if veh.id in cand.vehicle_q:
            assert set(cand.vehicle_q[veh.id]) == {50, 51}
            assert 1 in cand.prefix_nodes  # pending pickup must be visitable
    assert any(veh.id in cand.vehicle_q for cand in cands)


# ------------------------------------------------------------ completion


def completion_candidates(net, dests, t=0):
    """One candidate anchored at node 0 with the given suffix windows."""
    index = build_index(enumerate_paths(net, 1))
    reqs = [Request(i, 0, d, t) for i, (d, _, _) in enumerate(dests)]
    cands = process_offline_paths(
        t, index, reqs, [vehicle(0, 0, when=t)], net, 1, 10_000
    )
    del index
    assert len(cands) == 1
    cand = cands[0]
    cand.suffix_dests = {d: (lb, ub) for d, lb, ub in dests}
    return cand


def test_zero_dropoffs_completion_is_prefix():
    net = line_network()
    index = build_index(enumerate_paths(net, 120))
    req = Request(0, 0, 2, 0)
    cands = process_offline_paths(0, index, [req], [vehicle(0, 0)], net, 120, 200)
    prefix_served = [c for c in cands if not c.suffix_dests]
    comps = complete_paths(0, prefix_served, singleton_zonings(net), net)
    assert all(c.visits == () for c in comps)
    assert len(comps) == len(prefix_served)


def test_two_dropoffs_one_zone_single_visit():
    net = line_network(4)
    zoning = cluster_hac(net, "complete", 60)  # nodes 50s apart pairwise merge
    req = Request(0, 0, 2, 0)
    index = build_index(enumerate_paths(net, 60))
    cands = process_offline_paths(0, index, [req], [vehicle(0, 0)], net, 60, 10_000)
    cand = [c for c in cands if c.prefix_nodes == (0,)][0]
    cand.suffix_dests = {2: (100, 2000), 3: (150, 2000)}
    if zoning.assignment[2] == zoning.assignment[3]:
        zonings = {zoning.zone_size: zoning}
        comps = complete_paths(0, [cand], zonings, net, max_destinations=1)
        best = max(comps, key=lambda c: len(c.visits))
        assert len(best.visits) == 1
        assert set(best.visits[0].members) == {2, 3}


def permutation_oracle(net, start, start_time, dests):
    """All feasible visit orders over subsets of destinations; returns the
    maximal served sets (zone size 0: a visit serves its destination iff it
    lands inside the window)."""
    families = set()
    names = sorted(dests)
    for k in range(len(names) + 1):
        for subset in itertools.combinations(names, k):
            for order in itertools.permutations(subset):
                cur, tm = start, start_time
                ok = True
                for d in order:
                    tm += net.travel_time(cur, d)
                    cur = d
                    lb, ub = dests[d]
                    if not (lb <= tm <= ub):
                        ok = False
                        break
                if ok:
                    families.add(frozenset(order))
    maximal = {f for f in families if not any(f < g for g in families)}
    return maximal


def engine_served_families(net, cand, comps):
    families = set()
    for comp in comps:
        served = set()
        tm = cand.prefix_times[-1]
        for visit in comp.visits:
            lb, ub = cand.suffix_dests[visit.members[0]]
            if lb <= visit.time <= ub:
                served.add(visit.members[0])
        families.add(frozenset(served))
    return {f for f in families if not any(f < g for g in families)}


def test_completion_matches_permutation_oracle(rng):
    for trial in range(12):
        net = random_strong_network(rng, 10, extra_edges=2)
        n_dests = int(rng.integers(2, 6))
        choices = rng.choice(range(1, 10), size=n_dests, replace=False)
        dests = {}
        for d in choices:
            lb = int(rng.integers(0, 150))
            dests[int(d)] = (lb, lb + int(rng.integers(50, 250)))
        cand = completion_candidates(net, [(d, lb, ub) for d, (lb, ub) in dests.items()])
        comps = complete_paths(0, [cand], singleton_zonings(net), net)
        got = engine_served_families(net, cand, comps)
        want = permutation_oracle(net, cand.prefix_nodes[-1], cand.prefix_times[-1], dests)
        assert got == want


def test_completion_budget_flags_truncation():
    net = random_strong_network(__import__("numpy").random.default_rng(0), 12, extra_edges=3)
    dests = {d: (0, 100_000) for d in range(1, 9)}
    cand = completion_candidates(net, [(d, lb, ub) for d, (lb, ub) in dests.items()])
    comps = complete_paths(0, [cand], singleton_zonings(net), net, node_budget=20)
    assert any(c.truncated for c in comps)
    full = complete_paths(0, [cand], singleton_zonings(net), net, node_budget=10_000_000)
    assert not any(c.truncated for c in full)


def test_completion_monotone_in_max_destinations(rng):
    net = random_strong_network(rng, 12, extra_edges=2)
    zonings = {0: singleton_zoning(net), 120: cluster_hac(net, "complete", 120)}
    dests = []
    for d in range(1, 7):
        lb = int(rng.integers(0, 100))
        dests.append((d, lb, lb + 400))
    cand = completion_candidates(net, dests)
    small = complete_paths(0, [cand], zonings, net, max_destinations=2)
    large = complete_paths(0, [cand], zonings, net, max_destinations=12)

    def served_sets(comps):
        out = set()
        for comp in comps:
            served = set()
            for visit in comp.visits:
                for m in visit.members:
                    lb, ub = cand.suffix_dests[m]
                    if lb - visit.zone_size <= visit.time <= ub - visit.zone_size:
                        served.add(m)
            out.add(frozenset(served))
        return out

    for fam in served_sets(small):
        assert any(fam <= other for other in served_sets(large))


# -------------------------------------------------------- identify edges


def build_small_graph(lam=200):
    net = line_network()
    tau = 120
    index = build_index(enumerate_paths(net, tau))
    reqs = [Request(0, 0, 2, 0)]
    vehs = [vehicle(0, 0, cap=2)]
    graph = build_rpv_graph(0, index, reqs, vehs, net, singleton_zonings(net), tau, lam)
    return net, graph, reqs, vehs


def test_small_graph_edges_and_redundancy():
    net, graph, reqs, vehs = build_small_graph()
    # both completions serve the same request with the same vehicle: the
    # dominated one is pruned
    assert len(graph.paths) == 1
    assert graph.request_edges[0] == [0]
    assert graph.vehicle_edges[0] == [0]
    zp = graph.paths[0]
    assert zp.serves[0].pick_time == 0


def test_every_path_has_both_edge_types(rng):
    for _ in range(4):
        net = random_strong_network(rng, 15, extra_edges=1)
        index = build_index(enumerate_paths(net, 120))
        reqs = []
        for i in range(6):
            o, d = rng.choice(len(net), size=2, replace=False)
            reqs.append(Request(i, int(o), int(d), int(rng.integers(0, 60))))
        vehs = [vehicle(v, int(rng.integers(0, len(net))), when=60) for v in range(3)]
        graph = build_rpv_graph(60, index, reqs, vehs, net, singleton_zonings(net), 120, 300)
        for zp in graph.paths:
            assert zp.serves and zp.fits


def test_free_seats_empty_vehicle():
    net, graph, reqs, vehs = build_small_graph()
    fit = graph.paths[0].fits[0]
    assert all(f == vehs[0].max_capacity for f in fit.free_seats)


def test_free_seats_with_onboard_drop():
    net = line_network(4)
    tau, lam = 120, 400
    index = build_index(enumerate_paths(net, tau))
    onboard = AssignedRequest(Request(50, 1, 2, 10), picked=True)
    veh = vehicle(0, 0, when=120, cap=2, onboard=[onboard])
    new_req = Request(0, 0, 3, 120)  # forces prefix 0 -> 2 (q drop) -> 3
    graph = build_rpv_graph(
        120, index, [new_req], [veh], net, singleton_zonings(net), tau, lam
    )
    zp = next(p for p in graph.paths if 3 in zp_all_nodes(p))
    fit = zp.fits[veh.id]
    drop_pos = fit.q_plans[50].drop_pos
    for n in range(zp.n_positions):
        expected = veh.max_capacity - 1 if n <= drop_pos else veh.max_capacity
        assert fit.free_seats[n] == expected


def zp_all_nodes(zp):
    nodes = set(zp.prefix_nodes)
    for v in zp.suffix:
        nodes.update(v.members)
    return nodes


def test_b_flags_match_definition_replay(rng):
    for _ in range(4):
        net = random_strong_network(rng, 12, extra_edges=2)
        index = build_index(enumerate_paths(net, 150))
        reqs = []
        for i in range(5):
            o, d = rng.choice(len(net), size=2, replace=False)
            reqs.append(Request(i, int(o), int(d), int(rng.integers(0, 60))))
        vehs = [vehicle(v, int(rng.integers(0, len(net))), when=60, cap=3) for v in range(2)]
        graph = build_rpv_graph(60, index, reqs, vehs, net, singleton_zonings(net), 150, 300)
        for zp in graph.paths:
            for rid, plan in zp.serves.items():
                for n in range(zp.n_positions):
                    # Table-style definition: picked before n, not yet dropped
                    expected = 1 if (plan.pick_pos < n and n <= plan.drop_pos) else 0
                    assert zp.b_flag(rid, n) == expected
                # the serving drop visit really visits the destination node
                if plan.via_zone:
                    members = zp.suffix[plan.drop_pos - len(zp.prefix_nodes)].members
                    assert graph.requests[rid].destination in members
                else:
                    assert zp.prefix_nodes[plan.drop_pos] == graph.requests[rid].destination


def test_exact_windows_enforced(rng):
    # delay re-check: merged windows may admit violations, identify must not
    net = line_network(5)
    tau, lam = 120, 60
    index = build_index(enumerate_paths(net, tau))
    reqs = [Request(0, 0, 1, 0), Request(1, 0, 4, 0)]
    vehs = [vehicle(0, 0, cap=2)]
    graph = build_rpv_graph(0, index, reqs, vehs, net, singleton_zonings(net), tau, lam)
    for zp in graph.paths:
        for rid, plan in zp.serves.items():
            req = graph.requests[rid]
            direct = net.travel_time(req.origin, req.destination)
            assert plan.drop_time <= req.arrival + direct + lam
            assert plan.pick_time <= req.arrival + tau


def test_realize_splits_by_capacity():
    net = line_network(4)
    tau, lam = 120, 300
    index = build_index(enumerate_paths(net, tau))
    reqs = [Request(0, 0, 2, 0), Request(1, 0, 2, 0), Request(2, 0, 2, 0)]
    vehs = [vehicle(0, 0, cap=2), vehicle(1, 0, cap=1)]
    graph = build_rpv_graph(0, index, reqs, vehs, net, singleton_zonings(net), tau, lam)
    pid = max(graph.paths, key=lambda p: len(p.serves)).id
    request_path = {rid: pid for rid in (0, 1, 2)}
    vehicle_path = {0: pid, 1: pid}
    rv, plans, unrealized = realize_assignment(graph, request_path, vehicle_path, net)
    assert not unrealized
    assert sorted(rv) == [0, 1, 2]
    loads = {0: 0, 1: 0}
    for rid, vid in rv.items():
        loads[vid] += 1
    assert loads[0] <= 2 and loads[1] <= 1


def test_dump_contains_paths_and_edges():
    net, graph, _, _ = build_small_graph()
    text = dump_rpv(graph, net)
    assert "path 0" in text and "Pr[0]" in text and "Pv[0]" in text
