"""Shared fixtures: small networks and independent oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from ridepool.network import RoadNetwork


def make_network(edges, ids=None):
    """Directed network from (u, v, w) index triples."""
    n = 1 + max(max(u, v) for u, v, _ in edges)
    node_ids = ids or [f"n{i}" for i in range(n)]
    return RoadNetwork(node_ids, edges)


def grid_network(side, w=30):
    """side x side grid, bidirectional edges of w seconds."""
    edges = []

    def nid(i, j):
        return i * side + j

    for i in range(side):
        for j in range(side):
            if i + 1 < side:
                edges.append((nid(i, j), nid(i + 1, j), w))
                edges.append((nid(i + 1, j), nid(i, j), w))
            if j + 1 < side:
                edges.append((nid(i, j), nid(i, j + 1), w))
                edges.append((nid(i, j + 1), nid(i, j), w))
    net = RoadNetwork([f"g{i}_{j}" for i in range(side) for j in range(side)], edges)
    net.coords = np.array([(i, j) for i in range(side) for j in range(side)], dtype=float)
    net.coord_scale = float(w)
    return net


def ring_network(n, w=10):
    edges = []
    for i in range(n):
        edges.append((i, (i + 1) % n, w))
        edges.append(((i + 1) % n, i, w))
    return make_network(edges)


def random_strong_network(rng, n, extra_edges=2, w_lo=10, w_hi=60):
    """Random strongly connected digraph: a ring plus random chords."""
    edges = []
    perm = rng.permutation(n)
    for a, b in zip(perm, np.roll(perm, -1)):
        edges.append((int(a), int(b), int(rng.integers(w_lo, w_hi + 1))))
    for _ in range(extra_edges * n):
        a, b = rng.integers(0, n, size=2)
        if a != b:
            edges.append((int(a), int(b), int(rng.integers(w_lo, w_hi + 1))))
    seen = {}
    for u, v, w in edges:
        seen.setdefault((u, v), w)
    return make_network([(u, v, w) for (u, v), w in sorted(seen.items())])


def floyd_warshall_oracle(net):
    """Independent all-pairs oracle (different algorithm from the engine)."""
    n = len(net)
    inf = float("inf")
    dist = [[inf] * n for _ in range(n)]
    for i in range(n):
        dist[i][i] = 0
    for u, v, w in net.edges:
        dist[u][v] = min(dist[u][v], w)
    for k in range(n):
        dk = dist[k]
        for i in range(n):
            dik = dist[i][k]
            if dik == inf:
                continue
            row = dist[i]
            for j in range(n):
                alt = dik + dk[j]
                if alt < row[j]:
                    row[j] = alt
    return dist


def dfs_path_oracle(net, tau):
    """Naive recursive simple-path enumerator, kept independent of the
    production generator on purpose."""
    found = set()

    def walk(node, visited, nodes, offsets):
        found.add((tuple(nodes), tuple(offsets)))
        for nxt, w in net.adjacency[node]:
            if nxt in visited or offsets[-1] + w > tau:
                continue
            walk(nxt, visited | {nxt}, nodes + [nxt], offsets + [offsets[-1] + w])

    for start in range(len(net)):
        walk(start, {start}, [start], [0])
    return found


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@dataclass
class Instance:
    net: object
    graph: object
    demand: list
    vehicles: list
    t: int
    tau: int
    lam: int


def random_rpv_instance(rng, max_vehicles=4, max_requests=6, max_paths=30, with_zones=False):
    """A random small RPV graph produced by the real pipeline, or None when
    the draw exceeds the size caps."""
    from ridepool.network import Request, VehicleState
    from ridepool.pathstore import build_index, enumerate_paths
    from ridepool.rpv import build_rpv_graph
    from ridepool.zoning import cluster_hac, singleton_zoning

    n = int(rng.integers(8, 14))
    net = random_strong_network(rng, n, extra_edges=1)
    tau = int(rng.integers(80, 150))
    lam = int(rng.integers(150, 350))
    t = 60
    n_req = int(rng.integers(1, max_requests + 1))
    n_veh = int(rng.integers(1, max_vehicles + 1))
    demand = []
    for i in range(n_req):
        o, d = rng.choice(n, size=2, replace=False)
        demand.append(Request(i, int(o), int(d), int(rng.integers(1, t + 1))))
    vehicles = [
        VehicleState(
            id=v,
            location=int(rng.integers(0, n)),
            available_at=t + int(rng.integers(0, tau // 2)),
            max_capacity=int(rng.integers(1, 4)),
        )
        for v in range(n_veh)
    ]
    zonings = {0: singleton_zoning(net)}
    if with_zones:
        zonings[60] = cluster_hac(net, "complete", 60)
    paths = enumerate_paths(net, tau, max_paths=500_000)
    index = build_index(paths)
    graph = build_rpv_graph(t, index, demand, vehicles, net, zonings, tau, lam,
                            max_destinations=4 if with_zones else 12)
    if not graph.paths or len(graph.paths) > max_paths:
        return None
    return Instance(net, graph, demand, vehicles, t, tau, lam)


def brute_force_assignment(graph):
    """Exhaustive optimum of the path-assignment program: every vehicle
    takes one admissible path or none; requests greedily explored with
    pooled seat-profile feasibility; exact by full enumeration."""
    vids = sorted(graph.vehicle_edges)
    rids = sorted(graph.request_edges)
    best = 0

    def request_best(caps):
        nonlocal best

        def walk(k, count):
            nonlocal best
            if count + (len(rids) - k) <= best:
                return
            if k == len(rids):
                best = max(best, count)
                return
            rid = rids[k]
            for pid in graph.request_edges[rid]:
                if pid not in caps:
                    continue
                zp = graph.paths[pid]
                plan = zp.serves[rid]
                span = range(plan.pick_pos + 1, plan.drop_pos + 1)
                if all(caps[pid][n] >= 1 for n in span):
                    for n in span:
                        caps[pid][n] -= 1
                    walk(k + 1, count + 1)
                    for n in span:
                        caps[pid][n] += 1
            walk(k + 1, count)

        walk(0, 0)

    def vehicle_combos(i, chosen):
        if i == len(vids):
            caps = {}
            for vid, pid in chosen.items():
                zp = graph.paths[pid]
                arr = caps.setdefault(pid, [0] * zp.n_positions)
                for n, f in enumerate(zp.fits[vid].free_seats):
                    arr[n] += f
            request_best(caps)
            return
        vid = vids[i]
        vehicle_combos(i + 1, chosen)
        for pid in graph.vehicle_edges[vid]:
            chosen[vid] = pid
            vehicle_combos(i + 1, chosen)
            del chosen[vid]

    vehicle_combos(0, {})
    return best
