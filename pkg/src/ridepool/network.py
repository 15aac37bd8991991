"""Road graph, travel-time preprocessing, demand traces and the synthetic grid city."""

from __future__ import annotations

import bisect
import csv
import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


class NetworkFormatError(ValueError):
    """Raised when a graph or trace file cannot be parsed."""


class NetworkStructureError(ValueError):
    """Raised when a graph has no usable strongly connected component."""


class ConfigError(ValueError):
    """Raised on invalid generator or clustering configuration."""


@dataclass
class Request:
    id: int
    origin: int
    destination: int
    arrival: int

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError(f"request {self.id}: origin equals destination")
        if self.arrival < 0:
            raise ValueError(f"request {self.id}: negative arrival time")


@dataclass
class AssignedRequest:
    """A request committed to a vehicle, tracked until drop-off."""

    request: Request
    picked: bool = False
    pickup_time: int | None = None


@dataclass
class Stop:
    """One node visit on a vehicle plan; pickups/dropoffs hold request ids."""

    node: int
    time: int
    pickups: tuple[int, ...] = ()
    dropoffs: tuple[int, ...] = ()


@dataclass
class VehicleState:
    id: int
    location: int
    available_at: int
    max_capacity: int
    onboard: list[AssignedRequest] = field(default_factory=list)
    route: list[Stop] = field(default_factory=list)

    @property
    def seated(self) -> int:
        return sum(1 for a in self.onboard if a.picked)

    def anchor(self, now: int) -> tuple[int, int]:
        """Next (node, time) at which the vehicle can be redirected.

        Idle vehicles anchor at their location as soon as they are
        available; moving vehicles anchor at the next node on their plan.
        """
        for stop in self.route:
            if stop.time > now:
                return stop.node, stop.time
        return self.location, max(self.available_at, now)


class DemandTrace:
    """Requests sorted by arrival time."""

    def __init__(self, requests: list[Request]):
        self.requests = sorted(requests, key=lambda r: r.arrival)
        self._arrivals = [r.arrival for r in self.requests]

    def __len__(self):
        return len(self.requests)

    def __iter__(self):
        return iter(self.requests)

    def between(self, t_lo: int, t_hi: int) -> list[Request]:
        """Requests with arrival in (t_lo, t_hi]."""
        lo = bisect.bisect_right(self._arrivals, t_lo)
        hi = bisect.bisect_right(self._arrivals, t_hi)
        return self.requests[lo:hi]


class RoadNetwork:
    """Directed road graph with exact all-pairs travel times.

    Immutable after construction; safe to share across workers. ``times``
    holds the full travel-time matrix in seconds and ``pred`` the shortest
    path predecessor matrix used to reconstruct node sequences.
    """

    def __init__(self, node_ids, edges, coords=None, coord_scale=None, stations=()):
        self.node_ids = list(node_ids)
        self.index = {nid: i for i, nid in enumerate(self.node_ids)}
        if len(self.index) != len(self.node_ids):
            raise NetworkStructureError("duplicate node ids")
        self.edges = [(int(u), int(v), int(w)) for u, v, w in edges]
        n = len(self.node_ids)
        self.adjacency: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for u, v, w in self.edges:
            if w <= 0:
                raise NetworkStructureError(f"non-positive travel time on edge {u}->{v}")
            self.adjacency[u].append((v, w))
        for nbrs in self.adjacency:
            nbrs.sort()
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        self.coord_scale = coord_scale
        self.stations = tuple(stations)
        self.remapped: dict[str, str] = {}
        self._compute_all_pairs()

    def _compute_all_pairs(self):
        n = len(self.node_ids)
        if n == 0:
            raise NetworkStructureError("network has no nodes")
        rows = [u for u, _, _ in self.edges]
        cols = [v for _, v, _ in self.edges]
        data = [w for _, _, w in self.edges]
        graph = csr_matrix((data, (rows, cols)), shape=(n, n))
        dist, pred = dijkstra(graph, directed=True, return_predecessors=True)
        if np.isinf(dist).any():
            raise NetworkStructureError("network is not strongly connected")
        self.times = dist.astype(np.int32)
        self.pred = pred.astype(np.int32)
        # plain nested lists: per-lookup cost matters in the hot online loops
        self._times_list = self.times.tolist()

    def __len__(self):
        return len(self.node_ids)

    def travel_time(self, a: int, b: int) -> int:
        return self._times_list[a][b]

    def path_nodes(self, a: int, b: int) -> list[int]:
        """Node sequence of a shortest path from a to b, inclusive."""
        if a == b:
            return [a]
        seq = [b]
        cur = b
        while cur != a:
            cur = int(self.pred[a, cur])
            if cur < 0:
                raise NetworkStructureError(f"no path {a}->{b}")
            seq.append(cur)
        seq.reverse()
        return seq

    def next_hop(self, a: int, b: int) -> int:
        if a == b:
            return a
        return self.path_nodes(a, b)[1]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for nid in self.node_ids:
            h.update(nid.encode())
            h.update(b";")
        for u, v, w in sorted(self.edges):
            h.update(f"{u},{v},{w}|".encode())
        return h.hexdigest()

    def resolve(self, raw_id: str) -> int:
        """Map an external location id to a node index, using the
        nearest-node remapping for locations dropped at load time."""
        if raw_id in self.index:
            return self.index[raw_id]
        if raw_id in self.remapped:
            return self.index[self.remapped[raw_id]]
        raise KeyError(raw_id)


def _largest_scc(node_ids, adjacency):
    """Kosaraju's algorithm, iterative. Returns the members of the largest
    strongly connected component (ties broken by smallest member index)."""
    n = len(node_ids)
    visited = [False] * n
    order = []
    for start in range(n):
        if visited[start]:
            continue
        stack = [(start, 0)]
        visited[start] = True
        while stack:
            node, ptr = stack[-1]
            if ptr < len(adjacency[node]):
                stack[-1] = (node, ptr + 1)
                nxt = adjacency[node][ptr][0]
                if not visited[nxt]:
                    visited[nxt] = True
                    stack.append((nxt, 0))
            else:
                order.append(node)
                stack.pop()
    radj = [[] for _ in range(n)]
    for u in range(n):
        for v, _ in adjacency[u]:
            radj[v].append(u)
    comp = [-1] * n
    ncomp = 0
    for node in reversed(order):
        if comp[node] >= 0:
            continue
        stack = [node]
        comp[node] = ncomp
        while stack:
            cur = stack.pop()
            for nxt in radj[cur]:
                if comp[nxt] < 0:
                    comp[nxt] = ncomp
                    stack.append(nxt)
        ncomp += 1
    members = [[] for _ in range(ncomp)]
    for node, c in enumerate(comp):
        members[c].append(node)
    members = [sorted(m) for m in members]
    members.sort(key=lambda m: (-len(m), m[0]))
    return members[0]


def _dijkstra_to_kept(source, adjacency, keep_set):
    import heapq

    dist = {source: 0}
    heap = [(0, source)]
    best = None
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist.get(node, math.inf):
            continue
        if node in keep_set:
            if best is None or (d, node) < best:
                best = (d, node)
            continue
        if best is not None and d >= best[0]:
            continue
        for nxt, w in adjacency[node]:
            nd = d + w
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    return best


def _nearest_in_component(source, adjacency, radjacency, keep_set):
    """Closest kept node by travel time in either direction, ties broken by
    lowest node index. None when the dropped node is fully disconnected."""
    best_out = _dijkstra_to_kept(source, adjacency, keep_set)
    best_in = _dijkstra_to_kept(source, radjacency, keep_set)
    candidates = [b for b in (best_out, best_in) if b is not None]
    return min(candidates)[1] if candidates else None


def load_network(path) -> RoadNetwork:
    """Load an edge-list file ``from_id,to_id,travel_time_seconds`` (with
    header). Keeps the largest strongly connected component; dropped
    locations stay resolvable through their nearest kept node."""
    raw_nodes: list[str] = []
    node_index: dict[str, int] = {}
    raw_edges = []

    def intern(nid):
        if nid not in node_index:
            node_index[nid] = len(raw_nodes)
            raw_nodes.append(nid)
        return node_index[nid]

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise NetworkFormatError(f"{path}: line {lineno}: expected 3 columns, got {len(row)}")
            src, dst, raw_w = (c.strip() for c in row)
            try:
                w = int(round(float(raw_w)))
            except ValueError:
                raise NetworkFormatError(f"{path}: line {lineno}: bad travel time {raw_w!r}") from None
            if w <= 0:
                raise NetworkFormatError(f"{path}: line {lineno}: travel time must be positive")
            if src == dst:
                raise NetworkFormatError(f"{path}: line {lineno}: self loop on {src!r}")
            raw_edges.append((intern(src), intern(dst), w))

    if not raw_nodes:
        raise NetworkStructureError(f"{path}: no nodes found")

    adjacency = [[] for _ in raw_nodes]
    for u, v, w in raw_edges:
        adjacency[u].append((v, w))
    keep = _largest_scc(raw_nodes, adjacency)
    keep_set = set(keep)
    dropped = [i for i in range(len(raw_nodes)) if i not in keep_set]
    if dropped:
        warnings.warn(
            f"{len(dropped)} node(s) outside the largest strongly connected component dropped",
            stacklevel=2,
        )
    if len(keep) == 0:
        raise NetworkStructureError(f"{path}: empty strongly connected component")

    old_to_new = {old: new for new, old in enumerate(keep)}
    node_ids = [raw_nodes[old] for old in keep]
    edges = [
        (old_to_new[u], old_to_new[v], w)
        for u, v, w in raw_edges
        if u in keep_set and v in keep_set
    ]
    net = RoadNetwork(node_ids, edges)
    radjacency = [[] for _ in raw_nodes]
    for u, v, w in raw_edges:
        radjacency[v].append((u, w))
    for old in dropped:
        target = _nearest_in_component(old, adjacency, radjacency, keep_set)
        if target is not None:
            net.remapped[raw_nodes[old]] = raw_nodes[target]
    return net


def save_network(net: RoadNetwork, path, coords_path=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["from_id", "to_id", "travel_time_seconds"])
        for u, v, w in net.edges:
            writer.writerow([net.node_ids[u], net.node_ids[v], w])
    if coords_path is not None and net.coords is not None:
        with open(coords_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_id", "x", "y", "seconds_per_unit", "station"])
            stations = set(net.stations)
            for i, nid in enumerate(net.node_ids):
                writer.writerow(
                    [nid, net.coords[i][0], net.coords[i][1], net.coord_scale, int(i in stations)]
                )


def load_coords(net: RoadNetwork, path):
    """Attach a coordinate sidecar written by save_network."""
    coords = np.zeros((len(net), 2))
    stations = []
    scale = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            nid, x, y, s, flag = row
            if nid not in net.index:
                continue
            i = net.index[nid]
            coords[i] = (float(x), float(y))
            scale = float(s)
            if int(flag):
                stations.append(i)
    net.coords = coords
    net.coord_scale = scale
    net.stations = tuple(sorted(stations))
    return net


class TraceRowError(ValueError):
    def __init__(self, row_index, message):
        super().__init__(f"trace row {row_index}: {message}")
        self.row_index = row_index


def load_trace(path, net: RoadNetwork) -> DemandTrace:
    """Load a ``origin,destination,arrival_seconds`` CSV against a network.

    Locations outside the kept component are remapped to their nearest
    node by travel time; rows that cannot be resolved raise TraceRowError.
    Request ids are assigned in arrival order and stable across loads.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for rowno, row in enumerate(reader):
            if rowno == 0:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise TraceRowError(rowno, f"expected 3 columns, got {len(row)}")
            raw_o, raw_d, raw_a = (c.strip() for c in row)
            try:
                origin = net.resolve(raw_o)
            except KeyError:
                raise TraceRowError(rowno, f"unknown origin {raw_o!r}") from None
            try:
                dest = net.resolve(raw_d)
            except KeyError:
                raise TraceRowError(rowno, f"unknown destination {raw_d!r}") from None
            try:
                arrival = int(raw_a)
            except ValueError:
                raise TraceRowError(rowno, f"bad arrival time {raw_a!r}") from None
            if arrival < 0:
                raise TraceRowError(rowno, "negative arrival time")
            if origin == dest:
                raise TraceRowError(rowno, "origin and destination resolve to the same node")
            rows.append((arrival, rowno, origin, dest))
    rows.sort(key=lambda r: (r[0], r[1]))
    requests = [
        Request(id=i, origin=o, destination=d, arrival=a) for i, (a, _, o, d) in enumerate(rows)
    ]
    return DemandTrace(requests)


def save_trace(trace: DemandTrace, net: RoadNetwork, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["origin", "destination", "arrival_seconds"])
        for r in trace:
            writer.writerow([net.node_ids[r.origin], net.node_ids[r.destination], r.arrival])


@dataclass
class SyntheticConfig:
    """Grid city with one downtown square and ring of suburbs, each with a
    train station generating first/last-mile demand on a fixed period."""

    suburbs: int = 8
    downtown_size: int = 8
    suburb_size: int = 4
    edge_seconds: int = 30
    gap_units: float = 3.0
    horizon: int = 3600
    delta: int = 60
    uniform_rate: float = 4.0
    train_period: int = 180
    fl_batch: int = 2
    seed: int = 0


def _grid_block(prefix, size, x0, y0):
    nodes = {}
    for i in range(size):
        for j in range(size):
            nodes[f"{prefix}_{i}_{j}"] = (x0 + i, y0 + j)
    edges = []
    for i in range(size):
        for j in range(size):
            a = f"{prefix}_{i}_{j}"
            if i + 1 < size:
                edges.append((a, f"{prefix}_{i + 1}_{j}"))
            if j + 1 < size:
                edges.append((a, f"{prefix}_{i}_{j + 1}"))
    return nodes, edges


def generate_synthetic_city(config: SyntheticConfig) -> tuple[RoadNetwork, DemandTrace]:
    """Build the synthetic street network and a demand trace over it.

    The network has one central downtown grid and ``suburbs`` outer grids,
    each connected to downtown and carrying one train-station node. The
    trace mixes uniform background requests per decision epoch with
    first/last-mile batches at every station each ``train_period`` seconds.
    Deterministic for a fixed seed.
    """
    if config.suburbs < 1:
        raise ConfigError("need at least one suburb")
    if config.downtown_size < 2 or config.suburb_size < 1:
        raise ConfigError("grid sizes too small")
    if config.horizon % config.delta != 0:
        raise ConfigError("horizon must be a multiple of delta")

    ds, ss = config.downtown_size, config.suburb_size
    center = (ds - 1) / 2.0
    ring = ds / 2.0 + config.gap_units + ss / 2.0
    min_ring = config.suburbs * (ss + 1.0) / (2 * math.pi)
    ring = max(ring, min_ring)

    coords: dict[str, tuple[float, float]] = {}
    undirected: list[tuple[str, str]] = []
    nodes, edges = _grid_block("d", ds, 0, 0)
    coords.update(nodes)
    undirected.extend(edges)

    stations = []
    for k in range(config.suburbs):
        angle = 2 * math.pi * k / config.suburbs
        cx = center + ring * math.cos(angle)
        cy = center + ring * math.sin(angle)
        x0 = round(cx - (ss - 1) / 2.0)
        y0 = round(cy - (ss - 1) / 2.0)
        nodes, edges = _grid_block(f"s{k}", ss, x0, y0)
        for nid, xy in nodes.items():
            if xy in coords.values():
                raise ConfigError("suburb placement overlaps; reduce suburbs or enlarge gap")
        coords.update(nodes)
        undirected.extend(edges)
        # station: the suburb node nearest to downtown center
        station = min(
            nodes,
            key=lambda nid: (math.dist(nodes[nid], (center, center)), nid),
        )
        stations.append(station)
        # two connector roads from the suburb toward downtown
        suburb_sorted = sorted(
            nodes, key=lambda nid: (math.dist(nodes[nid], (center, center)), nid)
        )
        downtown_nodes = {nid: xy for nid, xy in coords.items() if nid.startswith("d_")}
        for conn in suburb_sorted[:2]:
            target = min(
                downtown_nodes,
                key=lambda nid: (math.dist(downtown_nodes[nid], coords[conn]), nid),
            )
            undirected.append((conn, target))

    node_ids = sorted(coords)
    index = {nid: i for i, nid in enumerate(node_ids)}
    directed = []
    for a, b in undirected:
        dist_units = math.dist(coords[a], coords[b])
        w = max(1, int(round(dist_units * config.edge_seconds)))
        directed.append((index[a], index[b], w))
        directed.append((index[b], index[a], w))

    net = RoadNetwork(
        node_ids,
        directed,
        coords=[coords[nid] for nid in node_ids],
        coord_scale=float(config.edge_seconds),
        stations=tuple(sorted(index[s] for s in stations)),
    )

    rng = np.random.default_rng(config.seed)
    n = len(net)
    raw: list[tuple[int, int, int]] = []
    for e in range(1, config.horizon // config.delta + 1):
        count = int(rng.poisson(config.uniform_rate))
        for _ in range(count):
            o = int(rng.integers(0, n))
            d = int(rng.integers(0, n))
            while d == o:
                d = int(rng.integers(0, n))
            a = int(rng.integers((e - 1) * config.delta + 1, e * config.delta + 1))
            raw.append((a, o, d))

    suburb_members = {
        s: [index[nid] for nid in node_ids if nid.startswith(f"s{k}_")]
        for k, s in enumerate(index[st] for st in stations)
    }
    t = config.train_period
    while t <= config.horizon:
        for station in net.stations:
            members = [m for m in suburb_members[station] if m != station]
            for _ in range(config.fl_batch):
                dest = int(members[rng.integers(0, len(members))])
                raw.append((t, station, dest))
            for _ in range(config.fl_batch):
                origin = int(members[rng.integers(0, len(members))])
                raw.append((t, origin, station))
        t += config.train_period

    raw.sort(key=lambda r: r[0])
    requests = [Request(id=i, origin=o, destination=d, arrival=a) for i, (a, o, d) in enumerate(raw)]
    return net, DemandTrace(requests)
