"""Offline enumeration, pruning and indexing of partial location paths."""

from __future__ import annotations

import hashlib
import pickle
import warnings
from dataclasses import dataclass, field

from .network import ConfigError, DemandTrace, RoadNetwork


class PathBudgetError(MemoryError):
    """Enumeration would exceed the path budget; use prune_paths_data_driven."""


@dataclass(frozen=True)
class PartialPath:
    """A simple location path with per-node offsets from the path start.

    Offsets are relative; the absolute start time is applied by the online
    stage when the path is anchored at a vehicle, so one stored path stands
    for every start-time copy.
    """

    id: int
    nodes: tuple[int, ...]
    offsets: tuple[int, ...]

    @property
    def duration(self) -> int:
        return self.offsets[-1]

    @property
    def start(self) -> int:
        return self.nodes[0]

    @property
    def end(self) -> int:
        return self.nodes[-1]

    def offset_of(self, node: int):
        try:
            return self.offsets[self.nodes.index(node)]
        except ValueError:
            return None


@dataclass
class PathIndex:
    """Retrieval keys over a path list.

    by_start maps (location, start bucket) to path ids (stored paths all
    start at relative offset 0); by_visit maps (location, offset bucket) to
    (path id, exact offset) pairs. Immutable once built; concurrent reads
    are safe.
    """

    bucket_width: int
    paths: list[PartialPath]
    by_start: dict[tuple[int, int], list[int]] = field(default_factory=dict, repr=False)
    by_visit: dict[tuple[int, int], list[tuple[int, int]]] = field(default_factory=dict, repr=False)

    def start_ids(self, loc: int) -> list[int]:
        return self.by_start.get((loc, 0), [])


def enumerate_paths(net: RoadNetwork, tau: int, max_paths: int = 2_000_000, stats: dict | None = None) -> list[PartialPath]:
    """All simple paths of duration at most tau from every start location,
    single-node paths included. Raises PathBudgetError beyond ``max_paths``
    with a pointer at the data-driven pruned generator. Start-node subtrees
    are independent, so enumeration can be partitioned across workers."""
    if tau < 0:
        raise ConfigError("tau must be non-negative")
    paths: list[PartialPath] = []
    explored = 0
    max_hops = 0
    on_path = [False] * len(net)

    def emit(nodes, offsets):
        if len(paths) >= max_paths:
            raise PathBudgetError(
                f"more than {max_paths} paths of span {tau}; "
                "generate with prune_paths_data_driven instead"
            )
        paths.append(PartialPath(id=len(paths), nodes=tuple(nodes), offsets=tuple(offsets)))

    for start in range(len(net)):
        nodes = [start]
        offsets = [0]
        on_path[start] = True
        explored += 1
        emit(nodes, offsets)
        # iterative DFS; each stack entry is the next adjacency slot to try
        stack = [0]
        while stack:
            cur = nodes[-1]
            slot = stack[-1]
            nbrs = net.adjacency[cur]
            advanced = False
            while slot < len(nbrs):
                nxt, w = nbrs[slot]
                slot += 1
                if on_path[nxt] or offsets[-1] + w > tau:
                    continue
                stack[-1] = slot
                nodes.append(nxt)
                offsets.append(offsets[-1] + w)
                on_path[nxt] = True
                explored += 1
                max_hops = max(max_hops, len(nodes) - 1)
                emit(nodes, offsets)
                stack.append(0)
                advanced = True
                break
            if not advanced:
                on_path[nodes.pop()] = False
                offsets.pop()
                stack.pop()
    if stats is not None:
        stats["explored_nodes"] = explored
        stats["max_hops"] = max_hops
        stats["max_out_degree"] = max((len(a) for a in net.adjacency), default=0)
    return paths


@dataclass
class PathPruneConfig:
    """Data-driven generation for spans too large to enumerate whole.

    The span is split into ``segment_durations`` (summing to the full tau);
    segment paths that averaged fewer than ``thresholds[i]`` historical
    request origins per minute are dropped before concatenation.
    """

    segment_durations: list[int]
    thresholds: list[float]
    history: DemandTrace

    def __post_init__(self):
        if not self.segment_durations or any(d <= 0 for d in self.segment_durations):
            raise ConfigError("segment durations must be positive")
        if len(self.thresholds) != len(self.segment_durations):
            raise ConfigError("one threshold per segment duration")

    @property
    def tau(self) -> int:
        return sum(self.segment_durations)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.segment_durations).encode())
        h.update(repr(self.thresholds).encode())
        for r in self.history:
            h.update(f"{r.origin},{r.destination},{r.arrival};".encode())
        return h.hexdigest()


def _segment_score(path: PartialPath, origin_counts, minutes: float) -> float:
    hits = sum(origin_counts.get(node, 0) for node in path.nodes)
    return hits / minutes


def prune_paths_data_driven(net: RoadNetwork, config: PathPruneConfig, max_paths: int = 2_000_000) -> list[PartialPath]:
    """Concatenate high-demand segment paths into full-span paths.

    Segments scoring below their threshold are dropped; surviving segments
    chain wherever one ends where the next starts without repeating nodes.
    Location pairs reachable within tau that end up with no kept path get
    their shortest path back, and single-node paths are always present so
    idle vehicles can anchor.
    """
    tau = config.tau
    origin_counts: dict[int, int] = {}
    for r in config.history:
        origin_counts[r.origin] = origin_counts.get(r.origin, 0) + 1
    if not origin_counts:
        warnings.warn("empty demand history: every segment scores 0; keeping shortest paths only", stacklevel=2)

    level: list[tuple[tuple[int, ...], tuple[int, ...]]] | None = None
    for dur, gamma in zip(config.segment_durations, config.thresholds):
        segs = enumerate_paths(net, dur, max_paths=max_paths)
        minutes = dur / 60.0
        kept = [
            (p.nodes, p.offsets)
            for p in segs
            if len(p.nodes) > 1 and _segment_score(p, origin_counts, minutes) >= gamma
        ]
        if level is None:
            level = kept
            continue
        merged = []
        by_start: dict[int, list[tuple[tuple[int, ...], tuple[int, ...]]]] = {}
        for nodes, offsets in kept:
            by_start.setdefault(nodes[0], []).append((nodes, offsets))
        for nodes, offsets in level:
            for nxt_nodes, nxt_offsets in by_start.get(nodes[-1], []):
                if set(nodes) & set(nxt_nodes[1:]):
                    continue
                base = offsets[-1]
                merged.append(
                    (nodes + nxt_nodes[1:], offsets + tuple(base + o for o in nxt_offsets[1:]))
                )
                if len(merged) > max_paths:
                    raise PathBudgetError("concatenation exceeds path budget; raise thresholds")
        level = merged

    result = {(nodes, offsets) for nodes, offsets in (level or [])}
    covered = {(nodes[0], nodes[-1]) for nodes, _ in result}
    n = len(net)
    for a in range(n):
        result.add(((a,), (0,)))
        for b in range(n):
            if a == b or net.travel_time(a, b) > tau or (a, b) in covered:
                continue
            seq = net.path_nodes(a, b)
            offs = [0]
            for prev, cur in zip(seq, seq[1:]):
                offs.append(offs[-1] + net.travel_time(prev, cur))
            result.add((tuple(seq), tuple(offs)))

    ordered = sorted(result, key=lambda item: (len(item[0]), item[0]))
    return [PartialPath(id=i, nodes=nodes, offsets=offsets) for i, (nodes, offsets) in enumerate(ordered)]


def build_index(paths: list[PartialPath], bucket_width: int = 10) -> PathIndex:
    """Index paths by start location and by every (location, offset bucket)
    they visit; bucket = floor(offset / bucket_width)."""
    if bucket_width <= 0:
        raise ConfigError("bucket width must be positive")
    index = PathIndex(bucket_width=bucket_width, paths=list(paths))
    for p in paths:
        index.by_start.setdefault((p.start, 0), []).append(p.id)
        for node, offset in zip(p.nodes, p.offsets):
            index.by_visit.setdefault((node, offset // bucket_width), []).append((p.id, offset))
    return index


def get_paths_from_index(index: PathIndex, loc: int, t_lo: int, t_hi: int) -> list[int]:
    """Ids of paths visiting loc at a relative offset within [t_lo, t_hi].

    Buckets give a superset that is filtered down to exact offsets.
    """
    if t_lo > t_hi:
        raise ConfigError("empty window: t_lo > t_hi")
    if t_hi < 0:
        return []
    w = index.bucket_width
    lo = max(t_lo, 0)
    found = []
    for bucket in range(lo // w, t_hi // w + 1):
        for pid, offset in index.by_visit.get((loc, bucket), ()):
            if t_lo <= offset <= t_hi:
                found.append(pid)
    found.sort()
    return found


def store_key(net: RoadNetwork, tau: int, prune: PathPruneConfig | None = None) -> str:
    h = hashlib.sha256()
    h.update(net.content_hash().encode())
    h.update(f"|tau={tau}|".encode())
    if prune is not None:
        h.update(prune.content_hash().encode())
    return h.hexdigest()[:24]


def save_store(paths: list[PartialPath], key: str, path):
    payload = {"key": key, "paths": [(p.nodes, p.offsets) for p in paths]}
    with open(path, "wb") as fh:
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)


def load_store(path, expected_key: str | None = None) -> list[PartialPath]:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if expected_key is not None and payload.get("key") != expected_key:
        raise ConfigError(f"path store {path} was built for a different network/tau/prune setup")
    return [PartialPath(id=i, nodes=tuple(n), offsets=tuple(o)) for i, (n, o) in enumerate(payload["paths"])]
