"""Clustering of road-network locations into zones of bounded internal travel time."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .network import ConfigError, RoadNetwork


@dataclass
class Zoning:
    """A partition of all network locations into zones.

    ``zone_size`` is the intra-zone travel-time bound in seconds; size 0
    means every zone is a single location. ``centers[z]`` is the member
    that minimizes the worst travel time to the rest of the zone and is
    used for zone-level travel-time estimates.
    """

    zone_size: int
    method: str
    assignment: dict[int, int]
    centers: dict[int, int]
    members: dict[int, list[int]] = field(repr=False)

    @property
    def num_zones(self) -> int:
        return len(self.centers)

    def zone_time(self, net: RoadNetwork, za: int, zb: int) -> int:
        return net.travel_time(self.centers[za], self.centers[zb])

    def center_of(self, loc: int) -> int:
        return self.centers[self.assignment[loc]]


def zone_of(zoning: Zoning, loc: int) -> int:
    try:
        return zoning.assignment[loc]
    except KeyError:
        raise LookupError(f"location {loc} not covered by zoning") from None


def _symmetric_times(net: RoadNetwork) -> np.ndarray:
    t = net.times.astype(float)
    return np.maximum(t, t.T)


def _finalize(net: RoadNetwork, clusters: list[list[int]], zone_size: int, method: str) -> Zoning:
    sym = _symmetric_times(net)
    clusters = sorted((sorted(c) for c in clusters), key=lambda c: c[0])
    assignment: dict[int, int] = {}
    centers: dict[int, int] = {}
    members: dict[int, list[int]] = {}
    for z, club in enumerate(clusters):
        for loc in club:
            assignment[loc] = z
        sub = sym[np.ix_(club, club)]
        worst = sub.max(axis=1)
        centers[z] = club[int(np.argmin(worst))]
        members[z] = club
    if len(assignment) != len(net):
        raise ConfigError("zoning does not cover every location")
    return Zoning(zone_size=zone_size, method=method, assignment=assignment, centers=centers, members=members)


def singleton_zoning(net: RoadNetwork) -> Zoning:
    """Zone size 0: the identity partition."""
    return _finalize(net, [[i] for i in range(len(net))], 0, "singleton")


def cluster_hac(net: RoadNetwork, linkage: str = "complete", threshold: int = 0) -> Zoning:
    """Agglomerative clustering over symmetrized travel times.

    Merging continues while the smallest inter-cluster linkage distance is
    within ``threshold``; complete linkage uses the max pairwise time, mean
    linkage the average. Equidistant merge candidates are broken by the
    lexicographically smallest pair of minimum member ids, which makes the
    result reproducible.
    """
    if threshold < 0:
        raise ConfigError("threshold must be non-negative")
    if linkage not in ("complete", "mean"):
        raise ConfigError(f"unknown linkage {linkage!r}")
    if threshold == 0:
        return _finalize(net, [[i] for i in range(len(net))], 0, f"hac_{linkage}")

    sym = _symmetric_times(net)
    n = len(net)
    clusters: dict[int, list[int]] = {i: [i] for i in range(n)}
    sizes = {i: 1 for i in range(n)}
    dist = sym.copy()
    np.fill_diagonal(dist, np.inf)
    alive = set(range(n))

    while len(alive) > 1:
        alive_idx = sorted(alive)
        sub = dist[np.ix_(alive_idx, alive_idx)]
        best = sub.min()
        if best > threshold:
            break
        cand = np.argwhere(np.isclose(sub, best, rtol=0.0, atol=1e-9))
        pairs = []
        for a, b in cand:
            if a >= b:
                continue
            i, j = alive_idx[a], alive_idx[b]
            pairs.append((min(clusters[i][0], clusters[j][0]), max(clusters[i][0], clusters[j][0]), i, j))
        pairs.sort()
        _, _, i, j = pairs[0]
        if clusters[j][0] < clusters[i][0]:
            i, j = j, i
        for k in alive:
            if k in (i, j):
                continue
            if linkage == "complete":
                d = max(dist[i, k], dist[j, k])
            else:
                d = (sizes[i] * dist[i, k] + sizes[j] * dist[j, k]) / (sizes[i] + sizes[j])
            dist[i, k] = dist[k, i] = d
        clusters[i] = sorted(clusters[i] + clusters[j])
        sizes[i] += sizes[j]
        del clusters[j], sizes[j]
        alive.remove(j)

    method = "hac_max" if linkage == "complete" else "hac_avg"
    return _finalize(net, list(clusters.values()), threshold, method)


def cluster_gbc(net: RoadNetwork, cell_size: int) -> Zoning:
    """Square-grid clustering over the planar embedding.

    ``cell_size`` is in seconds and is converted to coordinate units via the
    network's seconds-per-unit scale; only embedded networks (e.g. the
    synthetic city) support this method.
    """
    if net.coords is None or net.coord_scale is None:
        raise ConfigError("grid clustering needs node coordinates; use hac on plain edge lists")
    if cell_size < 0:
        raise ConfigError("cell size must be non-negative")
    if cell_size == 0:
        return _finalize(net, [[i] for i in range(len(net))], 0, "gbc")
    side = cell_size / net.coord_scale
    cells: dict[tuple[int, int], list[int]] = {}
    for i in range(len(net)):
        key = (int(np.floor(net.coords[i][0] / side)), int(np.floor(net.coords[i][1] / side)))
        cells.setdefault(key, []).append(i)
    return _finalize(net, list(cells.values()), cell_size, "gbc")


def save_zoning(zoning: Zoning, net: RoadNetwork, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location_id", "zone_id"])
        for loc in range(len(net)):
            writer.writerow([net.node_ids[loc], zoning.assignment[loc]])
