"""Geocoded collaboration networks and the analyses run on them."""

from __future__ import annotations

import logging
import warnings
from collections.abc import Iterable
from dataclasses import dataclass, field

from geosci._util import EmptyResultWarning
from geosci.cooc import CoocMatrix
from geosci.geo import GeoPoint, ResolutionReport

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Node:
    key: str
    point: GeoPoint
    occurrences: int
    degree: int = 0


@dataclass(frozen=True)
class Link:
    i: int
    j: int
    weight: int


@dataclass(frozen=True)
class GeoNetwork:
    """Nodes in key order and undirected weighted links with ``i < j``.

    Degrees are recomputed from the links on construction, so every
    subnetwork carries its own degrees.
    """

    nodes: tuple[Node, ...] = ()
    links: tuple[Link, ...] = ()

    def __post_init__(self):
        n = len(self.nodes)
        degree = [0] * n
        for link in self.links:
            if not 0 <= link.i < link.j < n:
                raise ValueError(f"bad link indices {link.i}, {link.j}")
            if link.weight <= 0:
                raise ValueError("links must have positive weight")
            degree[link.i] += 1
            degree[link.j] += 1
        nodes = tuple(
            nd if nd.degree == d else Node(nd.key, nd.point, nd.occurrences, d)
            for nd, d in zip(self.nodes, degree)
        )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "links", tuple(sorted(self.links, key=lambda l: (l.i, l.j))))

    def __len__(self):
        return len(self.nodes)

    @property
    def keys(self) -> list[str]:
        return [n.key for n in self.nodes]

    def node(self, key: str) -> Node:
        for n in self.nodes:
            if n.key == key:
                return n
        raise KeyError(key)

    def edge_set(self) -> set[tuple[str, str, int]]:
        return {(self.nodes[l.i].key, self.nodes[l.j].key, l.weight) for l in self.links}

    def neighbours(self) -> dict[str, set[str]]:
        adj = {n.key: set() for n in self.nodes}
        for l in self.links:
            a, b = self.nodes[l.i].key, self.nodes[l.j].key
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def subnetwork(self, keep: Iterable[str]) -> GeoNetwork:
        keep = set(keep)
        old_to_new = {}
        nodes = []
        for i, n in enumerate(self.nodes):
            if n.key in keep:
                old_to_new[i] = len(nodes)
                nodes.append(n)
        links = [
            Link(old_to_new[l.i], old_to_new[l.j], l.weight)
            for l in self.links
            if l.i in old_to_new and l.j in old_to_new
        ]
        return GeoNetwork(tuple(nodes), tuple(links))


def build_network(m: CoocMatrix, report: ResolutionReport) -> GeoNetwork:
    """Join a co-occurrence matrix with coordinates; unresolved keys are dropped."""
    kept = []
    for i, key in enumerate(m.keys):
        if key in report.resolved:
            kept.append(i)
        else:
            log.warning("dropping %s from the map: no coordinates", key)
    nodes = tuple(
        Node(m.keys[i], report.resolved[m.keys[i]], int(m.counts[i, i])) for i in kept
    )
    links = []
    for a, i in enumerate(kept):
        for b in range(a + 1, len(kept)):
            w = int(m.counts[i, kept[b]])
            if w > 0:
                links.append(Link(a, b, w))
    return GeoNetwork(nodes, tuple(links))


def classify_isolates(net: GeoNetwork) -> tuple[list[Node], list[Node]]:
    """(connected, unconnected) nodes."""
    connected = [n for n in net.nodes if n.degree > 0]
    unconnected = [n for n in net.nodes if n.degree == 0]
    return connected, unconnected


def k_core(net: GeoNetwork, k: int) -> GeoNetwork:
    """Largest subnetwork where every node has at least ``k`` links inside it.

    Peels nodes whose unweighted degree is below ``k`` until none is left,
    visiting candidates in key order.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    adj = net.neighbours()
    degree = {key: len(v) for key, v in adj.items()}
    removed: set[str] = set()
    queue = sorted(key for key, d in degree.items() if d < k)
    while queue:
        key = queue.pop(0)
        if key in removed:
            continue
        removed.add(key)
        log.debug("k=%d: peel %s", k, key)
        fresh = []
        for other in adj[key]:
            if other in removed:
                continue
            degree[other] -= 1
            if degree[other] == k - 1:
                fresh.append(other)
        queue = sorted(set(queue) | set(fresh))
    return net.subnetwork(key for key in degree if key not in removed)


def core_numbers(net: GeoNetwork) -> dict[str, int]:
    """Highest k for which each node survives in the k-core."""
    out = {key: 0 for key in net.keys}
    k = 1
    sub = net
    while len(sub := k_core(sub, k)):
        for key in sub.keys:
            out[key] = k
        k += 1
    return out


def region_filter(
    net: GeoNetwork, box: tuple[float, float, float, float]
) -> GeoNetwork:
    """Keep nodes with ``lat_min <= lat <= lat_max`` and ``lon_min <= lon <= lon_max``."""
    lat_min, lat_max, lon_min, lon_max = box
    keep = [
        n.key
        for n in net.nodes
        if lat_min <= n.point.lat <= lat_max and lon_min <= n.point.lon <= lon_max
    ]
    out = net.subnetwork(keep)
    if len(net) and not len(out):
        warnings.warn(f"region {box} contains no nodes", EmptyResultWarning, stacklevel=2)
    return out


EUROPE = (34.0, 72.0, -25.0, 45.0)
