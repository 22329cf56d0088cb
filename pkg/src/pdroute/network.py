"""Street network, shortest travel times and path reconstruction.

Routes live on a time-expanded version of the street graph: a robot either
moves along an edge (advancing the clock by the edge travel time) or waits in
place for one second. That graph is never materialized; a route is a list of
timestamped stops and the legs between them are shortest paths.
"""
from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra


class GraphError(ValueError):
    """Malformed or unusable graph input."""


class EdgeKind(enum.Enum):
    MOVE = "move"
    WAIT = "wait"


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    travel_time: int


@dataclass(frozen=True)
class StreetGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    # node id -> sorted tuple of (neighbor, travel time)
    neighbors: dict[int, tuple[tuple[int, int], ...]] = field(repr=False, compare=False, default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def coords(self, node: int) -> tuple[float, float]:
        nd = self.nodes[node - 1]
        return nd.x, nd.y


def build_graph(nodes: Iterable[Node], edges: Iterable[Edge]) -> StreetGraph:
    """Validate node/edge records and return an immutable graph."""
    nodes = tuple(sorted(nodes, key=lambda nd: nd.id))
    ids = [nd.id for nd in nodes]
    if ids != list(range(1, len(ids) + 1)):
        raise GraphError(f"node ids must be unique and dense 1..n, got {ids[:10]}...")
    if not nodes:
        raise GraphError("graph has no nodes")
    n = len(nodes)
    edges = tuple(edges)
    best: dict[tuple[int, int], int] = {}
    for k, e in enumerate(edges):
        for end in (e.source, e.target):
            if not 1 <= end <= n:
                raise GraphError(f"edge record {k} ({e.source}->{e.target}): dangling endpoint {end}")
        if not isinstance(e.travel_time, (int, np.integer)) or isinstance(e.travel_time, bool):
            raise GraphError(f"edge record {k}: travel time must be an integer, got {e.travel_time!r}")
        if e.travel_time < 1:
            raise GraphError(f"edge record {k}: travel time must be >= 1, got {e.travel_time}")
        if e.source == e.target:
            continue
        key = (e.source, e.target)
        best[key] = min(best.get(key, e.travel_time), int(e.travel_time))

    if n > 1:
        rows = [s - 1 for s, _ in best]
        cols = [t - 1 for _, t in best]
        adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        n_comp, _ = connected_components(adj, directed=True, connection="strong")
        if n_comp != 1:
            raise GraphError(f"graph is not strongly connected ({n_comp} components)")

    neighbors: dict[int, list[tuple[int, int]]] = {i: [] for i in range(1, n + 1)}
    for (s, t), w in best.items():
        neighbors[s].append((t, w))
    frozen = {i: tuple(sorted(v)) for i, v in neighbors.items()}
    return StreetGraph(nodes, edges, frozen)


def parse_graph(text: str, source: str = "<string>") -> StreetGraph:
    """Parse the record-per-line graph format.

    ``nodes <n>`` / ``node <id> <x> <y>`` / ``edges <m>`` /
    ``edge <from> <to> <seconds>``; ``#`` starts a comment.
    """
    nodes: list[Node] = []
    edges: list[Edge] = []
    n_decl = m_decl = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        where = f"{source}:{lineno}"
        try:
            if tag == "nodes" and len(parts) == 2:
                n_decl = int(parts[1])
            elif tag == "edges" and len(parts) == 2:
                m_decl = int(parts[1])
            elif tag == "node" and len(parts) == 4:
                if n_decl is None:
                    raise GraphError(f"{where}: node record before 'nodes' header")
                nodes.append(Node(int(parts[1]), float(parts[2]), float(parts[3])))
            elif tag == "edge" and len(parts) == 4:
                if m_decl is None:
                    raise GraphError(f"{where}: edge record before 'edges' header")
                tt = parts[3]
                if not tt.lstrip("-").isdigit():
                    raise GraphError(f"{where}: travel time must be an integer number of seconds, got {tt!r}")
                s, t = int(parts[1]), int(parts[2])
                if n_decl is not None and not (1 <= s <= n_decl and 1 <= t <= n_decl):
                    bad = s if not 1 <= s <= n_decl else t
                    raise GraphError(f"{where}: dangling edge endpoint {bad} (graph has {n_decl} nodes)")
                if int(tt) < 1:
                    raise GraphError(f"{where}: non-positive travel time {tt}")
                edges.append(Edge(s, t, int(tt)))
            else:
                raise GraphError(f"{where}: cannot parse {raw.strip()!r}")
        except ValueError as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"{where}: {exc}") from exc
    if n_decl is None or m_decl is None:
        raise GraphError(f"{source}: missing 'nodes' or 'edges' header")
    if len(nodes) != n_decl:
        raise GraphError(f"{source}: header declares {n_decl} nodes, found {len(nodes)}")
    if len(edges) != m_decl:
        raise GraphError(f"{source}: header declares {m_decl} edges, found {len(edges)}")
    return build_graph(nodes, edges)


def load_graph(path: str | PathLike) -> StreetGraph:
    with open(path) as fh:
        return parse_graph(fh.read(), str(path))


def format_graph(graph: StreetGraph) -> str:
    lines = [f"nodes {graph.n}"]
    lines += [f"node {nd.id} {nd.x:g} {nd.y:g}" for nd in graph.nodes]
    lines.append(f"edges {len(graph.edges)}")
    lines += [f"edge {e.source} {e.target} {e.travel_time}" for e in graph.edges]
    return "\n".join(lines) + "\n"


def save_graph(graph: StreetGraph, path: str | PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(format_graph(graph))


def grid_graph(width: int, height: int, travel_time: int = 60, spacing: float = 1.0) -> StreetGraph:
    """Bidirectional rectangular grid; node ids run row by row from 1."""
    nodes = []
    edges = []
    for r in range(height):
        for c in range(width):
            nid = r * width + c + 1
            nodes.append(Node(nid, c * spacing, r * spacing))
            if c + 1 < width:
                edges += [Edge(nid, nid + 1, travel_time), Edge(nid + 1, nid, travel_time)]
            if r + 1 < height:
                edges += [Edge(nid, nid + width, travel_time), Edge(nid + width, nid, travel_time)]
    return build_graph(nodes, edges)


class TravelTimeOracle:
    """Shortest-path travel times, computed one source row at a time and cached.

    Path reconstruction walks next hops; among equally short continuations the
    neighbor with the smallest id is taken, so paths are reproducible.
    """

    def __init__(self, graph: StreetGraph):
        self.graph = graph
        n = graph.n
        rows, cols, data = [], [], []
        for s, nbrs in graph.neighbors.items():
            for t, w in nbrs:
                rows.append(s - 1)
                cols.append(t - 1)
                data.append(w)
        self._matrix = csr_matrix((data, (rows, cols)), shape=(n, n))
        self._reverse = self._matrix.T.tocsr()
        self._rows: dict[int, list[int]] = {}
        self._cols: dict[int, list[int]] = {}
        self._lock = threading.Lock()

    def row(self, origin: int) -> list[int]:
        """Travel times from ``origin`` to every node, indexed by node id (slot 0 unused)."""
        r = self._rows.get(origin)
        if r is None:
            dist = dijkstra(self._matrix, directed=True, indices=origin - 1)
            r = [0] + [int(round(v)) for v in dist]
            with self._lock:
                self._rows.setdefault(origin, r)
        return r

    def column(self, target: int) -> list[int]:
        """Travel times from every node to ``target``, indexed by node id."""
        c = self._cols.get(target)
        if c is None:
            dist = dijkstra(self._reverse, directed=True, indices=target - 1)
            c = [0] + [int(round(v)) for v in dist]
            with self._lock:
                self._cols.setdefault(target, c)
        return c

    def precompute(self) -> None:
        for i in range(1, self.graph.n + 1):
            self.row(i)

    def time(self, a: int, b: int) -> int:
        return self.row(a)[b]

    def next_hop(self, a: int, b: int) -> int:
        """First node after ``a`` on the canonical shortest path to ``b``."""
        to_b = self.column(b)
        remaining = to_b[a]
        for nbr, w in self.graph.neighbors[a]:
            if w + to_b[nbr] == remaining:
                return nbr
        raise AssertionError(f"no shortest-path continuation from {a} to {b}")

    def path(self, a: int, b: int) -> list[int]:
        nodes = [a]
        while nodes[-1] != b:
            nodes.append(self.next_hop(nodes[-1], b))
        return nodes

    def diameter(self) -> int:
        return max(max(self.row(i)[1:]) for i in range(1, self.graph.n + 1))

    def matrix(self) -> np.ndarray:
        """Dense all-pairs matrix, 0-indexed."""
        return np.array([self.row(i)[1:] for i in range(1, self.graph.n + 1)], dtype=np.int64)


def shortest_time(oracle: TravelTimeOracle, source: int, target: int) -> int:
    return oracle.time(source, target)


def shortest_path_nodes(oracle: TravelTimeOracle, source: int, target: int) -> list[int]:
    return oracle.path(source, target)


def path_cost(graph: StreetGraph, nodes: list[int]) -> int:
    total = 0
    for a, b in zip(nodes, nodes[1:]):
        w = dict(graph.neighbors[a]).get(b)
        if w is None:
            raise GraphError(f"no edge {a}->{b}")
        total += w
    return total
