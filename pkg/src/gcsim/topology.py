"""Communication graph model.

A network is an undirected connected graph whose edges carry per-direction
delay bounds and two uncertainty parameters: a fractional asymmetry bound
(``eps_d``) on the forward/backward delay difference, and an absolute
timestamping uncertainty (``eps_m``) per exchange.  From these each edge
gets a strictly positive error weight ``kappa`` that bounds the worst-case
neighbour-estimate error; all algorithmic distance queries run over the
kappa-weighted graph.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParameterError

__all__ = [
    "EdgeParams",
    "NetworkGraph",
    "validate_graph",
    "hop_distance",
    "hop_diameter",
    "edge_kappa",
    "kappa_weights",
    "weighted_distance",
    "kappa_distance_matrix",
]


@dataclass(frozen=True)
class EdgeParams:
    """Link parameters for one bidirectional edge.

    ``fwd_delay``/``bwd_delay`` are per-direction base delays in seconds; a
    transmitted message additionally draws a jitter term uniform in
    ``[0, jitter]``, so the worst-case delay of a direction is its base plus
    the full jitter width.  ``eps_d`` bounds the fractional difference
    between the two directions, ``eps_m`` the absolute measurement
    uncertainty per exchange, and ``length`` is descriptive metadata only.
    """

    fwd_delay: float
    bwd_delay: float
    jitter: float = 0.0
    eps_d: float = 0.0
    eps_m: float = 0.0
    length: float = 1.0

    def delay_bound(self, forward: bool) -> float:
        """Worst-case delay for one direction: base plus full jitter."""
        base = self.fwd_delay if forward else self.bwd_delay
        return base + self.jitter

    @property
    def max_delay_bound(self) -> float:
        return max(self.fwd_delay, self.bwd_delay) + self.jitter


@dataclass(frozen=True)
class NetworkGraph:
    """Undirected connected graph with per-edge parameters.

    Nodes are dense integers ``0..n-1``.  Edges are stored with ``u < v``;
    the ``fwd`` direction of :class:`EdgeParams` means ``u -> v``.
    Immutable after construction; distance queries are pure.
    """

    n: int
    edges: tuple[tuple[int, int, EdgeParams], ...]
    d_max: float

    @staticmethod
    def build(n: int, edges, d_max: float) -> "NetworkGraph":
        """Normalize an edge list into a NetworkGraph (u < v per edge)."""
        norm = []
        for u, v, p in edges:
            if u == v:
                raise ParameterError(f"self-loop at node {u}")
            if u > v:
                u, v = v, u
                p = EdgeParams(
                    fwd_delay=p.bwd_delay,
                    bwd_delay=p.fwd_delay,
                    jitter=p.jitter,
                    eps_d=p.eps_d,
                    eps_m=p.eps_m,
                    length=p.length,
                )
            norm.append((u, v, p))
        norm.sort(key=lambda e: (e[0], e[1]))
        return NetworkGraph(n=n, edges=tuple(norm), d_max=d_max)

    @cached_property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {v: [] for v in range(self.n)}
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return {v: tuple(sorted(nbrs)) for v, nbrs in adj.items()}

    @cached_property
    def _edge_map(self) -> dict[tuple[int, int], EdgeParams]:
        return {(u, v): p for u, v, p in self.edges}

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._edge_map

    def edge(self, u: int, v: int) -> EdgeParams:
        try:
            return self._edge_map[(min(u, v), max(u, v))]
        except KeyError:
            raise ParameterError(f"no edge between {u} and {v}") from None

    def delay_bound(self, src: int, dst: int) -> float:
        """Worst-case delay bound for the directed hop src -> dst."""
        p = self.edge(src, dst)
        return p.delay_bound(forward=src < dst)

    def base_delay(self, src: int, dst: int) -> float:
        p = self.edge(src, dst)
        return p.fwd_delay if src < dst else p.bwd_delay


def validate_graph(g: NetworkGraph) -> list[str]:
    """Check every structural invariant; return one message per violation.

    An empty list means the graph is usable by the engine.
    """
    problems: list[str] = []
    if g.n < 1:
        return ["graph has no nodes"]
    seen = set()
    for u, v, p in g.edges:
        tag = f"edge ({u},{v})"
        if not (0 <= u < g.n and 0 <= v < g.n):
            problems.append(f"{tag}: node id out of range 0..{g.n - 1}")
            continue
        if (u, v) in seen:
            problems.append(f"{tag}: duplicate edge")
        seen.add((u, v))
        if p.fwd_delay <= 0 or p.bwd_delay <= 0:
            problems.append(f"{tag}: delays must be positive")
        if p.jitter < 0:
            problems.append(f"{tag}: jitter must be non-negative")
        if p.eps_d < 0:
            problems.append(f"{tag}: eps_d must be non-negative")
        if p.eps_m < 0:
            problems.append(f"{tag}: eps_m must be non-negative")
        if p.length <= 0:
            problems.append(f"{tag}: length must be positive")
        for forward in (True, False):
            if p.delay_bound(forward) >= g.d_max:
                problems.append(
                    f"{tag}: delay bound {p.delay_bound(forward)!r} not below d_max {g.d_max!r}"
                )
        asym = abs(p.fwd_delay - p.bwd_delay) + p.jitter
        allowed = p.max_delay_bound * p.eps_d
        if asym > allowed + 1e-15:
            problems.append(f"{tag}: asymmetry {asym:g} > {allowed:g}")
    if not _connected(g):
        problems.append("graph not connected")
    return problems


def _connected(g: NetworkGraph) -> bool:
    if g.n == 1:
        return True
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w in g.neighbors(v):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == g.n


def _bfs_levels(g: NetworkGraph, src: int) -> list[int]:
    dist = [-1] * g.n
    dist[src] = 0
    queue = deque([src])
    while queue:
        v = queue.popleft()
        for w in g.neighbors(v):
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def hop_distance(g: NetworkGraph, v: int, w: int) -> int:
    """Number of edges on a shortest unweighted path from v to w."""
    if not (0 <= v < g.n and 0 <= w < g.n):
        raise ParameterError(f"node out of range: {v}, {w}")
    if v == w:
        return 0
    d = _bfs_levels(g, v)[w]
    if d < 0:
        raise ParameterError(f"nodes {v} and {w} are not connected")
    return d


def hop_diameter(g: NetworkGraph) -> int:
    """Maximum hop distance over all node pairs."""
    best = 0
    for src in range(g.n):
        levels = _bfs_levels(g, src)
        if min(levels) < 0:
            raise ParameterError("graph not connected")
        best = max(best, max(levels))
    return best


def edge_kappa(e: EdgeParams, theta: float) -> float:
    """Static error weight of one edge.

    Twice the worst-direction delay bound scaled by drift-plus-asymmetry,
    plus twice the measurement uncertainty.  This upper-bounds the
    neighbour-estimate error an exchange over the edge can incur.
    """
    if theta < 1.0:
        raise ParameterError(f"theta must be >= 1, got {theta!r}")
    return 2.0 * (e.max_delay_bound * (theta - 1.0 + e.eps_d) + e.eps_m)


def kappa_weights(g: NetworkGraph, theta: float) -> dict[tuple[int, int], float]:
    """kappa weight per undirected edge, keyed (u, v) with u < v."""
    return {(u, v): edge_kappa(p, theta) for u, v, p in g.edges}


def _dijkstra(g: NetworkGraph, kappa: dict[tuple[int, int], float], src: int) -> list[float]:
    dist = [float("inf")] * g.n
    dist[src] = 0.0
    heap = [(0.0, src)]
    done = [False] * g.n
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for w in g.neighbors(v):
            k = kappa[(min(v, w), max(v, w))]
            nd = d + k
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def weighted_distance(
    g: NetworkGraph,
    kappa: dict[tuple[int, int], float],
    v: int,
    w: int,
    multiplier: int = 1,
) -> float:
    """``multiplier`` times the minimum kappa-sum over paths from v to w."""
    if multiplier < 1:
        raise ParameterError(f"multiplier must be a positive integer, got {multiplier!r}")
    for k in kappa.values():
        if k <= 0:
            raise ParameterError("kappa weights must be strictly positive")
    if not (0 <= v < g.n and 0 <= w < g.n):
        raise ParameterError(f"node out of range: {v}, {w}")
    return multiplier * _dijkstra(g, kappa, v)[w]


def kappa_distance_matrix(g: NetworkGraph, kappa: dict[tuple[int, int], float]) -> np.ndarray:
    """All-pairs kappa-weighted shortest-path distances (dense n x n)."""
    out = np.empty((g.n, g.n), dtype=float)
    for src in range(g.n):
        out[src, :] = _dijkstra(g, kappa, src)
    return out
