import itertools
import math
from collections import deque

import numpy as np
import pytest

from gcsim.errors import ParameterError
from gcsim.topology import (
    EdgeParams,
    NetworkGraph,
    edge_kappa,
    hop_diameter,
    hop_distance,
    kappa_distance_matrix,
    kappa_weights,
    validate_graph,
    weighted_distance,
)


def simple_edge(**kw):
    base = dict(fwd_delay=1.0, bwd_delay=1.0, jitter=0.0, eps_d=0.0, eps_m=0.1, length=1.0)
    base.update(kw)
    return EdgeParams(**base)


def graph_from_pairs(n, pairs, d_max=10.0, edge=None):
    edge = edge or simple_edge()
    return NetworkGraph.build(n, [(u, v, edge) for u, v in pairs], d_max)


def bfs_oracle(n, pairs, src):
    adj = {i: [] for i in range(n)}
    for u, v in pairs:
        adj[u].append(v)
        adj[v].append(u)
    dist = {src: 0}
    q = deque([src])
    while q:
        x = q.popleft()
        for y in adj[x]:
            if y not in dist:
                dist[y] = dist[x] + 1
                q.append(y)
    return dist


class TestValidateGraph:
    def test_triangle_all_slack(self):
        g = graph_from_pairs(3, [(0, 1), (1, 2), (0, 2)])
        assert validate_graph(g) == []

    def test_disconnected(self):
        g = graph_from_pairs(4, [(0, 1), (2, 3)])
        assert any("graph not connected" in p for p in validate_graph(g))

    def test_asymmetry_violation(self):
        e = simple_edge(fwd_delay=5.0, bwd_delay=9.0, jitter=0.0, eps_d=0.1)
        g = NetworkGraph.build(2, [(0, 1, e)], d_max=20.0)
        msgs = [p for p in validate_graph(g) if "asymmetry" in p]
        assert msgs and "4 > 0.9" in msgs[0]

    def test_delay_bound_must_be_below_d_max(self):
        e = simple_edge(fwd_delay=9.5, bwd_delay=9.5, jitter=1.0, eps_d=0.2)
        g = NetworkGraph.build(2, [(0, 1, e)], d_max=10.0)
        assert any("d_max" in p for p in validate_graph(g))

    def test_nonpositive_parameters(self):
        e = simple_edge(fwd_delay=-1.0)
        g = NetworkGraph.build(2, [(0, 1, e)], d_max=10.0)
        assert any("positive" in p for p in validate_graph(g))


class TestHopDistance:
    def test_same_node(self):
        g = graph_from_pairs(3, [(0, 1), (1, 2)])
        assert hop_distance(g, 1, 1) == 0

    def test_line(self):
        g = graph_from_pairs(3, [(0, 1), (1, 2)])
        assert hop_distance(g, 0, 2) == 2

    def test_grid_corners(self):
        pairs = []
        for r in range(4):
            for c in range(4):
                if c + 1 < 4:
                    pairs.append((r * 4 + c, r * 4 + c + 1))
                if r + 1 < 4:
                    pairs.append((r * 4 + c, (r + 1) * 4 + c))
        g = graph_from_pairs(16, pairs)
        assert hop_distance(g, 0, 15) == bfs_oracle(16, pairs, 0)[15] == 6

    def test_out_of_range(self):
        g = graph_from_pairs(2, [(0, 1)])
        with pytest.raises(ParameterError):
            hop_distance(g, 0, 5)


class TestHopDiameter:
    def test_single_edge(self):
        assert hop_diameter(graph_from_pairs(2, [(0, 1)])) == 1

    def test_ring8(self):
        pairs = [(i, (i + 1) % 8) for i in range(8)]
        assert hop_diameter(graph_from_pairs(8, pairs)) == 4

    def test_random_graph_matches_all_pairs_bfs(self):
        rng = np.random.default_rng(42)
        pairs = [(int(rng.integers(0, i)), i) for i in range(1, 16)]
        pairs += [(2, 9), (4, 13), (0, 15)]
        pairs = sorted(set((min(u, v), max(u, v)) for u, v in pairs))
        g = graph_from_pairs(16, pairs)
        expect = max(
            d for src in range(16) for d in bfs_oracle(16, pairs, src).values()
        )
        assert hop_diameter(g) == expect


class TestEdgeKappa:
    def test_direct_arithmetic(self):
        e = EdgeParams(fwd_delay=10.0, bwd_delay=14.0, jitter=0.0, eps_d=0.01, eps_m=0.001)
        assert edge_kappa(e, 1.001) == pytest.approx(0.31, abs=1e-12)

    def test_all_error_sources_zero(self):
        e = EdgeParams(fwd_delay=1.0, bwd_delay=1.0)
        assert edge_kappa(e, 1.0) == 0.0

    def test_drift_only(self):
        e = EdgeParams(fwd_delay=1.0, bwd_delay=1.0)
        assert edge_kappa(e, 1.01) == pytest.approx(0.02, abs=1e-15)

    def test_theta_below_one_rejected(self):
        with pytest.raises(ParameterError):
            edge_kappa(EdgeParams(1.0, 1.0), 0.99)


def enumerate_paths_oracle(n, pairs, kappa, v, w):
    """Minimum kappa-sum over all simple paths, by exhaustive DFS."""
    adj = {i: [] for i in range(n)}
    for u, x in pairs:
        adj[u].append(x)
        adj[x].append(u)
    best = math.inf

    def dfs(node, seen, acc):
        nonlocal best
        if node == w:
            best = min(best, acc)
            return
        for nxt in adj[node]:
            if nxt not in seen:
                key = (min(node, nxt), max(node, nxt))
                dfs(nxt, seen | {nxt}, acc + kappa[key])

    dfs(v, {v}, 0.0)
    return best


class TestWeightedDistance:
    def test_line_single_path(self):
        e1 = simple_edge(eps_m=0.15)
        e2 = simple_edge(eps_m=0.25)
        g = NetworkGraph.build(3, [(0, 1, e1), (1, 2, e2)], d_max=10.0)
        kappa = kappa_weights(g, 1.0)
        assert kappa[(0, 1)] == pytest.approx(0.3)
        assert kappa[(1, 2)] == pytest.approx(0.5)
        assert weighted_distance(g, kappa, 0, 2) == pytest.approx(0.8, abs=1e-12)
        assert weighted_distance(g, kappa, 0, 2, multiplier=3) == pytest.approx(2.4, abs=1e-12)

    def test_triangle_two_hops_beat_direct(self):
        edges = [
            (0, 1, simple_edge(eps_m=0.1)),
            (1, 2, simple_edge(eps_m=0.1)),
            (0, 2, simple_edge(eps_m=0.25)),
        ]
        g = NetworkGraph.build(3, edges, d_max=10.0)
        kappa = kappa_weights(g, 1.0)
        assert weighted_distance(g, kappa, 0, 2) == pytest.approx(0.4, abs=1e-12)

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(7)
        for trial in range(25):
            n = int(rng.integers(3, 7))
            pairs = [(int(rng.integers(0, i)), i) for i in range(1, n)]
            extra = [(int(rng.integers(0, n)), int(rng.integers(0, n))) for _ in range(2)]
            pairs += [(min(u, v), max(u, v)) for u, v in extra if u != v]
            pairs = sorted(set(pairs))
            edges = [(u, v, simple_edge(eps_m=float(rng.uniform(0.05, 1.0)))) for u, v in pairs]
            g = NetworkGraph.build(n, edges, d_max=10.0)
            kappa = kappa_weights(g, 1.0)
            for v, w in itertools.combinations(range(n), 2):
                expect = enumerate_paths_oracle(n, pairs, kappa, v, w)
                assert weighted_distance(g, kappa, v, w) == pytest.approx(expect, abs=1e-12)

    def test_zero_kappa_rejected(self):
        g = graph_from_pairs(2, [(0, 1)], edge=simple_edge(eps_m=0.0))
        kappa = kappa_weights(g, 1.0)
        with pytest.raises(ParameterError):
            weighted_distance(g, kappa, 0, 1)


class TestMetricProperties:
    def test_distance_is_a_metric_on_small_graphs(self):
        rng = np.random.default_rng(101)
        for trial in range(20):
            n = int(rng.integers(2, 7))
            pairs = sorted(
                set((int(rng.integers(0, i)), i) for i in range(1, n))
                | set(
                    (min(a, b), max(a, b))
                    for a, b in rng.integers(0, n, size=(2, 2))
                    if a != b
                )
            )
            edges = [(u, v, simple_edge(eps_m=float(rng.uniform(0.05, 0.5)))) for u, v in pairs]
            g = NetworkGraph.build(n, edges, d_max=10.0)
            kappa = kappa_weights(g, 1.0)
            dist = kappa_distance_matrix(g, kappa)
            assert np.all(dist >= 0)
            assert np.all(np.diag(dist) == 0)
            assert np.allclose(dist, dist.T)
            for a in range(n):
                for b in range(n):
                    if a != b:
                        assert dist[a, b] > 0
                    for c in range(n):
                        assert dist[a, c] <= dist[a, b] + dist[b, c] + 1e-12
            for u, v in pairs:
                assert dist[u, v] <= kappa[(u, v)] + 1e-15

    def test_hop_distance_bounded_by_diameter(self):
        pairs = [(i, (i + 1) % 8) for i in range(8)]
        g = graph_from_pairs(8, pairs)
        diam = hop_diameter(g)
        for v, w in itertools.combinations(range(8), 2):
            assert hop_distance(g, v, w) <= diam
