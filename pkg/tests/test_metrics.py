import itertools

import numpy as np
import pytest

from gcsim import engine, metrics
from gcsim import scenario as scen
from gcsim.errors import ParameterError
from gcsim.topology import EdgeParams, NetworkGraph, kappa_distance_matrix, kappa_weights

from scenario_gen import zero_drift_doc


def unit_kappa_graph(pairs, n, kappas=None):
    """Graph whose edge kappas are exactly the given values (theta=1)."""
    kappas = kappas or {}
    edges = [
        (u, v, EdgeParams(1.0, 1.0, eps_m=kappas.get((u, v), 1.0) / 2.0))
        for u, v in pairs
    ]
    g = NetworkGraph.build(n, edges, d_max=10.0)
    kappa = kappa_weights(g, 1.0)
    return g, kappa, kappa_distance_matrix(g, kappa)


class TestSkews:
    def test_identical_clocks(self):
        g, _, _ = unit_kappa_graph([(0, 1)], 2)
        assert metrics.local_skew([5.0, 5.0], [(0, 1)]) == 0.0
        assert metrics.global_skew([5.0, 5.0]) == 0.0

    def test_two_nodes(self):
        assert metrics.local_skew([10.0, 12.5], [(0, 1)]) == 2.5

    def test_line_of_five(self):
        values = [0.0, 1.0, 2.0, 3.0, 4.0]
        edges = [(i, i + 1) for i in range(4)]
        assert metrics.local_skew(values, edges) == 1.0
        assert metrics.global_skew(values) == 4.0

    def test_global_matches_pairwise_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            values = list(rng.uniform(-10, 10, size=6))
            expect = max(abs(a - b) for a, b in itertools.combinations(values, 2))
            assert metrics.global_skew(values) == pytest.approx(expect, abs=1e-12)


class TestPotential:
    def test_all_equal_is_zero(self):
        _, _, dist = unit_kappa_graph([(0, 1), (1, 2)], 3)
        for v in range(3):
            for s in (1, 2):
                assert metrics.potential([3.0, 3.0, 3.0], dist, v, s) == 0.0

    def test_two_nodes(self):
        _, _, dist = unit_kappa_graph([(0, 1)], 2)
        assert metrics.potential([0.0, 5.0], dist, 0, 1) == pytest.approx(4.0)
        val, node = metrics.level_potential([0.0, 5.0], dist, 1)
        assert (val, node) == (pytest.approx(4.0), 0)

    def test_tie_breaks_to_lowest_id(self):
        _, _, dist = unit_kappa_graph([(0, 1)], 2)
        assert metrics.level_potential([1.0, 1.0], dist, 1) == (0.0, 0)

    def test_line_matches_exhaustive(self):
        pairs = [(0, 1), (1, 2), (2, 3)]
        kappas = {(0, 1): 0.4, (1, 2): 0.7, (2, 3): 0.3}
        g, kappa, dist = unit_kappa_graph(pairs, 4, kappas)
        rng = np.random.default_rng(8)
        for _ in range(40):
            values = list(rng.uniform(-3, 3, size=4))
            for s in (1, 2):
                c = 2 * s - 1
                for v in range(4):
                    expect = max(values[w] - values[v] - c * dist[v, w] for w in range(4))
                    assert metrics.potential(values, dist, v, s) == pytest.approx(
                        expect, abs=1e-12
                    )

    def test_leading_pair_identifies_ahead_node(self):
        _, _, dist = unit_kappa_graph([(0, 1)], 2)
        val, base, lead = metrics.leading_pair([0.0, 5.0], dist, 1)
        assert (base, lead) == (0, 1)
        assert val == pytest.approx(4.0)


class TestConditions:
    def test_all_equal(self):
        g, kappa, _ = unit_kappa_graph([(0, 1)], 2)
        assert not metrics.slow_condition([1.0, 1.0], g, kappa, 0, 1)
        assert not metrics.fast_condition([1.0, 1.0], g, kappa, 0, 1)

    def test_slow_boundary_non_strict(self):
        g, kappa, _ = unit_kappa_graph([(0, 1)], 2)
        assert metrics.slow_condition([2.0, 1.0], g, kappa, 0, 1)

    def test_fast_needs_double_threshold(self):
        g, kappa, _ = unit_kappa_graph([(0, 1)], 2)
        assert not metrics.fast_condition([0.0, 1.9], g, kappa, 0, 1)
        assert metrics.fast_condition([0.0, 2.0], g, kappa, 0, 1)

    def test_multi_neighbour_matches_brute_force(self):
        pairs = [(0, 1), (0, 2), (0, 3)]
        g, kappa, _ = unit_kappa_graph(pairs, 4, {(0, 1): 0.5, (0, 2): 1.0, (0, 3): 1.5})
        rng = np.random.default_rng(12)
        for _ in range(200):
            values = list(rng.uniform(-4, 4, size=4))
            for s in (1, 2):
                c = 2 * s - 1
                sc1 = any(values[0] - values[x] >= c * kappa[(0, x)] for x in (1, 2, 3))
                sc2 = all(values[y] - values[0] <= c * kappa[(0, y)] for y in (1, 2, 3))
                assert metrics.slow_condition(values, g, kappa, 0, s) == (sc1 and sc2)
                c = 2 * s
                fc1 = any(values[x] - values[0] >= c * kappa[(0, x)] for x in (1, 2, 3))
                fc2 = all(values[0] - values[y] <= c * kappa[(0, y)] for y in (1, 2, 3))
                assert metrics.fast_condition(values, g, kappa, 0, s) == (fc1 and fc2)


class TestTrailing:
    def test_all_equal_nobody_trails(self):
        _, _, dist = unit_kappa_graph([(0, 1), (1, 2)], 3)
        for w in range(3):
            assert not metrics.trailing_node([1.0, 1.0, 1.0], dist, w, 2)

    def test_two_nodes_behind(self):
        _, _, dist = unit_kappa_graph([(0, 1)], 2)
        assert metrics.trailing_node([0.0, 5.0], dist, 0, 1)
        assert not metrics.trailing_node([0.0, 5.0], dist, 1, 1)

    def test_matches_brute_force(self):
        pairs = [(0, 1), (1, 2), (0, 2), (2, 3)]
        g, kappa, dist = unit_kappa_graph(pairs, 4, {p: 0.5 for p in pairs})
        rng = np.random.default_rng(19)
        for _ in range(100):
            values = list(rng.uniform(-2, 2, size=4))
            for w in range(4):
                expect = False
                for s in (1, 2):
                    for v in range(4):
                        row = [values[v] - values[x] - 2 * s * dist[v, x] for x in range(4)]
                        if max(row) > 0 and row[w] >= max(row) - 1e-12:
                            expect = True
                assert metrics.trailing_node(values, dist, w, 2) == expect


class TestTheoremBounds:
    def test_theorem2_example(self):
        assert metrics.theorem2_bound(1.0, 8.889, 10.0) == pytest.approx(2.0)

    def test_theorem2_degenerate_replaced(self):
        assert metrics.theorem2_bound(1.0, 1.0, 10.0) == pytest.approx(2.0)
        assert metrics.theorem2_is_degenerate(1.0, 1.0, 10.0)
        assert not metrics.theorem2_is_degenerate(1.0, 8.889, 10.0)

    def test_theorem2_small_kappa(self):
        # ceil(log_100(10 / 0.31)) = 1
        assert metrics.theorem2_bound(0.31, 10.0, 100.0) == pytest.approx(0.62)

    def test_theorem2_rejects_sigma_at_most_one(self):
        with pytest.raises(ParameterError):
            metrics.theorem2_bound(1.0, 10.0, 1.0)

    def test_theorem3_line(self):
        pairs = [(i, i + 1) for i in range(8)]
        g, kappa, dist = unit_kappa_graph(pairs, 9)
        got = metrics.theorem3_bound(g, kappa, 10.0, dist=dist)
        assert got == pytest.approx(80.0 / 9.0, rel=1e-12)

    def test_theorem3_sigma_infinity_limit(self):
        pairs = [(i, i + 1) for i in range(8)]
        g, kappa, dist = unit_kappa_graph(pairs, 9)
        assert metrics.theorem3_bound(g, kappa, float("inf"), dist=dist) == pytest.approx(8.0)

    def test_theorem3_matches_floyd_warshall(self):
        pairs = [(i, (i + 1) % 6) for i in range(6)]
        kappas = {p: k for p, k in zip(sorted(pairs), (0.2, 0.9, 0.4, 0.7, 0.3, 0.6))}
        g, kappa, _ = unit_kappa_graph(sorted(pairs), 6, kappas)
        n = 6
        fw = np.full((n, n), np.inf)
        np.fill_diagonal(fw, 0.0)
        for (u, v), k in kappa.items():
            fw[u, v] = fw[v, u] = k
        for m in range(n):
            for a in range(n):
                for b in range(n):
                    fw[a, b] = min(fw[a, b], fw[a, m] + fw[m, b])
        sigma = 5.0
        expect = (1 + 1 / (sigma - 1)) * fw.max()
        assert metrics.theorem3_bound(g, kappa, sigma) == pytest.approx(expect, rel=1e-12)


@pytest.fixture(scope="module")
def short_run():
    sc = scen.build_scenario(zero_drift_doc(True, horizon_cycles=10))
    return engine.run(sc)


class TestCorollary1:
    def test_zero_drift_run_is_clean(self, short_run):
        trace = short_run.trace
        for s in range(1, trace.s_max + 1):
            assert metrics.corollary1_check(trace, s, theta=1.0) == []

    def test_corrupted_trace_is_flagged(self, short_run):
        trace = short_run.trace
        trace.psi_nodes = trace.psi_nodes.copy()
        trace.psi_nodes[len(trace) // 2, 0, 0] += 1.0
        bad = metrics.corollary1_check(trace, 1, theta=1.0)
        assert bad and all(v.kind == "corollary1" for v in bad)

    def test_level_out_of_range(self, short_run):
        with pytest.raises(ParameterError):
            metrics.corollary1_check(short_run.trace, 99, theta=1.0)


class TestTraceOracleConsistency:
    def test_vectorized_potentials_match_pointwise(self):
        sc = scen.build_scenario(zero_drift_doc(False, horizon_cycles=8))
        res = engine.run(sc)
        trace = res.trace
        dist = sc.dist
        rng = np.random.default_rng(3)
        for i in rng.integers(0, len(trace), size=20):
            values = list(trace.logical[int(i)])
            for s in range(1, trace.s_max + 1):
                for v in range(trace.n):
                    assert trace.psi_nodes[int(i), v, s - 1] == pytest.approx(
                        metrics.potential(values, dist, v, s), abs=1e-9
                    )
            assert trace.local_skew[int(i)] == pytest.approx(
                metrics.local_skew(values, trace.edges), abs=1e-12
            )
            assert trace.local_skew[int(i)] <= trace.global_skew[int(i)] + 1e-12
