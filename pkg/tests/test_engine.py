import numpy as np
import pytest

from gcsim import engine
from gcsim import scenario as scen
from gcsim.clocks import FAST
from gcsim.engine import DelaySampler, StreamRegistry, seeded_stream
from gcsim.errors import ConfigError, ScenarioValidationError
from gcsim.topology import EdgeParams, NetworkGraph

from scenario_gen import antiphase_line_doc, random_suite_doc, zero_drift_doc


class TestSeededStreams:
    def test_same_label_same_sequence(self):
        a = seeded_stream(7, "delay:0->1")
        b = seeded_stream(7, "delay:0->1")
        assert list(a.random(16)) == list(b.random(16))

    def test_different_labels_differ(self):
        a = seeded_stream(7, "delay:0->1")
        b = seeded_stream(7, "delay:1->0")
        assert list(a.random(16)) != list(b.random(16))

    def test_registry_rejects_reuse(self):
        reg = StreamRegistry(3)
        reg.stream("clock:0")
        with pytest.raises(ConfigError):
            reg.stream("clock:0")


class TestDelaySampler:
    def test_zero_jitter_is_base(self):
        g = NetworkGraph.build(2, [(0, 1, EdgeParams(10.0, 12.0, eps_d=0.2, eps_m=0.1))], 20.0)
        sampler = DelaySampler(g, StreamRegistry(1))
        assert sampler.sample(0, 1) == 10.0
        assert sampler.sample(1, 0) == 12.0

    def test_samples_within_jitter_band(self):
        e = EdgeParams(10.0, 10.0, jitter=0.5, eps_d=0.06, eps_m=0.0)
        g = NetworkGraph.build(2, [(0, 1, e)], 20.0)
        sampler = DelaySampler(g, StreamRegistry(1))
        for _ in range(1000):
            d = sampler.sample(0, 1)
            assert 10.0 <= d <= 10.5


class TestDeterminism:
    def test_same_seed_identical_results(self):
        a = engine.run(scen.build_scenario(random_suite_doc(2)))
        b = engine.run(scen.build_scenario(random_suite_doc(2)))
        assert np.array_equal(a.trace.times, b.trace.times)
        assert np.array_equal(a.trace.logical, b.trace.logical)
        assert np.array_equal(a.trace.psi_nodes, b.trace.psi_nodes)
        assert a.violations == b.violations
        assert a.summary.to_dict() == b.summary.to_dict()

    def test_different_seed_differs(self):
        doc = zero_drift_doc(symmetric=False)
        a = engine.run(scen.build_scenario(doc, seed_override=1))
        b = engine.run(scen.build_scenario(doc, seed_override=2))
        assert not np.array_equal(a.trace.logical, b.trace.logical)


class TestRunBasics:
    def test_symmetric_zero_drift_keeps_zero_skew(self):
        res = engine.run(scen.build_scenario(zero_drift_doc(True, horizon_cycles=15)))
        assert res.violations == []
        assert float(np.max(res.trace.global_skew)) == 0.0
        assert np.all(res.trace.modes == 0)

    def test_cycle_boundaries_follow_local_clock(self):
        # both clocks at rate 1.01, cycle of 101 local seconds: wakeups at
        # real times 0, 100, 200, ...
        e = {"fwd_delay": 1.0, "bwd_delay": 1.0, "eps_d": 0.0, "eps_m": 0.05, "jitter": 0.0}
        doc = {
            "graph": {"nodes": 2, "d_max": 1.5, "edges": [{"u": 0, "v": 1, **e}]},
            "clocks": {"theta": 1.01, "mu": 0.02,
                       "default": {"generator": "constant", "rate": 1.01,
                                    "initial_value": 0.0}},
            "gcs": {"T": 50.0, "T_stab": 51.0, "p_max": 0.1, "s_max": 1},
            "sim": {"horizon_cycles": 3, "sample_dt": 20.0, "master_seed": 1,
                    "metrics": "full"},
        }
        res = engine.run(scen.build_scenario(doc))
        sent = sorted(set(round(m.sent_real, 9) for m in res.trace.measurements))
        assert sent == [0.0, pytest.approx(100.0, abs=1e-9), pytest.approx(200.0, abs=1e-9)]

    def test_one_measurement_per_neighbor_per_cycle(self):
        doc = antiphase_line_doc(n_nodes=4, horizon_cycles=12, metrics="full")
        res = engine.run(scen.build_scenario(doc))
        # 3 edges, both directions, every completed cycle
        assert res.summary.counters["measurements"] == 12 * 2 * 3
        per_cycle = {}
        for m in res.trace.measurements:
            per_cycle.setdefault((m.requester, m.cycle), set()).add(m.responder)
        degrees = {0: {1}, 1: {0, 2}, 2: {1, 3}, 3: {2}}
        for (req, _), partners in per_cycle.items():
            assert partners == degrees[req]

    def test_fast_mode_starts_only_at_evaluation_instants(self):
        # a node may only speed up for the stabilising phase, i.e. at local
        # time k*cycle + T; during measuring phases it runs at its own rate
        doc = antiphase_line_doc(n_nodes=5, horizon_cycles=700, metrics="full")
        sc = scen.build_scenario(doc)
        res = engine.run(sc)
        T, C = sc.params.T, sc.params.cycle_length
        times = res.trace.times
        found = 0
        for v_str, timeline in res.summary.mode_timelines.items():
            v = int(v_str)
            for t, mode in timeline:
                if mode != FAST:
                    continue
                found += 1
                i = int(np.searchsorted(times, t))
                assert times[i] == pytest.approx(t, abs=1e-9)
                local = res.trace.logical[i, v]
                frac = (local - T) % C
                assert min(frac, C - frac) < 1e-6
        assert found > 0

    def test_sampled_delay_variation_respects_uncertainty_bound(self):
        res = engine.run(scen.build_scenario(zero_drift_doc(False, horizon_cycles=25)))
        e = EdgeParams(1.0, 1.4, jitter=0.05, eps_d=0.35, eps_m=0.02)
        bound = e.max_delay_bound * e.eps_d + e.eps_m
        by_direction = {}
        for m in res.trace.measurements:
            by_direction.setdefault((m.requester, m.responder), []).append(
                (m.sent_real, m.fwd_delay_actual)
            )
        T = 5.0
        for series in by_direction.values():
            series.sort()
            times = [t for t, _ in series]
            for i, (t0, _) in enumerate(series):
                window = [d for t, d in series if t0 <= t <= t0 + T]
                if len(window) > 1:
                    assert max(window) - min(window) < bound

    def test_skew_only_mode_tracks_maxima(self):
        doc = antiphase_line_doc(n_nodes=3, horizon_cycles=500, metrics="skew_only")
        res = engine.run(scen.build_scenario(doc))
        assert len(res.trace) == 0
        assert res.summary.bound_report["max_observed_global"] > 1.0


class TestValidationGate:
    def test_initial_synchronisation_gate(self):
        doc = zero_drift_doc(True)
        doc["clocks"]["overrides"] = {"2": {"initial_value": 50.0}}
        with pytest.raises(ScenarioValidationError) as err:
            scen.build_scenario(doc)
        assert any("initial synchronisation" in p for p in err.value.problems)

    def test_T_below_timeout_rejected(self):
        doc = zero_drift_doc(True)
        doc["gcs"]["T"] = 1.0
        with pytest.raises(ScenarioValidationError) as err:
            scen.build_scenario(doc)
        assert any("timeout window" in p for p in err.value.problems)

    def test_unknown_keys_rejected(self):
        doc = zero_drift_doc(True)
        doc["gcs"]["tsab"] = 1.0
        with pytest.raises(ScenarioValidationError) as err:
            scen.build_scenario(doc)
        assert any("unknown keys" in p for p in err.value.problems)

    def test_zero_kappa_edges_rejected(self):
        doc = zero_drift_doc(True)
        for rec in doc["graph"]["edges"]:
            rec["eps_m"] = 0.0
        with pytest.raises(ScenarioValidationError) as err:
            scen.build_scenario(doc)
        assert any("kappa" in p for p in err.value.problems)

    def test_s_max_required_without_drift(self):
        doc = zero_drift_doc(True)
        del doc["gcs"]["s_max"]
        with pytest.raises(ScenarioValidationError) as err:
            scen.build_scenario(doc)
        assert any("s_max" in p for p in err.value.problems)
