"""Deterministic discrete-event loop.

Events are totally ordered by (real time, schedule sequence number), and
every random draw comes from a labelled substream of the master seed, so a
run is a pure function of its scenario.  The loop owns all node state;
metrics get read-only snapshots.
"""
from __future__ import annotations

import hashlib
import heapq
import logging
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from . import gcs, metrics
from .clocks import FAST, OWN_RATE, HardwareClock, LogicalClock, make_schedule
from .errors import ConfigError, InternalError, RunAborted
from .gcs import GcsParams, NodeState
from .topology import NetworkGraph, kappa_distance_matrix, kappa_weights
from .trace import MeasurementTruth, RunSummary, Trace, Violation
from .twoway import (
    MeasurementRecord,
    RequestMsg,
    compute_estimates,
    estimate_value,
    handle_request,
    timeout_window,
)

logger = logging.getLogger(__name__)

__all__ = ["StreamRegistry", "seeded_stream", "DelaySampler", "Scenario", "RunResult", "run"]

# Event kinds; CycleBoundary events carry a wakeup/evaluate stage.
K_WAKEUP = 0
K_EVALUATE = 1
K_ARRIVAL = 2
K_EMIT = 3
K_TICK = 4

_TOL = 1e-9


def _label_entropy(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


class StreamRegistry:
    """Hands out independent, reproducible RNG substreams by label."""

    def __init__(self, master_seed: int):
        self.master_seed = master_seed
        self._labels: set[str] = set()

    def stream(self, label: str) -> np.random.Generator:
        if label in self._labels:
            raise ConfigError(f"RNG stream label reused: {label!r}")
        self._labels.add(label)
        seq = np.random.SeedSequence([self.master_seed & 0xFFFFFFFFFFFFFFFF] + _label_entropy(label))
        return np.random.Generator(np.random.PCG64(seq))


def seeded_stream(master_seed: int, purpose_label: str) -> np.random.Generator:
    """One-off labelled substream (no reuse tracking)."""
    seq = np.random.SeedSequence([master_seed & 0xFFFFFFFFFFFFFFFF] + _label_entropy(purpose_label))
    return np.random.Generator(np.random.PCG64(seq))


class DelaySampler:
    """Per-direction message delays: base plus uniform jitter in [0, width]."""

    def __init__(self, g: NetworkGraph, registry: StreamRegistry):
        self._g = g
        self._streams = {}
        for u, v, _ in g.edges:
            self._streams[(u, v)] = registry.stream(f"delay:{u}->{v}")
            self._streams[(v, u)] = registry.stream(f"delay:{v}->{u}")

    def sample(self, src: int, dst: int) -> float:
        p = self._g.edge(src, dst)
        base = self._g.base_delay(src, dst)
        d = base + p.jitter * self._streams[(src, dst)].random() if p.jitter > 0 else base
        if d >= self._g.d_max:
            raise InternalError(f"sampled delay {d!r} reached d_max on {src}->{dst}")
        return d


@dataclass
class Scenario:
    """Validated runtime scenario; build one via :mod:`gcsim.scenario`."""

    graph: NetworkGraph
    params: GcsParams
    clock_specs: list
    p_max: float
    sample_dt: float
    master_seed: int
    horizon_cycles: int | None = None
    horizon_time: float | None = None
    correction_semantics: str = "multiplicative"
    gcs_enabled: bool = True
    metrics_mode: str = "full"
    scenario_hash: str = ""
    kappa: dict = field(default_factory=dict)
    dist: np.ndarray | None = None

    def __post_init__(self):
        if not self.kappa:
            self.kappa = kappa_weights(self.graph, self.params.theta)
        if self.dist is None:
            self.dist = kappa_distance_matrix(self.graph, self.kappa)

    @property
    def timeout(self) -> float:
        eps_m = max(p.eps_m for _, _, p in self.graph.edges)
        return timeout_window(self.graph.d_max, self.p_max, eps_m, self.params.theta)

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def global_bound(self) -> float:
        return metrics.theorem3_bound(self.graph, self.kappa, self.sigma, dist=self.dist)

    @property
    def local_bound(self) -> float:
        return metrics.theorem2_bound(max(self.kappa.values()), self.global_bound, self.sigma)


@dataclass
class RunResult:
    trace: Trace
    summary: RunSummary
    violations: list


class _Simulation:
    def __init__(self, sc: Scenario):
        self.sc = sc
        g = sc.graph
        n = g.n
        self.registry = StreamRegistry(sc.master_seed)
        self.sampler = DelaySampler(g, self.registry)
        self.proc_streams = {}
        if sc.p_max > 0:
            for u, v, _ in g.edges:
                self.proc_streams[(u, v)] = self.registry.stream(f"proc:{u}->{v}")
                self.proc_streams[(v, u)] = self.registry.stream(f"proc:{v}->{u}")

        horizon_real = (
            sc.horizon_time
            if sc.horizon_time is not None
            else sc.horizon_cycles * sc.params.cycle_length
        )
        self.horizon_real = horizon_real

        self.nodes: list[NodeState] = []
        for i, spec in enumerate(sc.clock_specs):
            gen = spec.get("generator", "constant")
            seed_override = spec.get("seed")
            rng = None
            if gen == "random_walk":
                if seed_override is not None:
                    rng = seeded_stream(int(seed_override), f"clock:{i}")
                    self.registry.stream(f"clock:{i}")  # reserve the label anyway
                else:
                    rng = self.registry.stream(f"clock:{i}")
            sched = make_schedule(gen, spec, sc.params.theta, horizon_real + sc.params.cycle_length, rng)
            hw = HardwareClock(float(spec.get("initial_value", 0.0)), sched)
            lc = LogicalClock(hw, sc.params.mu, sc.correction_semantics)
            self.nodes.append(NodeState(id=i, logical=lc))

        # per-node neighbour weight maps; triggers use the static per-edge
        # error bound as their delta
        self.kappa_nb = [
            {w: sc.kappa[(min(v, w), max(v, w))] for w in g.neighbors(v)} for v in range(n)
        ]
        self.pending: list[dict] = [dict() for _ in range(n)]
        self.completed = [0] * n
        self.done: set[int] = set()
        self.mode_timelines: list[list] = [[(0.0, OWN_RATE)] for _ in range(n)]

        self.heap: list = []
        self.seq = 0
        self.current: float | None = None
        self.stop_time: float | None = None

        self.violations: list[Violation] = []
        self.measurements: list[MeasurementTruth] = []
        self.counters = {
            "eval_instants": 0,
            "trigger_evaluations": 0,
            "estimate_uses": 0,
            "measurements": 0,
            "sc_instances": 0,
            "fc_instances": 0,
            "st_instances": 0,
            "ft_instances": 0,
        }

        self.full = sc.metrics_mode == "full"
        self.buf_t: list[float] = []
        self.buf_L: list[list[float]] = []
        self.buf_H: list[list[float]] = []
        self.max_local = 0.0
        self.max_global = 0.0
        self.per_edge_max = {(u, v): 0.0 for u, v, _ in g.edges}
        self.first_exceed: float | None = None
        self._global_bound = sc.global_bound

    # -- scheduling helpers

    def push(self, t: float, kind: int, payload) -> None:
        heapq.heappush(self.heap, (t, self.seq, kind, payload))
        self.seq += 1

    # -- event handlers

    def _on_wakeup(self, t: float, v: int, k: int) -> None:
        node = self.nodes[v]
        node.logical.set_mode(t, OWN_RATE)
        if node.mode != OWN_RATE:
            node.mode = OWN_RATE
            self.mode_timelines[v].append((t, OWN_RATE))
        self.completed[v] = k
        sc = self.sc
        if sc.horizon_cycles is not None and k >= sc.horizon_cycles:
            self.done.add(v)
            if len(self.done) == sc.graph.n:
                self.stop_time = t
            return
        node.cycle_index = k
        node.phase = gcs.MEASURING
        node.views = {}
        self.pending[v] = {}
        l1 = node.logical.value(t)
        expected = node.logical.hardware.initial_value + k * sc.params.cycle_length
        if abs(l1 - expected) > 1e-6:
            raise RunAborted(
                f"cycle boundary misaligned at node {v}: local {l1!r} vs {expected!r}",
                self.violations,
            )
        for w in sc.graph.neighbors(v):
            d = self.sampler.sample(v, w)
            self.pending[v][w] = (l1, t)
            self.push(t + d, K_ARRIVAL, ("req", v, w, l1, d, t))
        self.push(node.logical.invert(expected + sc.params.T), K_EVALUATE, (v, k))

    def _on_request_arrival(self, t: float, payload) -> None:
        _, v, w, t1, fwd_d, sent_real = payload
        t2 = self.nodes[w].logical.value(t)
        p_real = 0.0
        if self.sc.p_max > 0:
            p_real = self.sc.p_max * float(self.proc_streams[(v, w)].random())
        self.push(t + p_real, K_EMIT, (v, w, t1, t2, fwd_d, p_real, sent_real))

    def _on_emit(self, t: float, payload) -> None:
        v, w, t1, t2, fwd_d, p_real, sent_real = payload
        t3 = self.nodes[w].logical.value(t)
        reply = handle_request(RequestMsg(v, t1), w, t2, t3 - t2)
        d = self.sampler.sample(w, v)
        self.push(t + d, K_ARRIVAL, ("rep", w, v, reply, fwd_d, p_real, d, sent_real))

    def _on_reply_arrival(self, t: float, payload) -> None:
        _, w, v, reply, fwd_d, p_real, bwd_d, sent_real = payload
        sc = self.sc
        node = self.nodes[v]
        t4 = node.logical.value(t)
        pend = self.pending[v].pop(w, None)
        if pend is None or pend[0] != reply.l_v_t1_echo:
            raise RunAborted(f"unmatched reply from {w} at node {v}", self.violations)
        t1 = pend[0]
        if t4 - t1 >= sc.timeout + _TOL:
            raise RunAborted(
                f"measurement {v}->{w} exceeded the timeout window "
                f"({t4 - t1!r} >= {sc.timeout!r})",
                self.violations,
            )
        rec = MeasurementRecord(w, t1, reply.l_w_t2, reply.l_w_t3, t4, t)
        edge = sc.graph.edge(v, w)
        est = replace(
            compute_estimates(rec, edge.eps_d, edge.eps_m, sc.params.theta),
            valid_cycle=node.cycle_index,
        )
        node.views[w] = est
        self.counters["measurements"] += 1
        self._check_sandwich(t, v, w, estimate_value(est, t4, cycle=node.cycle_index))
        if self.full:
            mid = 0.5 * (sent_real + t)
            true_mid = self.nodes[w].logical.value(mid) - node.logical.value(mid)
            self.measurements.append(
                MeasurementTruth(
                    requester=v,
                    responder=w,
                    cycle=node.cycle_index,
                    record=rec,
                    estimate=est,
                    fwd_delay_actual=fwd_d,
                    bwd_delay_actual=bwd_d,
                    processing_real=p_real,
                    sent_real=sent_real,
                    true_offset_mid=true_mid,
                )
            )

    def _check_sandwich(self, t: float, v: int, w: int, est_val: float) -> None:
        self.counters["estimate_uses"] += 1
        err = self.nodes[w].logical.value(t) - est_val
        delta_max = self.kappa_nb[v][w]
        if err < -_TOL or err > delta_max + _TOL:
            self.violations.append(
                Violation(
                    time=t,
                    kind="estimate_sandwich",
                    detail=(
                        f"estimate of {w} at {v} off by {err:.3e} "
                        f"(allowed [0, {delta_max:.3e}])"
                    ),
                )
            )

    def _on_evaluate(self, t: float, v: int, k: int) -> None:
        sc = self.sc
        node = self.nodes[v]
        nbrs = sc.graph.neighbors(v)
        if node.cycle_index != k or node.phase != gcs.MEASURING:
            raise RunAborted(f"evaluation fired out of order at node {v}", self.violations)
        if len(node.views) != len(nbrs):
            missing = sorted(set(nbrs) - set(node.views))
            raise RunAborted(
                f"node {v} evaluating cycle {k} with incomplete views (missing {missing})",
                self.violations,
            )
        kappa_nb = self.kappa_nb[v]
        st, ft = gcs.trigger_levels(node, kappa_nb, kappa_nb, t, sc.params.s_max, sc.params.hysteresis)
        self.counters["eval_instants"] += 1
        self.counters["trigger_evaluations"] += 2 * sc.params.s_max
        self.counters["st_instances"] += len(st)
        self.counters["ft_instances"] += len(ft)

        vals = [nd.logical.value(t) for nd in self.nodes]
        l_v = vals[v]
        for w in nbrs:
            self._check_sandwich(t, v, w, estimate_value(node.views[w], l_v, cycle=k))

        if st and ft:
            self.violations.append(
                Violation(
                    time=t,
                    kind="trigger_coexistence",
                    detail=f"node {v} satisfies slow {st} and fast {ft} triggers together",
                )
            )
        for s in range(1, sc.params.s_max + 1):
            if metrics.slow_condition(vals, sc.graph, sc.kappa, v, s):
                self.counters["sc_instances"] += 1
                if s not in st:
                    self.violations.append(
                        Violation(
                            time=t,
                            kind="condition_without_trigger",
                            detail=f"node {v}: slow condition at level {s} without slow trigger",
                        )
                    )
            if metrics.fast_condition(vals, sc.graph, sc.kappa, v, s):
                self.counters["fc_instances"] += 1
                if s not in ft:
                    self.violations.append(
                        Violation(
                            time=t,
                            kind="condition_without_trigger",
                            detail=f"node {v}: fast condition at level {s} without fast trigger",
                        )
                    )

        mode = FAST if (ft and not st and sc.gcs_enabled) else OWN_RATE
        node.logical.set_mode(t, mode)
        if mode != node.mode:
            node.mode = mode
            self.mode_timelines[v].append((t, mode))
        node.phase = gcs.STABILISING
        base = node.logical.hardware.initial_value
        self.push(node.logical.invert(base + (k + 1) * sc.params.cycle_length), K_WAKEUP, (v, k + 1))

    # -- sampling

    def _flush_sample(self, t: float) -> None:
        vals = []
        hws = []
        for nd in self.nodes:
            l, h = nd.logical.value_pair(t)
            vals.append(l)
            hws.append(h)
        if self.full:
            self.buf_t.append(t)
            self.buf_L.append(vals)
            self.buf_H.append(hws)
            return
        lo = min(vals)
        hi = max(vals)
        if hi - lo > self.max_global:
            self.max_global = hi - lo
            if self.max_global > self._global_bound + _TOL and self.first_exceed is None:
                self.first_exceed = t
        for (u, w) in self.per_edge_max:
            gap = abs(vals[u] - vals[w])
            if gap > self.per_edge_max[(u, w)]:
                self.per_edge_max[(u, w)] = gap
                if gap > self.max_local:
                    self.max_local = gap

    # -- main loop

    def run(self) -> RunResult:
        started = _time.perf_counter()
        sc = self.sc
        for v in range(sc.graph.n):
            self.push(self.nodes[v].logical.invert(self.nodes[v].logical.hardware.initial_value), K_WAKEUP, (v, 0))
        if sc.sample_dt > 0:
            self.push(sc.sample_dt, K_TICK, None)

        while self.heap:
            t = self.heap[0][0]
            if self.stop_time is not None and t > self.stop_time:
                break
            if sc.horizon_time is not None and t > sc.horizon_time:
                break
            t, _, kind, payload = heapq.heappop(self.heap)
            if self.current is not None:
                if t < self.current - _TOL:
                    raise RunAborted(
                        f"event time regressed: {t!r} after {self.current!r}", self.violations
                    )
                if t > self.current:
                    self._flush_sample(self.current)
            self.current = t
            if kind == K_WAKEUP:
                self._on_wakeup(t, *payload)
            elif kind == K_EVALUATE:
                self._on_evaluate(t, *payload)
            elif kind == K_ARRIVAL:
                if payload[0] == "req":
                    self._on_request_arrival(t, payload)
                else:
                    self._on_reply_arrival(t, payload)
            elif kind == K_EMIT:
                self._on_emit(t, payload)
            elif kind == K_TICK:
                self.push(t + sc.sample_dt, K_TICK, None)

        if self.current is not None:
            self._flush_sample(self.current)
        end = self.stop_time if self.stop_time is not None else sc.horizon_time
        if end is not None and (self.current is None or end > self.current):
            self._flush_sample(end)

        result = self._finish()
        result.summary.wall_time_s = _time.perf_counter() - started
        return result

    def _finish(self) -> RunResult:
        sc = self.sc
        g = sc.graph
        n = g.n
        edges = tuple((u, v) for u, v, _ in g.edges)
        if self.full:
            times = np.asarray(self.buf_t)
            L = np.asarray(self.buf_L)
            H = np.asarray(self.buf_H)
            self._check_lipschitz_trace(times, H)
            eu = np.array([u for u, _ in edges])
            ev = np.array([v for _, v in edges])
            edge_gaps = np.abs(L[:, eu] - L[:, ev]) if len(edges) else np.zeros((len(times), 0))
            local = edge_gaps.max(axis=1) if len(edges) else np.zeros(len(times))
            glob = L.max(axis=1) - L.min(axis=1)
            for i, (u, v) in enumerate(edges):
                self.per_edge_max[(u, v)] = float(edge_gaps[:, i].max()) if len(times) else 0.0
            self.max_local = float(local.max()) if len(times) else 0.0
            self.max_global = float(glob.max()) if len(times) else 0.0
            exceed = np.nonzero(glob > self._global_bound + _TOL)[0]
            self.first_exceed = float(times[exceed[0]]) if len(exceed) else None

            kappa_adj = np.full((n, n), np.inf)
            for (u, v), k_e in sc.kappa.items():
                kappa_adj[u, v] = k_e
                kappa_adj[v, u] = k_e
            psi_nodes, psi_levels, leading, oracle_viol = metrics.trace_oracles(
                times, L, sc.dist, kappa_adj, sc.params.s_max
            )
            self.violations.extend(oracle_viol)

            modes = np.zeros((len(times), n), dtype=np.int8)
            for v in range(n):
                ch_t = np.array([c[0] for c in self.mode_timelines[v]])
                ch_m = np.array([c[1] for c in self.mode_timelines[v]], dtype=np.int8)
                idx = np.searchsorted(ch_t, times, side="right") - 1
                modes[:, v] = ch_m[np.maximum(idx, 0)]

            trace = Trace(
                times=times,
                logical=L,
                hardware=H,
                modes=modes,
                edges=edges,
                local_skew=local,
                global_skew=glob,
                psi_nodes=psi_nodes,
                psi_levels=psi_levels,
                leading_nodes=leading,
                measurements=self.measurements,
                bound_local=sc.local_bound,
                bound_global=sc.global_bound,
            )
            self.violations.extend(metrics.corollary1_check_all(trace, sc.params.theta))
        else:
            empty = np.zeros((0,))
            trace = Trace(
                times=empty,
                logical=np.zeros((0, n)),
                hardware=np.zeros((0, n)),
                modes=np.zeros((0, n), dtype=np.int8),
                edges=edges,
                local_skew=empty,
                global_skew=empty,
                psi_nodes=np.zeros((0, n, sc.params.s_max)),
                psi_levels=np.zeros((0, sc.params.s_max)),
                leading_nodes=np.zeros(0, dtype=np.int64),
                measurements=[],
                bound_local=sc.local_bound,
                bound_global=sc.global_bound,
            )

        report = metrics.build_bound_report(
            g,
            sc.kappa,
            sc.sigma,
            sc.dist,
            self.max_local,
            self.max_global,
            per_edge_max={k: float(v) for k, v in self.per_edge_max.items()},
        )
        if not report.local_satisfied:
            self.violations.append(
                Violation(
                    time=0.0,
                    kind="bound_local",
                    detail=f"max local skew {report.max_observed_local!r} exceeds {report.local_bound!r}",
                )
            )
        if not report.global_satisfied:
            self.violations.append(
                Violation(
                    time=0.0,
                    kind="bound_global",
                    detail=f"max global skew {report.max_observed_global!r} exceeds {report.global_bound!r}",
                )
            )

        self.violations.sort(key=lambda v: (v.time, v.kind, v.detail))
        summary = RunSummary(
            scenario_hash=sc.scenario_hash,
            seed=sc.master_seed,
            cycles_completed=min(self.completed) if self.completed else 0,
            bound_report=report.to_dict(),
            violation_count=len(self.violations),
            counters=dict(self.counters),
            mode_timelines={
                str(v): [[t, m] for t, m in tl] for v, tl in enumerate(self.mode_timelines)
            },
            first_global_bound_exceed_time=self.first_exceed,
        )
        return RunResult(trace=trace, summary=summary, violations=self.violations)

    def _check_lipschitz_trace(self, times: np.ndarray, H: np.ndarray) -> None:
        if len(times) < 2:
            return
        dt = np.diff(times)
        keep = dt > 0
        dH = np.diff(H, axis=0)[keep]
        dt = dt[keep]
        theta = self.sc.params.theta
        low_bad = dH < dt[:, None] - _TOL
        high_bad = dH > theta * dt[:, None] + _TOL
        if low_bad.any() or high_bad.any():
            raise RunAborted("hardware clock violated its drift envelope", self.violations)


def run(sc: Scenario) -> RunResult:
    """Execute a validated scenario; deterministic in (scenario, seed)."""
    logger.info(
        "run: n=%d seed=%d horizon=%s", sc.graph.n, sc.master_seed,
        sc.horizon_cycles if sc.horizon_cycles is not None else sc.horizon_time,
    )
    return _Simulation(sc).run()
