"""Run outputs: sampled trace, violations, summary, and their file formats.

The trace samples every event time plus a fixed real-time grid.  Clocks
are piecewise linear between events, so pairwise differences attain their
extrema at sampled points and the recorded maxima are exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .twoway import MeasurementRecord, NeighborEstimate

__all__ = [
    "Violation",
    "MeasurementTruth",
    "SkewSample",
    "Trace",
    "RunSummary",
    "write_trace_csv",
    "write_summary_json",
    "write_violations_json",
]


@dataclass(frozen=True)
class Violation:
    time: float
    kind: str
    detail: str

    def to_dict(self) -> dict:
        return {"time": self.time, "kind": self.kind, "detail": self.detail}


@dataclass(frozen=True)
class MeasurementTruth:
    """One completed measurement together with engine-side ground truth."""

    requester: int
    responder: int
    cycle: int
    record: MeasurementRecord
    estimate: NeighborEstimate
    fwd_delay_actual: float
    bwd_delay_actual: float
    processing_real: float
    sent_real: float
    true_offset_mid: float


@dataclass(frozen=True)
class SkewSample:
    """One sampled instant of the ground-truth metrics."""

    t_real: float
    local_skew: float
    global_skew: float
    psi: dict[int, float]
    leading_node: int
    edge_offsets: dict[tuple[int, int], float]


class Trace:
    """Time-ordered run record.

    Arrays are row-per-sample: ``logical``/``hardware`` are (S, n),
    ``modes`` (S, n) of 0/1, ``psi_nodes`` (S, n, s_max) per-node
    potentials (empty in skew-only runs), ``psi_levels`` (S, s_max).
    """

    def __init__(
        self,
        times: np.ndarray,
        logical: np.ndarray,
        hardware: np.ndarray,
        modes: np.ndarray,
        edges: tuple[tuple[int, int], ...],
        local_skew: np.ndarray,
        global_skew: np.ndarray,
        psi_nodes: np.ndarray,
        psi_levels: np.ndarray,
        leading_nodes: np.ndarray,
        measurements: list[MeasurementTruth],
        bound_local: float,
        bound_global: float,
    ):
        self.times = times
        self.logical = logical
        self.hardware = hardware
        self.modes = modes
        self.edges = edges
        self.local_skew = local_skew
        self.global_skew = global_skew
        self.psi_nodes = psi_nodes
        self.psi_levels = psi_levels
        self.leading_nodes = leading_nodes
        self.measurements = measurements
        self.bound_local = bound_local
        self.bound_global = bound_global

    @property
    def n(self) -> int:
        return self.logical.shape[1]

    @property
    def s_max(self) -> int:
        return self.psi_levels.shape[1] if self.psi_levels.size else 0

    def __len__(self) -> int:
        return len(self.times)

    def sample(self, i: int) -> SkewSample:
        vals = self.logical[i]
        return SkewSample(
            t_real=float(self.times[i]),
            local_skew=float(self.local_skew[i]),
            global_skew=float(self.global_skew[i]),
            psi={s + 1: float(self.psi_levels[i, s]) for s in range(self.s_max)},
            leading_node=int(self.leading_nodes[i]),
            edge_offsets={(u, v): float(vals[u] - vals[v]) for u, v in self.edges},
        )


@dataclass
class RunSummary:
    """Per-run report; serialized without the wall time so reruns with the
    same seed produce byte-identical files."""

    scenario_hash: str
    seed: int
    cycles_completed: int
    bound_report: dict
    violation_count: int
    counters: dict = field(default_factory=dict)
    mode_timelines: dict = field(default_factory=dict)
    first_global_bound_exceed_time: float | None = None
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "cycles_completed": self.cycles_completed,
            "bound_report": self.bound_report,
            "violation_count": self.violation_count,
            "counters": self.counters,
            "mode_timelines": self.mode_timelines,
            "first_global_bound_exceed_time": self.first_global_bound_exceed_time,
        }


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace_csv(trace: Trace, path) -> None:
    n = trace.n
    s_max = trace.s_max
    cols = ["t_real"]
    for i in range(n):
        cols += [f"node_{i}_L", f"node_{i}_H", f"node_{i}_mode"]
    cols += ["local_skew", "global_skew"]
    cols += [f"psi_s{s}" for s in range(1, s_max + 1)]
    cols += ["bound_local", "bound_global"]
    bl = _fmt(trace.bound_local)
    bg = _fmt(trace.bound_global)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(trace)):
            row = [_fmt(trace.times[i])]
            for j in range(n):
                row += [
                    _fmt(trace.logical[i, j]),
                    _fmt(trace.hardware[i, j]),
                    str(int(trace.modes[i, j])),
                ]
            row += [_fmt(trace.local_skew[i]), _fmt(trace.global_skew[i])]
            row += [_fmt(trace.psi_levels[i, s]) for s in range(s_max)]
            row += [bl, bg]
            fh.write(",".join(row) + "\n")


def write_summary_json(summary: RunSummary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_violations_json(violations: list[Violation], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump([v.to_dict() for v in violations], fh, indent=2, sort_keys=True)
        fh.write("\n")
