"""Per-node synchronisation state machine: triggers and the mode decision.

Each cycle a node measures all neighbours, then evaluates two families of
estimate-based predicates over discrete skew levels.  The slow trigger
says the node is ahead of its neighbourhood and should coast; the fast
trigger says it is behind and should speed up by the correction factor.
The threshold scale is the per-edge error weight kappa; the fast trigger
additionally relaxes by the per-edge estimate error bound delta, because
estimates deliberately understate the neighbour's clock.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .clocks import LogicalClock
from .errors import InternalError, ParameterError
from .twoway import NeighborEstimate, estimate_value

__all__ = [
    "GcsParams",
    "NodeState",
    "slow_trigger",
    "fast_trigger",
    "trigger_levels",
    "evaluate_mode",
]

MEASURING = "measuring"
STABILISING = "stabilising"

DECISION_OWN = "own_rate"
DECISION_FAST = "fast"
DECISION_DEFAULT = "default_own_rate"


@dataclass(frozen=True)
class GcsParams:
    """Algorithm parameters shared by every node."""

    theta: float
    mu: float
    T: float
    T_stab: float
    s_max: int
    hysteresis: float = 0.0

    @property
    def cycle_length(self) -> float:
        return self.T + self.T_stab

    @property
    def sigma(self) -> float:
        """Correction-to-drift coefficient mu / (theta - 1)."""
        if self.theta == 1.0:
            return float("inf")
        return self.mu / (self.theta - 1.0)

    def validate(self) -> list[str]:
        problems = []
        if self.theta < 1.0:
            problems.append(f"theta must be >= 1, got {self.theta!r}")
        if self.mu <= self.theta - 1.0:
            problems.append(
                f"mu must exceed theta - 1 so sigma > 1, got mu={self.mu!r}, theta={self.theta!r}"
            )
        if self.T <= 0:
            problems.append("T must be positive")
        if self.T_stab <= 0:
            problems.append("T_stab must be positive")
        if self.s_max < 1:
            problems.append("s_max must be at least 1")
        if self.hysteresis < 0:
            problems.append("hysteresis must be non-negative")
        return problems


@dataclass
class NodeState:
    """Everything one node owns: clock, phase, neighbour views, mode."""

    id: int
    logical: LogicalClock
    phase: str = MEASURING
    cycle_index: int = 0
    views: dict[int, NeighborEstimate] = field(default_factory=dict)
    mode: int = 0


def _estimate_gaps(node: NodeState, neighbors, t: float) -> tuple[float, dict[int, float]]:
    """(own logical value, estimate value per neighbour) at time t."""
    l_v = node.logical.value(t)
    vals = {}
    for w in neighbors:
        view = node.views.get(w)
        if view is None:
            raise InternalError(f"node {node.id} missing view of neighbor {w}")
        vals[w] = estimate_value(view, l_v, cycle=node.cycle_index)
    return l_v, vals


def slow_trigger(
    node: NodeState,
    kappa: dict[int, float],
    delta: dict[int, float],
    s: int,
    t: float,
    hysteresis: float = 0.0,
) -> bool:
    """Some neighbour trails by >= (2s-1)*kappa and none leads by more."""
    if s < 1:
        raise ParameterError(f"skew level must be positive, got {s!r}")
    l_v, est = _estimate_gaps(node, kappa.keys(), t)
    c = 2 * s - 1
    st1 = any(l_v - est[x] >= c * kappa[x] + hysteresis for x in kappa)
    st2 = all(est[y] - l_v <= c * kappa[y] for y in kappa)
    return st1 and st2


def fast_trigger(
    node: NodeState,
    kappa: dict[int, float],
    delta: dict[int, float],
    s: int,
    t: float,
    hysteresis: float = 0.0,
) -> bool:
    """Some neighbour leads by more than 2s*kappa - delta and none trails past 2s*kappa + delta."""
    if s < 1:
        raise ParameterError(f"skew level must be positive, got {s!r}")
    l_v, est = _estimate_gaps(node, kappa.keys(), t)
    c = 2 * s
    ft1 = any(est[x] - l_v > c * kappa[x] - delta[x] + hysteresis for x in kappa)
    ft2 = all(l_v - est[y] < c * kappa[y] + delta[y] for y in kappa)
    return ft1 and ft2


def trigger_levels(
    node: NodeState,
    kappa: dict[int, float],
    delta: dict[int, float],
    t: float,
    s_max: int,
    hysteresis: float = 0.0,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Levels at which the slow / fast trigger fire, evaluated once."""
    l_v, est = _estimate_gaps(node, kappa.keys(), t)
    lead = {w: est[w] - l_v for w in est}  # positive: neighbour estimated ahead
    st, ft = [], []
    for s in range(1, s_max + 1):
        c = 2 * s - 1
        if any(-lead[x] >= c * kappa[x] + hysteresis for x in lead) and all(
            lead[y] <= c * kappa[y] for y in lead
        ):
            st.append(s)
        c = 2 * s
        if any(lead[x] > c * kappa[x] - delta[x] + hysteresis for x in lead) and all(
            -lead[y] < c * kappa[y] + delta[y] for y in lead
        ):
            ft.append(s)
    return tuple(st), tuple(ft)


def evaluate_mode(
    node: NodeState,
    kappa: dict[int, float],
    delta: dict[int, float],
    t: float,
    s_max: int,
    hysteresis: float = 0.0,
) -> str:
    """Mode decision for the stabilising phase.

    Slow wins over fast; with neither trigger at any level the node keeps
    its own rate by default.
    """
    st, ft = trigger_levels(node, kappa, delta, t, s_max, hysteresis)
    if st:
        return DECISION_OWN
    if ft:
        return DECISION_FAST
    return DECISION_DEFAULT
