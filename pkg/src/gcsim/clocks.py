"""Hardware and logical clocks.

Hardware clocks integrate a piecewise-constant rate held inside
``[1, theta]``; a logical clock is the same integral with a correction
multiplier (or additive boost) applied over the intervals the node spends
in fast mode.  Piecewise-constant rates keep every value and inverse query
exact, which the trace oracles rely on.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import InternalError, ParameterError

__all__ = [
    "OWN_RATE",
    "FAST",
    "RateSchedule",
    "HardwareClock",
    "CorrectionLog",
    "LogicalClock",
    "check_lipschitz",
    "make_schedule",
]

OWN_RATE = 0
FAST = 1

_EQ_TOL = 1e-12


@dataclass(frozen=True)
class RateSchedule:
    """Piecewise-constant rate: ``rates[i]`` holds on ``[starts[i], starts[i+1])``."""

    starts: tuple[float, ...]
    rates: tuple[float, ...]
    tag: str = "constant"

    def __post_init__(self):
        if not self.starts or self.starts[0] != 0.0:
            raise ParameterError("rate schedule must start at t=0")
        if len(self.starts) != len(self.rates):
            raise ParameterError("starts and rates must have equal length")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ParameterError("segment start times must be strictly increasing")

    def validate_rates(self, theta: float) -> list[str]:
        problems = []
        for t, r in zip(self.starts, self.rates):
            if not (1.0 <= r <= theta + 1e-15):
                problems.append(f"rate {r!r} at t={t!r} outside [1, {theta!r}]")
        return problems

    def rate_at(self, t: float) -> float:
        return self.rates[bisect_right(self.starts, t) - 1]


class HardwareClock:
    """Free-running local time source; strictly increasing in real time."""

    def __init__(self, initial_value: float, schedule: RateSchedule):
        if initial_value < 0:
            raise ParameterError("initial clock value must be non-negative")
        self.initial_value = initial_value
        self.schedule = schedule
        starts = schedule.starts
        rates = schedule.rates
        cum = [initial_value]
        for i in range(1, len(starts)):
            cum.append(cum[-1] + rates[i - 1] * (starts[i] - starts[i - 1]))
        self._starts = starts
        self._rates = rates
        self._cum = tuple(cum)

    def value(self, t: float) -> float:
        if t < 0:
            raise ParameterError(f"time must be non-negative, got {t!r}")
        i = bisect_right(self._starts, t) - 1
        return self._cum[i] + self._rates[i] * (t - self._starts[i])

    def rate(self, t: float) -> float:
        return self._rates[bisect_right(self._starts, t) - 1]

    def inverse(self, target: float) -> float:
        """Real time at which the clock reads ``target`` (exact, rates > 0)."""
        if target < self.initial_value - _EQ_TOL:
            raise ParameterError(
                f"target {target!r} below initial clock value {self.initial_value!r}"
            )
        i = bisect_right(self._cum, target) - 1
        i = max(i, 0)
        return self._starts[i] + (target - self._cum[i]) / self._rates[i]


@dataclass(frozen=True)
class CorrectionLog:
    """Mode history of a logical clock: (start_real_time, mode) segments."""

    segments: tuple[tuple[float, int], ...]
    mu: float


class LogicalClock:
    """Hardware clock plus integrated rate correction.

    In fast mode the clock advances at ``(1 + mu)`` times the hardware rate
    (multiplicative semantics) or at the hardware rate plus ``mu``
    (additive).  Mode changes append anchors; values before the last anchor
    are never rewritten, so past queries stay exact.
    """

    def __init__(self, hardware: HardwareClock, mu: float, semantics: str = "multiplicative"):
        if mu <= 0:
            raise ParameterError(f"mu must be positive, got {mu!r}")
        if semantics not in ("multiplicative", "additive"):
            raise ParameterError(f"unknown correction semantics {semantics!r}")
        self.hardware = hardware
        self.mu = mu
        self.semantics = semantics
        self._times = [0.0]
        self._values = [hardware.initial_value]
        self._hw_at = [hardware.initial_value]
        self._modes = [OWN_RATE]

    @property
    def correction_log(self) -> CorrectionLog:
        return CorrectionLog(
            segments=tuple(zip(self._times, self._modes)),
            mu=self.mu,
        )

    @property
    def mode(self) -> int:
        return self._modes[-1]

    def _segment(self, t: float) -> int:
        return bisect_right(self._times, t) - 1

    def value(self, t: float) -> float:
        if t < 0:
            raise ParameterError(f"time must be non-negative, got {t!r}")
        i = self._segment(t)
        dh = self.hardware.value(t) - self._hw_at[i]
        if self._modes[i] == OWN_RATE:
            return self._values[i] + dh
        if self.semantics == "multiplicative":
            return self._values[i] + (1.0 + self.mu) * dh
        return self._values[i] + dh + self.mu * (t - self._times[i])

    def value_pair(self, t: float) -> tuple[float, float]:
        """(logical, hardware) at t, evaluating the hardware clock once."""
        h = self.hardware.value(t)
        i = self._segment(t)
        dh = h - self._hw_at[i]
        if self._modes[i] == OWN_RATE:
            return self._values[i] + dh, h
        if self.semantics == "multiplicative":
            return self._values[i] + (1.0 + self.mu) * dh, h
        return self._values[i] + dh + self.mu * (t - self._times[i]), h

    def rate(self, t: float) -> float:
        i = self._segment(t)
        r = self.hardware.rate(t)
        if self._modes[i] == OWN_RATE:
            return r
        if self.semantics == "multiplicative":
            return (1.0 + self.mu) * r
        return r + self.mu

    def set_mode(self, t: float, mode: int) -> None:
        """Switch correction mode at time t; past values stay unchanged."""
        if mode not in (OWN_RATE, FAST):
            raise ParameterError(f"unknown mode {mode!r}")
        if t < self._times[-1] - _EQ_TOL:
            raise InternalError(
                f"mode change at t={t!r} precedes last change at {self._times[-1]!r}"
            )
        if mode == self._modes[-1]:
            return
        value_now = self.value(t)
        hw_now = self.hardware.value(t)
        self._times.append(t)
        self._values.append(value_now)
        self._hw_at.append(hw_now)
        self._modes.append(mode)

    def invert(self, target: float) -> float:
        """Real time at which the logical clock reads ``target``.

        Unique because the logical rate is strictly positive.
        """
        if target < self._values[0] - _EQ_TOL:
            raise ParameterError(
                f"target {target!r} below initial logical value {self._values[0]!r}"
            )
        i = bisect_right(self._values, target) - 1
        i = max(i, 0)
        mode = self._modes[i]
        if mode == OWN_RATE:
            return self.hardware.inverse(self._hw_at[i] + (target - self._values[i]))
        if self.semantics == "multiplicative":
            dh = (target - self._values[i]) / (1.0 + self.mu)
            return self.hardware.inverse(self._hw_at[i] + dh)
        return self._invert_additive(i, target)

    def _invert_additive(self, i: int, target: float) -> float:
        # Walk hardware segments from the anchor; each has combined slope
        # rate + mu, so the crossing is an exact division.
        t0 = self._times[i]
        v0 = self._values[i]
        hw = self.hardware
        j = bisect_right(hw._starts, t0) - 1
        t_end = self._times[i + 1] if i + 1 < len(self._times) else float("inf")
        t_lo, v_lo = t0, v0
        while True:
            seg_end = hw._starts[j + 1] if j + 1 < len(hw._starts) else float("inf")
            seg_end = min(seg_end, t_end)
            slope = hw._rates[j] + self.mu
            v_hi = v_lo + slope * (seg_end - t_lo) if seg_end < float("inf") else float("inf")
            if target <= v_hi + _EQ_TOL or seg_end == float("inf"):
                return t_lo + (target - v_lo) / slope
            t_lo, v_lo = seg_end, v_hi
            j += 1


def check_lipschitz(c: HardwareClock, t1: float, t2: float, theta: float, tol: float = 1e-9) -> bool:
    """True iff the clock advanced within [dt, theta*dt] over (t1, t2]."""
    if t2 <= t1 or t1 < 0:
        raise ParameterError("need t2 > t1 >= 0")
    dt = t2 - t1
    dh = c.value(t2) - c.value(t1)
    return dt - tol <= dh <= theta * dt + tol


def make_schedule(
    generator: str,
    params: dict,
    theta: float,
    horizon: float,
    rng: np.random.Generator | None = None,
) -> RateSchedule:
    """Build a rate schedule from a generator spec.

    Generators: ``constant`` (rate), ``alternating`` (dwell, start_high;
    flips between rate 1 and theta), ``random_walk`` (dwell, step; seeded,
    clipped to [1, theta]), ``scripted`` (explicit [t, rate] segments).
    """
    if generator == "constant":
        rate = float(params.get("rate", 1.0))
        return RateSchedule(starts=(0.0,), rates=(rate,), tag="constant")
    if generator == "alternating":
        dwell = float(params["dwell"])
        if dwell <= 0:
            raise ParameterError("alternating dwell must be positive")
        start_high = bool(params.get("start_high", False))
        low = float(params.get("low", 1.0))
        high = float(params.get("high", theta))
        starts, rates = [], []
        t, hi = 0.0, start_high
        while t <= horizon:
            starts.append(t)
            rates.append(high if hi else low)
            hi = not hi
            t += dwell
        return RateSchedule(starts=tuple(starts), rates=tuple(rates), tag="alternating")
    if generator == "random_walk":
        if rng is None:
            raise ParameterError("random_walk schedule needs an RNG stream")
        dwell = float(params["dwell"])
        if dwell <= 0:
            raise ParameterError("random_walk dwell must be positive")
        step = float(params.get("step", (theta - 1.0) / 4.0))
        rate = float(params.get("start_rate", (1.0 + theta) / 2.0))
        rate = min(max(rate, 1.0), theta)
        starts, rates = [], []
        t = 0.0
        while t <= horizon:
            starts.append(t)
            rates.append(rate)
            rate = min(max(rate + rng.uniform(-step, step), 1.0), theta)
            t += dwell
        return RateSchedule(starts=tuple(starts), rates=tuple(rates), tag="random-walk")
    if generator == "scripted":
        segments = params["segments"]
        if not segments:
            raise ParameterError("scripted schedule needs at least one segment")
        starts = tuple(float(s[0]) for s in segments)
        rates = tuple(float(s[1]) for s in segments)
        return RateSchedule(starts=starts, rates=rates, tag="adversarial script")
    raise ParameterError(f"unknown rate generator {generator!r}")
