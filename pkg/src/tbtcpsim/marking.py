"""ECN marking policies evaluated at enqueue time.

Queue depth q is measured in MTU-packet units, before the arriving packet
is inserted, so an empty queue always yields probability zero. Policies are
pure: they map a depth to a probability and hold no mutable state, which is
what lets the queue own the single RNG draw per enqueue.
"""

from __future__ import annotations

import math


class MarkingPolicy:
    """Base class; subclasses implement probability(q) -> [0, 1]."""

    def probability(self, q: float) -> float:
        raise NotImplementedError


class NoMarking(MarkingPolicy):
    __slots__ = ()

    def probability(self, q: float) -> float:
        return 0.0


class DctcpThreshold(MarkingPolicy):
    """Single-threshold marking: mark everything strictly above k."""

    __slots__ = ("k",)

    def __init__(self, k: float):
        if k < 0:
            raise ValueError(f"threshold k must be non-negative, got {k}")
        self.k = k

    def probability(self, q: float) -> float:
        return 1.0 if q > self.k else 0.0


class IdealTbtcp(MarkingPolicy):
    """Queue-proportional curve with burst threshold l and a 0.5 cap.

    Returns 0 up to l, then (q - l) / (bdp - l + q), saturating at 0.5 once
    q reaches bdp + l; the whole curve is divided by the scaling factor r,
    which the sender compensates by reducing its window r units per echo.
    The curve is continuous, including at the cap point.
    """

    __slots__ = ("bdp", "l", "scale_r")

    def __init__(self, bdp: float, l: float = 0.0, scale_r: int = 1):
        if bdp <= 0:
            raise ValueError(f"bdp must be positive, got {bdp}")
        if l < 0:
            raise ValueError(f"burst threshold l must be non-negative, got {l}")
        if scale_r < 1:
            raise ValueError(f"scale factor r must be a positive integer, got {scale_r}")
        self.bdp = bdp
        self.l = l
        self.scale_r = scale_r

    def probability(self, q: float) -> float:
        l = self.l
        if q <= l:
            return 0.0
        raw = (q - l) / (self.bdp - l + q)
        if raw > 0.5:
            raw = 0.5
        return raw / self.scale_r


# Step heights of commodity 8-step RED hardware, as a fraction of p_max.
STEP_FRACTIONS = tuple((i + 0.5) * 0.125 for i in range(8))


def step_index(q: float, t_min: float, t_max: float) -> int:
    """Index of the step interval holding q, for t_min < q <= t_max.

    Intervals are half open on the left: A_i = (t_min + i*s, t_min + (i+1)*s]
    with s = (t_max - t_min) / 8, so a boundary point belongs to the lower
    step. For integer q this matches floor((q - t_min - 1) / s).
    """
    s = (t_max - t_min) / 8.0
    i = math.ceil((q - t_min) / s) - 1
    if i < 0:
        return 0
    if i > 7:
        return 7
    return i


class StepRed(MarkingPolicy):
    """8-step RED approximation used by commodity switch chips.

    Probability is 0 at or below t_min, p_max * (i + 0.5) / 8 on step i of
    the eight equal intervals between t_min and t_max, and 1 above t_max
    (mark everything rather than overflow the buffer).
    """

    __slots__ = ("t_min", "t_max", "p_max")

    def __init__(self, t_min: float, t_max: float, p_max: float):
        if t_max <= t_min:
            raise ValueError(f"need t_max > t_min, got t_min={t_min} t_max={t_max}")
        if not 0.0 < p_max <= 1.0:
            raise ValueError(f"p_max must be in (0, 1], got {p_max}")
        if t_min < 0:
            raise ValueError(f"t_min must be non-negative, got {t_min}")
        self.t_min = t_min
        self.t_max = t_max
        self.p_max = p_max

    def probability(self, q: float) -> float:
        if q <= self.t_min:
            return 0.0
        if q > self.t_max:
            return 1.0
        return self.p_max * STEP_FRACTIONS[step_index(q, self.t_min, self.t_max)]


def mark_probability(policy: MarkingPolicy, q: float) -> float:
    """Marking probability for a packet arriving when the depth is q."""
    if q < 0:
        raise ValueError(f"queue depth must be non-negative, got {q}")
    return policy.probability(q)


def window_reduction_delta(q: float, w_max: float, bdp: float) -> float:
    """Aggregate per-round window reduction that exactly cancels a queue q.

    With total window W = w_max and bandwidth-delay product bdp (two-way
    propagation times capacity), marking each packet with probability
    q / (bdp + q) removes delta = q * w_max / (bdp + q) of window per round,
    which drains the queue in one round: at q = bdp the reduction is half
    the window, at q = bdp / 7 it is an eighth.
    """
    if bdp <= 0:
        raise ValueError(f"bdp must be positive, got {bdp}")
    if q < 0:
        raise ValueError(f"queue must be non-negative, got {q}")
    return q * w_max / (bdp + q)
