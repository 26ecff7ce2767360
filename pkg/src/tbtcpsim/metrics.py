"""Metric extraction: queue statistics, fairness, convergence, FCT records.

Everything here is pure post-processing of simulation outputs. Queue
statistics come from the time-weighted depth histogram, so they are exact
time averages rather than samples. Convergence detection works on fixed
windows of per-flow throughput against an analytic fair share (capacity
over the number of active flows), which avoids circularity with the
measured rates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence


def jain_index(throughputs: Sequence[float]) -> float:
    """(sum x)^2 / (n * sum x^2); 1.0 iff all equal, 1/n at full starvation."""
    if not throughputs:
        raise ValueError("jain index needs at least one throughput")
    if any(x < 0 for x in throughputs):
        raise ValueError("throughputs must be non-negative")
    square_sum = sum(x * x for x in throughputs)
    if square_sum == 0:
        raise ValueError("jain index undefined for all-zero throughputs")
    total = sum(throughputs)
    return (total * total) / (len(throughputs) * square_sum)


@dataclass(frozen=True)
class QueueStats:
    mean_pkts: float
    median_pkts: float
    p99_pkts: float
    max_pkts: int


def queue_stats(histogram: Mapping[int, int], max_depth: int) -> QueueStats:
    """Summarize a depth -> held-ns histogram; max comes from the live peak
    tracker because zero-duration excursions leave no histogram weight."""
    total = sum(histogram.values())
    if total == 0:
        return QueueStats(0.0, 0.0, 0.0, max_depth)
    mean = sum(d * w for d, w in histogram.items()) / total
    return QueueStats(
        mean_pkts=mean,
        median_pkts=float(_weighted_percentile(histogram, total, 0.50)),
        p99_pkts=float(_weighted_percentile(histogram, total, 0.99)),
        max_pkts=max_depth,
    )


def _weighted_percentile(histogram: Mapping[int, int], total: int, q: float) -> int:
    acc = 0
    for depth in sorted(histogram):
        acc += histogram[depth]
        if acc >= q * total:
            return depth
    return max(histogram)


def queue_cdf(histogram: Mapping[int, int]) -> tuple[tuple[int, float], ...]:
    """(depth, fraction of time at or below depth) points, one per depth."""
    total = sum(histogram.values())
    if total == 0:
        return ()
    out = []
    acc = 0
    for depth in sorted(histogram):
        acc += histogram[depth]
        out.append((depth, acc / total))
    return tuple(out)


@dataclass(frozen=True)
class WindowSample:
    """Per-flow throughput over one fixed measurement window."""

    t_end_ns: int
    bps: Mapping[int, float]


def convergence_time(
    samples: Sequence[WindowSample],
    event_ns: int,
    capacity_bps: float,
    active: Sequence[int],
    band: float = 0.25,
    windows_required: int = 5,
) -> int | None:
    """Time after event_ns for all active flows to hold their fair share.

    A window qualifies when every flow in `active` has throughput within
    +/- band of capacity / len(active). Convergence is the start of the
    first run of `windows_required` consecutive qualifying windows; the
    return value is that start minus event_ns, floored at zero (already
    converged at the event). None means the trace ended first.
    """
    if not active:
        raise ValueError("convergence needs at least one active flow")
    fair = capacity_bps / len(active)
    lo, hi = fair * (1.0 - band), fair * (1.0 + band)
    window_ns = samples[1].t_end_ns - samples[0].t_end_ns if len(samples) > 1 else 0
    streak = 0
    for sample in samples:
        if sample.t_end_ns <= event_ns:
            continue
        ok = all(lo <= sample.bps.get(f, 0.0) <= hi for f in active)
        streak = streak + 1 if ok else 0
        if streak >= windows_required:
            first_start = sample.t_end_ns - windows_required * window_ns
            return max(0, first_start - event_ns)
    return None


@dataclass(frozen=True)
class MetricsReport:
    """Everything a scenario assertion or CSV row needs from one run."""

    name: str
    algorithm: str
    seed: int
    duration_ns: int
    warmup_ns: int
    queue: QueueStats
    cdf: tuple[tuple[int, float], ...]
    utilization: float
    per_flow_throughput_bps: Mapping[int, float]
    jain: float | None
    fct_records: tuple[tuple[int, int], ...]
    convergence_times_ns: tuple[int | None, ...]
    throughput_windows: tuple[WindowSample, ...]
    counters: Mapping[str, int]
    queue_trace: tuple[tuple[int, int, str], ...] = ()
    flow_trace: tuple[tuple[int, int, float, int, str], ...] = ()

    def mean_fct_ns(self, size_lo: int = 0, size_hi: int | None = None) -> float | None:
        """Mean completion time over flows with size_lo <= size < size_hi."""
        sel = [
            fct
            for size, fct in self.fct_records
            if size >= size_lo and (size_hi is None or size < size_hi)
        ]
        if not sel:
            return None
        return sum(sel) / len(sel)
