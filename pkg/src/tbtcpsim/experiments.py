"""Dumbbell experiments: configuration, topology wiring, and the run loop.

The topology is always the same dumbbell: n sender hosts, one shared
bottleneck queue with a marking policy, and per-flow return paths carrying
acks. Each flow's two-way propagation equals its configured RTT (half
ahead of the queue, half on the ack path). Senders inject through an
access link that defaults to ten times the bottleneck rate: fast enough
that the standing queue always forms at the bottleneck, but finite so
that a multi-packet burst is spread over its wire time instead of landing
in one instant. Setting ``access_bps`` below the bottleneck rate instead
caps that flow, which some fairness setups use deliberately.

Receiver logic executes at bottleneck egress and the finished ack is
scheduled across the remaining propagation in one hop. Per-flow delivery
order is preserved, so this is behaviorally identical to modeling the
receiver host separately while spending fewer events per packet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

from tbtcpsim.engine import NS_PER_MS, NS_PER_S, NS_PER_US, Engine, RngStream
from tbtcpsim.marking import (
    DctcpThreshold,
    IdealTbtcp,
    MarkingPolicy,
    NoMarking,
    StepRed,
)
from tbtcpsim.metrics import (
    MetricsReport,
    WindowSample,
    convergence_time,
    jain_index,
    queue_cdf,
    queue_stats,
)
from tbtcpsim.network import MTU, BottleneckQueue, Link, Packet
from tbtcpsim.transport import ALGORITHMS, Receiver, Sender

MARKINGS = ("ideal", "threshold", "step", "none")
BDP_RTT_CHOICES = ("min", "avg", "max")
DEFAULT_BUFFER_PKTS = 680
MIN_ROUNDS = 100  # duration must cover this many of the largest RTT
ACCESS_SPEEDUP = 10  # default host NIC rate as a multiple of the bottleneck


@dataclass(frozen=True)
class FlowSpec:
    """One flow's schedule entry: long-lived (stop_ns or run end) or sized."""

    start_ns: int = 0
    stop_ns: int | None = None
    size_bytes: int | None = None
    rtt_ns: int | None = None  # None: taken from per_flow_rtts by index

    def __post_init__(self) -> None:
        if self.start_ns < 0:
            raise ValueError(f"flow start must be non-negative, got {self.start_ns}")
        if self.stop_ns is not None and self.stop_ns <= self.start_ns:
            raise ValueError("flow stop must come after its start")
        if self.size_bytes is not None and self.size_bytes <= 0:
            raise ValueError(f"flow size must be positive, got {self.size_bytes}")


@dataclass(frozen=True)
class WorkloadSpec:
    """Poisson arrivals of sized flows, two-segment log-uniform sizes.

    Sizes span [size_min, size_max] with short_weight of flows below
    size_split; load is the offered fraction of bottleneck capacity.
    """

    load: float = 0.6
    size_min: int = 4 * 1024
    size_split: int = 100 * 1024
    size_max: int = 5 * 1024 * 1024
    short_weight: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 < self.load:
            raise ValueError(f"load must be positive, got {self.load}")
        if not 0 < self.size_min < self.size_split < self.size_max:
            raise ValueError("need 0 < size_min < size_split < size_max")
        if not 0.0 <= self.short_weight <= 1.0:
            raise ValueError(f"short_weight must be in [0, 1], got {self.short_weight}")

    def mean_size_bytes(self) -> float:
        def seg_mean(a: int, b: int) -> float:
            return (b - a) / math.log(b / a)

        return self.short_weight * seg_mean(self.size_min, self.size_split) + (
            1.0 - self.short_weight
        ) * seg_mean(self.size_split, self.size_max)

    def draw_size(self, rng: RngStream) -> int:
        if rng.uniform01() < self.short_weight:
            a, b = self.size_min, self.size_split
        else:
            a, b = self.size_split, self.size_max
        return min(b, max(a, round(math.exp(rng.uniform(math.log(a), math.log(b))))))


def generate_workload(
    spec: WorkloadSpec, rng: RngStream, capacity_bps: float, duration_ns: int
) -> tuple[FlowSpec, ...]:
    """Schedule of sized flows whose offered load is spec.load of capacity."""
    rate_per_ns = spec.load * capacity_bps / (8.0 * spec.mean_size_bytes()) / NS_PER_S
    flows = []
    t = 0.0
    while True:
        t += rng.expovariate(rate_per_ns)
        if t >= duration_ns:
            break
        flows.append(FlowSpec(start_ns=round(t), size_bytes=spec.draw_size(rng)))
    return tuple(flows)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run one dumbbell experiment deterministically."""

    name: str
    algorithm: str
    bottleneck_bps: int
    per_flow_rtts: tuple[int, ...]
    n_flows: int
    duration_ns: int
    seed: int = 1
    beta: float = 0.1
    scale_r: int = 1
    g: float = 1.0 / 16.0
    marking: str = "ideal"
    marking_l_pkts: float = 0.0
    bdp_rtt_choice: str = "avg"
    k_pkts: float | None = None
    t_min_pkts: float | None = None
    t_max_pkts: float | None = None
    p_max: float | None = None
    buffer_pkts: int = DEFAULT_BUFFER_PKTS
    warmup_frac: float = 0.1
    access_bps: int | None = None  # None: NIC at ACCESS_SPEEDUP x bottleneck
    # ack-per-packet: coalescing receivers park one packet per flow in
    # delayed-ack limbo for a full round, an n-sized elastic reservoir
    # that immediate mark echoes then dump into the queue all at once
    delayed_ack: int = 1
    initial_cwnd: float = 10.0
    initial_ssthresh: float | None = None  # finite and <= initial_cwnd: skip slow start
    alpha_init: float = 1.0
    min_rto_ns: int = 10 * NS_PER_MS
    window_ns: int = 10 * NS_PER_MS
    convergence_events: tuple[int, ...] = ()
    flow_schedule: tuple[FlowSpec, ...] | None = None
    workload: WorkloadSpec | None = None
    collect_queue_trace: bool = False
    collect_flow_trace: bool = False
    queue_sample_ns: int = 100 * NS_PER_US

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.marking not in MARKINGS:
            raise ValueError(f"unknown marking {self.marking!r}, expected {MARKINGS}")
        if self.bdp_rtt_choice not in BDP_RTT_CHOICES:
            raise ValueError(f"bdp_rtt_choice must be one of {BDP_RTT_CHOICES}")
        if self.n_flows < 1:
            raise ValueError(f"need at least one flow, got {self.n_flows}")
        if self.bottleneck_bps <= 0:
            raise ValueError("bottleneck bandwidth must be positive")
        if not self.per_flow_rtts:
            raise ValueError("per_flow_rtts must not be empty")
        if any(r <= 0 for r in self.per_flow_rtts):
            raise ValueError("RTTs must be positive")
        if self.duration_ns <= MIN_ROUNDS * max(self.per_flow_rtts):
            raise ValueError(
                f"duration {self.duration_ns}ns too short: need more than "
                f"{MIN_ROUNDS} times the largest RTT {max(self.per_flow_rtts)}ns"
            )
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError(f"warmup_frac must be in [0, 1), got {self.warmup_frac}")
        if self.marking == "step" and None in (self.t_min_pkts, self.t_max_pkts, self.p_max):
            raise ValueError("step marking needs t_min_pkts, t_max_pkts and p_max")

    # -- derived quantities -------------------------------------------------

    def rtt_for_marking_ns(self) -> int:
        rtts = self.per_flow_rtts
        if self.bdp_rtt_choice == "min":
            return min(rtts)
        if self.bdp_rtt_choice == "max":
            return max(rtts)
        return round(sum(rtts) / len(rtts))

    def bdp_pkts(self, rtt_ns: int | None = None) -> float:
        rtt = self.rtt_for_marking_ns() if rtt_ns is None else rtt_ns
        return self.bottleneck_bps * rtt / (8.0 * MTU * NS_PER_S)

    def effective_k_pkts(self) -> float:
        """Threshold defaults to the classic one-seventh of the marking BDP."""
        return self.k_pkts if self.k_pkts is not None else self.bdp_pkts() / 7.0

    def build_policy(self) -> MarkingPolicy:
        if self.marking == "ideal":
            return IdealTbtcp(
                bdp=self.bdp_pkts(), l=self.marking_l_pkts, scale_r=self.scale_r
            )
        if self.marking == "threshold":
            return DctcpThreshold(self.effective_k_pkts())
        if self.marking == "step":
            return StepRed(self.t_min_pkts, self.t_max_pkts, self.p_max)
        return NoMarking()

    def resolved_schedule(self) -> tuple[FlowSpec, ...]:
        if self.flow_schedule is not None:
            return self.flow_schedule
        return tuple(FlowSpec() for _ in range(self.n_flows))


class _Port:
    """Per-flow wiring: sender, receiver, access link state, path delays."""

    __slots__ = (
        "sender",
        "receiver",
        "access",
        "access_free_ns",
        "fwd_prop_ns",
        "ack_prop_ns",
        "spec",
    )

    def __init__(self, sender, receiver, access, fwd_prop_ns, ack_prop_ns, spec):
        self.sender = sender
        self.receiver = receiver
        self.access = access
        self.access_free_ns = 0
        self.fwd_prop_ns = fwd_prop_ns
        self.ack_prop_ns = ack_prop_ns
        self.spec = spec


class Dumbbell:
    """A wired simulation instance; run_experiment drives it."""

    def __init__(self, engine: Engine, config: ExperimentConfig):
        self.engine = engine
        self.config = config
        self.queue = BottleneckQueue(
            engine,
            Link(config.bottleneck_bps),
            capacity=config.buffer_pkts,
            policy=config.build_policy(),
            rng=engine.stream("marking"),
        )
        self.queue.deliver = self._deliver
        self.ports: list[_Port] = []
        self.fct_records: list[tuple[int, int]] = []

        min_rtt_ns = 2 * self.queue.link.serialization_ns(MTU)
        # Hosts inject through a NIC-speed access link.  It must be faster
        # than the bottleneck (else the standing queue forms upstream where
        # nothing marks) but finite (else same-instant bursts see phantom
        # queue depth at the bottleneck and mark themselves at low load).
        access = Link(config.access_bps or ACCESS_SPEEDUP * config.bottleneck_bps)
        schedule = config.resolved_schedule()
        rtts = config.per_flow_rtts
        for idx, spec in enumerate(schedule):
            rtt = spec.rtt_ns if spec.rtt_ns is not None else rtts[idx % len(rtts)]
            if rtt < min_rtt_ns:
                raise ValueError(
                    f"flow {idx} RTT {rtt}ns below twice the bottleneck "
                    f"serialization time {min_rtt_ns // 2}ns"
                )
            sender = Sender(
                engine,
                flow_id=idx,
                algorithm=config.algorithm,
                inject=self._inject,
                on_finish=self._finished,
                beta=config.beta,
                scale_r=config.scale_r,
                g=config.g,
                bytes_total=spec.size_bytes,
                rtt_hint_ns=rtt,
                min_rto_ns=config.min_rto_ns,
                initial_cwnd=config.initial_cwnd,
                initial_ssthresh=config.initial_ssthresh,
                alpha_init=config.alpha_init,
                rai_phase=idx / len(schedule),
            )
            port = _Port(
                sender=sender,
                receiver=Receiver(idx, delayed_ack=config.delayed_ack),
                access=access,
                fwd_prop_ns=rtt // 2,
                ack_prop_ns=rtt - rtt // 2,
                spec=spec,
            )
            self.ports.append(port)
            engine.schedule(spec.start_ns, sender.start)
            if spec.stop_ns is not None:
                engine.schedule(spec.stop_ns, sender.stop)

    def _inject(self, sender: Sender, pkt: Packet) -> None:
        port = self.ports[sender.flow_id]
        depart = max(self.engine.now, port.access_free_ns) + port.access.serialization_ns(
            pkt.size
        )
        port.access_free_ns = depart
        self.engine.schedule(depart + port.fwd_prop_ns, self.queue.arrival, pkt)

    def _deliver(self, pkt: Packet) -> None:
        port = self.ports[pkt.flow_id]
        ack = port.receiver.on_data(pkt)
        if ack is not None:
            self.engine.schedule(self.engine.now + port.ack_prop_ns, port.sender.on_ack, ack)

    def _finished(self, sender: Sender) -> None:
        self.fct_records.append(
            (sender.bytes_total, sender.finish_ns - sender.start_ns)
        )

    def long_lived_ids(self) -> list[int]:
        return [p.sender.flow_id for p in self.ports if p.spec.size_bytes is None]


def build_dumbbell(config: ExperimentConfig, engine: Engine | None = None) -> Dumbbell:
    if engine is None:
        engine = Engine(seed=config.seed)
    cfg = config
    if cfg.workload is not None and cfg.flow_schedule is None:
        schedule = generate_workload(
            cfg.workload, engine.stream("workload"), cfg.bottleneck_bps, cfg.duration_ns
        )
        cfg = replace(cfg, flow_schedule=schedule)
    return Dumbbell(engine, cfg)


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Build, run and summarize one experiment; same config, same report."""
    engine = Engine(seed=config.seed)
    bell = build_dumbbell(config, engine)
    queue = bell.queue
    duration = config.duration_ns
    warmup = round(duration * config.warmup_frac)

    long_lived = bell.long_lived_ids()
    warm_bytes: dict[int, int] = {}

    def cut_warmup() -> None:
        queue.reset_window()
        for fid in long_lived:
            warm_bytes[fid] = bell.ports[fid].sender.bytes_acked()

    engine.schedule(warmup, cut_warmup)

    samples: list[WindowSample] = []
    last_bytes = {fid: 0 for fid in long_lived}

    def sample_window() -> None:
        now = engine.now
        bps = {}
        for fid in long_lived:
            acked = bell.ports[fid].sender.bytes_acked()
            bps[fid] = (acked - last_bytes[fid]) * 8.0 * NS_PER_S / config.window_ns
            last_bytes[fid] = acked
        samples.append(WindowSample(t_end_ns=now, bps=bps))
        if now + config.window_ns <= duration:
            engine.schedule(now + config.window_ns, sample_window)

    if long_lived:
        engine.schedule(config.window_ns, sample_window)

    queue_trace: list[tuple[int, int, str]] = []
    if config.collect_queue_trace:
        queue.trace = lambda t, depth, event: queue_trace.append((t, depth, event))

        def sample_queue() -> None:
            queue_trace.append((engine.now, queue.depth, "sample"))
            if engine.now + config.queue_sample_ns <= duration:
                engine.schedule(engine.now + config.queue_sample_ns, sample_queue)

        engine.schedule(0, sample_queue)

    flow_trace: list[tuple[int, int, float, int, str]] = []
    if config.collect_flow_trace:
        def record(t: int, fid: int, cwnd: float, acked: int, event: str) -> None:
            flow_trace.append((t, fid, cwnd, acked, event))

        for port in bell.ports:
            port.sender.trace = record

    engine.schedule(duration, lambda: None)  # pin the clock to the full span
    engine.run_until(duration)

    histogram = queue.depth_histogram()
    stats = queue_stats(histogram, queue.win_max_depth)
    span = duration - warmup
    utilization = queue.win_busy_ns / span if span > 0 else 0.0

    throughput: dict[int, float] = {}
    for fid in long_lived:
        port = bell.ports[fid]
        start = max(port.spec.start_ns, warmup)
        stop = min(port.spec.stop_ns or duration, duration)
        if stop > start:
            acked = port.sender.bytes_acked() - warm_bytes.get(fid, 0)
            throughput[fid] = acked * 8.0 * NS_PER_S / (stop - start)

    jain = None
    if throughput and any(v > 0 for v in throughput.values()):
        jain = jain_index(list(throughput.values()))

    conv: list[int | None] = []
    for event_ns in config.convergence_events:
        active = [
            fid
            for fid in long_lived
            if bell.ports[fid].spec.start_ns <= event_ns
            and (bell.ports[fid].spec.stop_ns or duration) > event_ns
        ]
        conv.append(
            convergence_time(samples, event_ns, config.bottleneck_bps, active)
            if active
            else None
        )

    counters = dict(queue.snapshot())
    counters["events"] = engine.events_processed

    return MetricsReport(
        name=config.name,
        algorithm=config.algorithm,
        seed=config.seed,
        duration_ns=duration,
        warmup_ns=warmup,
        queue=stats,
        cdf=queue_cdf(histogram),
        utilization=min(1.0, utilization),
        per_flow_throughput_bps=throughput,
        jain=jain,
        fct_records=tuple(bell.fct_records),
        convergence_times_ns=tuple(conv),
        throughput_windows=tuple(samples),
        counters=counters,
        queue_trace=tuple(queue_trace),
        flow_trace=tuple(flow_trace),
    )
