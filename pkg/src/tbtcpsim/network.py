"""Packets, links and the bottleneck queue.

The queue is a drop-tail FIFO with a serializing egress link. Marking
happens at enqueue using the pre-insertion depth; departures are
work-conserving (the head packet starts serializing the moment the previous
one leaves). Depth statistics are accumulated time-weighted on every depth
change, so means and percentiles need no periodic sampler.
"""

from __future__ import annotations

from collections import deque

from tbtcpsim.engine import NS_PER_S, Engine, RngStream
from tbtcpsim.marking import MarkingPolicy

MTU = 1500
ACK_SIZE = 64


class Packet:
    __slots__ = (
        "flow_id",
        "seq_no",
        "size",
        "is_ack",
        "ect",
        "ce_marked",
        "ack_no",
        "ece",
        "sent_at",
        "push",
    )

    def __init__(
        self,
        flow_id: int,
        seq_no: int = 0,
        size: int = MTU,
        is_ack: bool = False,
        ect: bool = True,
        ack_no: int = 0,
        ece: bool = False,
        sent_at: int = 0,
        push: bool = False,
    ):
        self.flow_id = flow_id
        self.seq_no = seq_no
        self.size = size
        self.is_ack = is_ack
        self.ect = ect
        self.ce_marked = False
        self.ack_no = ack_no
        self.ece = ece
        self.sent_at = sent_at
        self.push = push

    def __repr__(self) -> str:  # diagnostics only
        if self.is_ack:
            return f"Ack(flow={self.flow_id}, ack_no={self.ack_no}, ece={self.ece})"
        return f"Data(flow={self.flow_id}, seq={self.seq_no}, size={self.size}, ce={self.ce_marked})"


class Link:
    """Point-to-point link: serialization rate plus propagation delay."""

    __slots__ = ("bandwidth_bps", "propagation_ns")

    def __init__(self, bandwidth_bps: int, propagation_ns: int = 0):
        if bandwidth_bps <= 0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth_bps}")
        if propagation_ns < 0:
            raise ValueError(f"propagation delay must be non-negative, got {propagation_ns}")
        self.bandwidth_bps = bandwidth_bps
        self.propagation_ns = propagation_ns

    def serialization_ns(self, size_bytes: int) -> int:
        # integer nanoseconds, rounded up so back-to-back packets never overlap
        bits = size_bytes * 8 * NS_PER_S
        return -(-bits // self.bandwidth_bps)


class BottleneckQueue:
    """Drop-tail FIFO with ECN marking and an attached egress link.

    A packet leaves the buffer the moment its serialization starts, so
    depth counts only waiting packets; marking and drop decisions use the
    pre-insertion waiting depth. Cumulative counters cover the whole run
    and satisfy enqueued == dequeued + dropped + depth at all times
    (enqueued counts every arrival, dequeued every service start). Window
    statistics (depth histogram, busy time, max depth) can be reset
    mid-run to exclude warmup.
    """

    __slots__ = (
        "engine",
        "link",
        "capacity",
        "policy",
        "rng",
        "name",
        "deliver",
        "trace",
        "_q",
        "_serving",
        "depth",
        "busy",
        "enqueued",
        "dequeued",
        "dropped",
        "marked",
        "_hist",
        "_last_change",
        "_win_start",
        "win_max_depth",
        "win_busy_ns",
    )

    def __init__(
        self,
        engine: Engine,
        link: Link,
        capacity: int,
        policy: MarkingPolicy,
        rng: RngStream,
        name: str = "bottleneck",
    ):
        if capacity < 1:
            raise ValueError(f"capacity must be at least 1 packet, got {capacity}")
        self.engine = engine
        self.link = link
        self.capacity = capacity
        self.policy = policy
        self.rng = rng
        self.name = name
        self.deliver = None  # set by the topology: callable(pkt) at departure
        self.trace = None  # optional callable(time_ns, depth, event)
        self._q: deque[Packet] = deque()
        self._serving: Packet | None = None
        self.depth = 0
        self.busy = False
        self.enqueued = 0
        self.dequeued = 0
        self.dropped = 0
        self.marked = 0
        self._hist: dict[int, int] = {}
        self._last_change = 0
        self._win_start = 0
        self.win_max_depth = 0
        self.win_busy_ns = 0
        engine.add_reporter(name, self.snapshot)

    # -- stats plumbing -------------------------------------------------

    def _account(self) -> None:
        now = self.engine.now
        dt = now - self._last_change
        if dt:
            h = self._hist
            d = self.depth
            h[d] = h.get(d, 0) + dt
            self._last_change = now

    def reset_window(self) -> None:
        """Drop accumulated depth/busy statistics; used at the warmup cut."""
        self._account()
        self._hist = {}
        self._win_start = self.engine.now
        self._last_change = self.engine.now
        self.win_max_depth = self.depth
        self.win_busy_ns = 0

    def snapshot(self) -> dict:
        return {
            "enqueued": self.enqueued,
            "dequeued": self.dequeued,
            "dropped": self.dropped,
            "marked": self.marked,
            "depth": self.depth,
        }

    def depth_histogram(self) -> dict[int, int]:
        """Time-weighted depth histogram (ns at each depth) since the window start."""
        self._account()
        return dict(self._hist)

    def window_span_ns(self) -> int:
        return self.engine.now - self._win_start

    # -- datapath --------------------------------------------------------

    def arrival(self, pkt: Packet) -> None:
        self.enqueued += 1
        d = self.depth
        if self.busy and d >= self.capacity:
            self.dropped += 1
            if self.trace is not None:
                self.trace(self.engine.now, d, "drop")
            return
        p = self.policy.probability(d)
        if p > 0.0 and pkt.ect and self.rng.uniform01() < p:
            pkt.ce_marked = True
            self.marked += 1
            if self.trace is not None:
                self.trace(self.engine.now, d, "mark")
        if self.busy:
            self._account()
            self._q.append(pkt)
            self.depth = d + 1
            if self.depth > self.win_max_depth:
                self.win_max_depth = self.depth
            if self.trace is not None:
                self.trace(self.engine.now, self.depth, "enq")
        else:
            # idle line: straight into service, never occupying the buffer
            self.dequeued += 1
            self._start_service(pkt)
            if self.trace is not None:
                self.trace(self.engine.now, d, "enq")

    def _start_service(self, pkt: Packet) -> None:
        self.busy = True
        self._serving = pkt
        self.engine.schedule(
            self.engine.now + self.link.serialization_ns(pkt.size), self._complete
        )

    def _complete(self) -> None:
        pkt = self._serving
        self.win_busy_ns += self.link.serialization_ns(pkt.size)
        if self._q:
            self._account()
            self.depth -= 1
            self.dequeued += 1
            if self.trace is not None:
                self.trace(self.engine.now, self.depth, "deq")
            self._start_service(self._q.popleft())
        else:
            self.busy = False
            self._serving = None
        deliver = self.deliver
        if deliver is not None:
            deliver(pkt)
