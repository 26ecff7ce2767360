"""Window-based transport senders and the ECN-echoing receiver.

Four sender algorithms share one state machine and differ only in how they
react to acknowledgments:

  tbtcp      per-echo window decrease cwnd <- max(cwnd - r, cwnd / 2)
             ("queue canceling decrease") plus one MSS of growth every
             m = round(1 / beta) ack-counted rounds ("reduced additive
             increase"); slow start ends for good at the first echo.
  dctcp      per-round fraction estimate alpha <- (1 - g) alpha + g F and a
             single cwnd <- cwnd (1 - alpha / 2) cut per marked round, one
             MSS of growth per round.
  dctcp_rai  dctcp's estimator and cut with the reduced additive increase.
  reno       loss-driven halving, one MSS per round.

Rounds are ack-counted: a round ends when the ack covering the first byte
sent in that round arrives, which makes a round one RTT without any timer.
The receiver delays plain acks (one per d data packets) but echoes a mark
immediately, acknowledging everything received so far.

Loss recovery is deliberately minimal: third duplicate ack retransmits the
missing segment and halves once per recovery episode; a retransmission
timeout collapses the window to the 2 MSS floor. The congestion window
never goes below 2 MSS.
"""

from __future__ import annotations

import math

from tbtcpsim.engine import NS_PER_MS, Engine
from tbtcpsim.network import ACK_SIZE, MTU, Packet

CWND_FLOOR = 2.0
DUP_ACK_THRESHOLD = 3
DEFAULT_MIN_RTO_NS = 10 * NS_PER_MS

ALGORITHMS = ("tbtcp", "dctcp", "dctcp_rai", "reno")


def rai_period(beta: float) -> int:
    """Rounds per one-MSS increase: m = round(1 / beta), at least 1."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return max(1, round(1.0 / beta))


def qcd_decrease(cwnd: float, scale_r: int) -> float:
    """One queue-canceling step: max(cwnd - r, cwnd / 2), floored at 2 MSS."""
    return max(cwnd - scale_r, cwnd / 2.0, CWND_FLOOR)


def dctcp_alpha_update(alpha: float, frac_marked: float, g: float) -> float:
    """One estimator step: alpha <- (1 - g) * alpha + g * F."""
    return (1.0 - g) * alpha + g * frac_marked


class Receiver:
    """Per-flow receiver: cumulative acks, delayed acks, immediate mark echo.

    on_data returns the ack to send (or None when the delayed-ack counter
    has not filled). Any emitted ack acknowledges everything delivered in
    order so far, so the pending counter resets on every emission. Out of
    order arrivals are buffered and answered with an immediate duplicate
    ack; filling a gap or receiving a pushed segment (a sized flow's tail)
    is also answered immediately so nothing waits out the delay counter.
    """

    __slots__ = ("flow_id", "d", "expected", "pending", "_ooo")

    def __init__(self, flow_id: int, delayed_ack: int = 2):
        if delayed_ack < 1:
            raise ValueError(f"delayed-ack count must be >= 1, got {delayed_ack}")
        self.flow_id = flow_id
        self.d = delayed_ack
        self.expected = 0
        self.pending = 0
        self._ooo: dict[int, int] = {}

    def _make_ack(self, ece: bool, echo: int) -> Packet:
        self.pending = 0
        return Packet(
            self.flow_id,
            size=ACK_SIZE,
            is_ack=True,
            ect=False,
            ack_no=self.expected,
            ece=ece,
            sent_at=echo,
        )

    def on_data(self, pkt: Packet) -> Packet | None:
        seq = pkt.seq_no
        if seq == self.expected:
            self.expected = seq + pkt.size
            filled_gap = False
            while self.expected in self._ooo:
                self.expected = self._ooo.pop(self.expected)
                filled_gap = True
            if pkt.ce_marked:
                return self._make_ack(True, pkt.sent_at)
            if filled_gap or pkt.push:
                return self._make_ack(False, pkt.sent_at)
            self.pending += 1
            if self.pending >= self.d:
                return self._make_ack(False, pkt.sent_at)
            return None
        if seq > self.expected:
            end = seq + pkt.size
            if self._ooo.get(seq, 0) < end:
                self._ooo[seq] = end
            return self._make_ack(pkt.ce_marked, pkt.sent_at)
        # stale retransmission below the cumulative point
        return self._make_ack(pkt.ce_marked, pkt.sent_at)


class Sender:
    """One flow's sending side: pacing, window control, loss recovery.

    The topology supplies inject(sender, pkt) to put a data packet on the
    wire and on_finish(sender) for flow completion. bytes_total None means
    a long-lived flow that sends until stopped.
    """

    __slots__ = (
        "engine",
        "flow_id",
        "algorithm",
        "inject",
        "on_finish",
        "mss",
        "beta",
        "rai_m",
        "scale_r",
        "g",
        "bytes_total",
        "min_rto_ns",
        "trace",
        "cwnd",
        "ssthresh",
        "in_slow_start",
        "ece_ever",
        "alpha",
        "rai_counter",
        "next_seq",
        "highest_acked",
        "round_target",
        "dup_acks",
        "recover_seq",
        "win_acked",
        "win_marked",
        "win_cut",
        "rtt_est_ns",
        "last_progress_ns",
        "start_ns",
        "finish_ns",
        "started",
        "finished",
        "stopped",
        "packets_sent",
        "retransmits",
        "ece_count",
        "_rto_pending",
    )

    def __init__(
        self,
        engine: Engine,
        flow_id: int,
        algorithm: str,
        inject,
        on_finish=None,
        mss: int = MTU,
        beta: float = 0.1,
        scale_r: int = 1,
        g: float = 1.0 / 16.0,
        bytes_total: int | None = None,
        rtt_hint_ns: int = 0,
        min_rto_ns: int = DEFAULT_MIN_RTO_NS,
        initial_cwnd: float = CWND_FLOOR,
        initial_ssthresh: float | None = None,
        alpha_init: float = 1.0,
        rai_phase: float = 0.0,
    ):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}")
        if not 0.0 < g <= 1.0:
            raise ValueError(f"g must be in (0, 1], got {g}")
        if scale_r < 1:
            raise ValueError(f"scale factor r must be a positive integer, got {scale_r}")
        if not 0.0 <= alpha_init <= 1.0:
            raise ValueError(f"alpha_init must be in [0, 1], got {alpha_init}")
        self.engine = engine
        self.flow_id = flow_id
        self.algorithm = algorithm
        self.inject = inject
        self.on_finish = on_finish
        self.mss = mss
        self.beta = beta
        self.rai_m = rai_period(beta)
        self.scale_r = scale_r
        self.g = g
        self.bytes_total = bytes_total
        self.min_rto_ns = min_rto_ns
        self.trace = None  # optional callable(time_ns, flow_id, cwnd, acked_bytes, event)

        self.cwnd = max(initial_cwnd, CWND_FLOOR)
        # a finite initial ssthresh at or below initial_cwnd starts the flow
        # in congestion avoidance (same idea as per-route ssthresh hints)
        self.ssthresh = math.inf if initial_ssthresh is None else max(initial_ssthresh, CWND_FLOOR)
        self.in_slow_start = self.cwnd < self.ssthresh
        self.ece_ever = False
        # the estimator default is conservative so a fresh flow's first marked
        # round cuts hard; alpha_init overrides it for flows entering a path
        # whose steady marking fraction is already known
        self.alpha = alpha_init
        # spread initial counter phases, else a population of identical
        # flows takes its reduced additive steps in lockstep and the
        # aggregate window moves in n-sized jumps
        self.rai_counter = int(rai_phase * self.rai_m) % self.rai_m
        self.next_seq = 0
        self.highest_acked = 0
        self.round_target = 0
        self.dup_acks = 0
        self.recover_seq = 0
        self.win_acked = 0
        self.win_marked = 0
        self.win_cut = False
        self.rtt_est_ns = rtt_hint_ns
        self.last_progress_ns = 0
        self.start_ns = 0
        self.finish_ns = 0
        self.started = False
        self.finished = False
        self.stopped = False
        self.packets_sent = 0
        self.retransmits = 0
        self.ece_count = 0
        self._rto_pending = False

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        now = self.engine.now
        self.started = True
        self.start_ns = now
        self.last_progress_ns = now
        if self.trace is not None:
            self.trace(now, self.flow_id, self.cwnd, 0, "start")
        self.pace()

    def stop(self) -> None:
        """Cease transmitting (long-lived flow teardown); in-flight drains."""
        self.stopped = True

    def bytes_acked(self) -> int:
        return self.highest_acked

    def snapshot(self) -> dict:
        return {
            "bytes_acked": self.highest_acked,
            "packets_sent": self.packets_sent,
            "retransmits": self.retransmits,
            "ece_count": self.ece_count,
        }

    # -- transmission ----------------------------------------------------

    def pace(self) -> None:
        """ACK-clocked transmission: send while in flight < floor(cwnd) * MSS."""
        if self.finished or self.stopped:
            return
        limit = int(self.cwnd) * self.mss
        total = self.bytes_total
        while (total is None or self.next_seq < total) and (
            self.next_seq - self.highest_acked < limit
        ):
            size = self.mss if total is None else min(self.mss, total - self.next_seq)
            self._transmit(self.next_seq, size)
            self.next_seq += size

    def _transmit(self, seq: int, size: int) -> None:
        # final segment of a sized flow carries push so the ack is not delayed
        push = self.bytes_total is not None and seq + size >= self.bytes_total
        pkt = Packet(self.flow_id, seq_no=seq, size=size, sent_at=self.engine.now, push=push)
        self.packets_sent += 1
        self.inject(self, pkt)
        if not self._rto_pending:
            self._arm_rto()

    def _retransmit_head(self) -> None:
        total = self.bytes_total
        seq = self.highest_acked
        size = self.mss if total is None else min(self.mss, total - seq)
        if size <= 0:
            return
        self.retransmits += 1
        self._transmit(seq, size)

    # -- acknowledgment handling ------------------------------------------

    def on_ack(self, ack: Packet) -> None:
        if self.finished:
            return
        if ack.ack_no > self.highest_acked:
            newly = ack.ack_no - self.highest_acked
            self.highest_acked = ack.ack_no
            self.dup_acks = 0
            self.last_progress_ns = self.engine.now
            if ack.sent_at:
                self._rtt_sample(self.engine.now - ack.sent_at)
            self._window_update(ack, newly)
            if ack.ack_no > self.round_target:
                self._round_end()
                self.round_target = self.next_seq
            if self.bytes_total is not None and self.highest_acked >= self.bytes_total:
                self._finish()
                return
            self.pace()
        else:
            # duplicate acks trigger fast-retransmit bookkeeping only
            self.dup_acks += 1
            if self.dup_acks == DUP_ACK_THRESHOLD:
                self.on_loss("triple_dup_ack")

    def _rtt_sample(self, sample_ns: int) -> None:
        if sample_ns <= 0:
            return
        if self.rtt_est_ns == 0:
            self.rtt_est_ns = sample_ns
        else:
            self.rtt_est_ns = (7 * self.rtt_est_ns + sample_ns) // 8

    def _finish(self) -> None:
        self.finished = True
        self.finish_ns = self.engine.now
        if self.trace is not None:
            self.trace(
                self.engine.now, self.flow_id, self.cwnd, self.highest_acked, "finish"
            )
        if self.on_finish is not None:
            self.on_finish(self)

    # -- per-algorithm window updates -------------------------------------

    def _window_update(self, ack: Packet, newly: int) -> None:
        algo = self.algorithm
        if algo == "tbtcp":
            self.on_ack_tbtcp(ack, newly)
        elif algo == "reno":
            self.on_ack_reno(ack, newly)
        else:
            self.on_ack_dctcp(ack, newly)

    def _note_ece(self) -> None:
        """React to one echoed mark."""
        self.ece_count += 1
        if self.trace is not None:
            self.trace(self.engine.now, self.flow_id, self.cwnd, self.highest_acked, "ece")
        if self.algorithm == "tbtcp":
            self.ece_ever = True
            self.in_slow_start = False
            if self.cwnd > CWND_FLOOR:
                self.cwnd = qcd_decrease(self.cwnd, self.scale_r)
        else:
            if self.in_slow_start:
                self.in_slow_start = False
                self.ssthresh = self.cwnd
            if not self.win_cut:
                # one reduction per round, taken as soon as the round's
                # first mark echo arrives; waiting for the round boundary
                # would add a lag round of queue growth
                self.win_cut = True
                self.cwnd = max(CWND_FLOOR, self.cwnd * (1.0 - self.alpha / 2.0))

    def on_ack_tbtcp(self, ack: Packet, newly: int) -> None:
        if ack.ece:
            self._note_ece()
        elif self.in_slow_start:
            self.cwnd += newly / self.mss
            if self.cwnd >= self.ssthresh:
                self.in_slow_start = False

    def on_ack_dctcp(self, ack: Packet, newly: int) -> None:
        self.win_acked += newly
        if ack.ece:
            self.win_marked += newly
            self._note_ece()
        elif self.in_slow_start:
            self.cwnd += newly / self.mss
            if self.cwnd >= self.ssthresh:
                self.in_slow_start = False
        elif self.algorithm == "dctcp":
            # classical per-ack avoidance, no byte counting: one MSS per
            # round when every packet is acked, half that under 2:1
            # ack coalescing
            self.cwnd += 1.0 / self.cwnd

    def on_ack_reno(self, ack: Packet, newly: int) -> None:
        if self.in_slow_start:
            self.cwnd += newly / self.mss
            if self.cwnd >= self.ssthresh:
                self.in_slow_start = False
        else:
            self.cwnd += 1.0 / self.cwnd

    def _round_end(self) -> None:
        algo = self.algorithm
        if algo == "reno":
            return
        if algo in ("tbtcp", "dctcp_rai") and not self.in_slow_start:
            self.rai_counter += 1
            if self.rai_counter >= self.rai_m:
                self.rai_counter = 0
                self.cwnd += 1.0
        if algo in ("dctcp", "dctcp_rai"):
            # close the mark-fraction observation window
            if self.win_acked > 0:
                self.alpha = dctcp_alpha_update(
                    self.alpha, self.win_marked / self.win_acked, self.g
                )
            self.win_acked = 0
            self.win_marked = 0
            self.win_cut = False

    # -- loss handling -----------------------------------------------------

    def on_loss(self, kind: str) -> None:
        if self.stopped:
            return
        now = self.engine.now
        if kind == "triple_dup_ack":
            if self.trace is not None:
                self.trace(now, self.flow_id, self.cwnd, self.highest_acked, "loss")
            if self.highest_acked >= self.recover_seq:
                # first signal of this episode: halve once, then hold
                self.recover_seq = self.next_seq
                self.in_slow_start = False
                self.cwnd = max(self.cwnd / 2.0, CWND_FLOOR)
                self.ssthresh = self.cwnd
            self._retransmit_head()
        elif kind == "rto":
            if self.trace is not None:
                self.trace(now, self.flow_id, self.cwnd, self.highest_acked, "rto")
            self.ssthresh = max(self.cwnd / 2.0, CWND_FLOOR)
            self.cwnd = CWND_FLOOR
            # the queue-canceling algorithm never returns to slow start
            # after its first echo; the others restart below ssthresh
            self.in_slow_start = not (self.algorithm == "tbtcp" and self.ece_ever)
            self.dup_acks = 0
            self.recover_seq = self.next_seq
            self.win_acked = 0
            self.win_marked = 0
            self.win_cut = False
            self.last_progress_ns = now
            self._retransmit_head()
        else:
            raise ValueError(f"unknown loss kind {kind!r}")

    # -- retransmission timer (single lazy check event per flow) -----------

    def rto_interval_ns(self) -> int:
        return max(2 * self.rtt_est_ns * 4, self.min_rto_ns)

    def _arm_rto(self) -> None:
        self._rto_pending = True
        self.engine.schedule(self.engine.now + self.rto_interval_ns(), self._rto_check)

    def _rto_check(self) -> None:
        self._rto_pending = False
        if self.finished or self.stopped:
            return
        if self.next_seq <= self.highest_acked:
            return  # nothing outstanding; re-armed on next transmit
        deadline = self.last_progress_ns + self.rto_interval_ns()
        now = self.engine.now
        if now >= deadline:
            # the retransmission below re-arms the timer via _transmit
            self.on_loss("rto")
        else:
            self._rto_pending = True
            self.engine.schedule(deadline, self._rto_check)
