"""Links and the bottleneck queue: serialization, drop-tail, marking, stats."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbtcpsim.engine import Engine
from tbtcpsim.marking import DctcpThreshold, IdealTbtcp, NoMarking, StepRed
from tbtcpsim.network import ACK_SIZE, MTU, BottleneckQueue, Link, Packet


def make_queue(policy=None, capacity=100, bandwidth=10**9, seed=1):
    eng = Engine(seed=seed)
    queue = BottleneckQueue(
        eng,
        Link(bandwidth),
        capacity=capacity,
        policy=policy or NoMarking(),
        rng=eng.stream("marking"),
    )
    return eng, queue


class TestLink:
    def test_full_packet_at_ten_gig(self):
        assert Link(10 * 10**9).serialization_ns(1500) == 1200

    def test_full_packet_at_one_gig(self):
        assert Link(10**9).serialization_ns(MTU) == 12_000

    def test_ack_size(self):
        assert Link(10**9).serialization_ns(ACK_SIZE) == 512

    def test_rounds_up_to_whole_nanoseconds(self):
        # 8e9 / 7 = 1142857142.86 -> 1142857143
        assert Link(7).serialization_ns(1) == 1_142_857_143

    def test_validation(self):
        with pytest.raises(ValueError):
            Link(0)
        with pytest.raises(ValueError):
            Link(10**9, propagation_ns=-1)


def test_packet_defaults():
    pkt = Packet(3, seq_no=1500)
    assert pkt.ect and not pkt.ce_marked and not pkt.is_ack
    ack = Packet(3, is_ack=True, ack_no=3000, ece=True)
    assert "ack_no=3000" in repr(ack)
    assert "seq=1500" in repr(pkt)


class TestQueueDatapath:
    def test_idle_arrival_bypasses_buffer(self):
        eng, q = make_queue()
        q.arrival(Packet(0))
        assert q.depth == 0 and q.busy
        assert q.enqueued == 1 and q.dequeued == 1

    def test_departure_after_serialization(self):
        eng, q = make_queue(bandwidth=10**9)
        got = []
        q.deliver = got.append
        q.arrival(Packet(0, seq_no=0))
        q.arrival(Packet(0, seq_no=1500))
        assert q.depth == 1
        eng.run_until(11_999)
        assert got == []
        eng.run_until(12_000)
        assert [p.seq_no for p in got] == [0]
        # work conserving: second departs exactly one serialization later
        eng.run_until(24_000)
        assert [p.seq_no for p in got] == [0, 1500]
        assert q.depth == 0 and not q.busy

    def test_drop_only_when_busy_and_full(self):
        eng, q = make_queue(capacity=2)
        for i in range(4):
            q.arrival(Packet(0, seq_no=i))
        # one serving + two waiting; the fourth arrival found depth == capacity
        assert q.depth == 2
        assert q.dropped == 1
        assert q.enqueued == 4 and q.dequeued == 1

    def test_conservation_mid_run_and_at_end(self):
        eng, q = make_queue(capacity=3)
        for i in range(6):
            eng.schedule(i * 1_000, q.arrival, Packet(0, seq_no=i))
        eng.run_until(3_500)
        assert q.enqueued == q.dequeued + q.dropped + q.depth
        eng.run_until(10**9)
        assert q.enqueued == q.dequeued + q.dropped + q.depth
        assert q.depth == 0

    def test_capacity_validation(self):
        with pytest.raises(ValueError):
            make_queue(capacity=0)


class TestQueueMarking:
    def test_certain_marking_above_threshold(self):
        # mark everything arriving at depth > 1, regardless of the draw
        eng, q = make_queue(policy=DctcpThreshold(1), capacity=50)
        pkts = [Packet(0, seq_no=i) for i in range(5)]
        for p in pkts:
            q.arrival(p)
        # arrival depths were 0 (service), 0, 1, 2, 3
        assert [p.ce_marked for p in pkts] == [False, False, False, True, True]
        assert q.marked == 2

    def test_pre_insertion_depth_excludes_packet_in_service(self):
        eng, q = make_queue(policy=DctcpThreshold(0), capacity=50)
        first, second, third = Packet(0), Packet(0), Packet(0)
        q.arrival(first)   # straight to service, saw depth 0
        q.arrival(second)  # waiting depth was 0 -> not marked
        q.arrival(third)   # waiting depth was 1 -> marked
        assert not first.ce_marked and not second.ce_marked and third.ce_marked

    def test_non_ect_packets_never_marked(self):
        eng, q = make_queue(policy=DctcpThreshold(0), capacity=50)
        q.arrival(Packet(0))
        pkt = Packet(0, ect=False)
        q.arrival(pkt)
        q.arrival(Packet(0, ect=False))
        assert not pkt.ce_marked
        assert q.marked == 0

    def test_full_queue_drops_without_marking(self):
        eng, q = make_queue(policy=DctcpThreshold(0), capacity=1)
        q.arrival(Packet(0))
        q.arrival(Packet(0))
        victim = Packet(0)
        q.arrival(victim)
        assert q.dropped == 1 and not victim.ce_marked

    def test_null_policy_never_marks(self):
        eng, q = make_queue()
        for i in range(20):
            q.arrival(Packet(0, seq_no=i))
        assert q.marked == 0


class TestPinnedDepthStatistics:
    def test_empirical_mark_fraction_unbiased(self, pinned_marks):
        # flat step: every arrival in (0, 100] sees probability exactly 0.05
        marks, depth = pinned_marks(StepRed(0.0, 800.0, 0.8), 50, 10_000, seed=2)
        assert depth == 50  # the depth really was pinned
        se = (10_000 * 0.05 * 0.95) ** 0.5
        assert abs(marks - 500) <= 3 * se

    def test_marks_per_window_equal_queue_depth(self, pinned_marks):
        # proportional curve at depth q marks q packets per bdp+q enqueues
        q, bdp = 40, 120.0
        n = 100 * (int(bdp) + q)  # 100 windows of bdp+q arrivals
        marks, depth = pinned_marks(IdealTbtcp(bdp=bdp), q, n, seed=1)
        assert depth == q
        per_window = marks / 100
        assert abs(per_window - q) / q < 0.05


class TestQueueStatsWindows:
    def test_time_weighted_histogram(self):
        eng, q = make_queue(bandwidth=10**9)  # 12us per packet
        q.arrival(Packet(0))
        q.arrival(Packet(0))
        eng.run_until(24_000)
        eng.schedule(30_000, lambda: None)
        eng.run_until(30_000)
        hist = q.depth_histogram()
        # depth 1 while the first packet serialized, 0 afterwards
        assert hist[1] == 12_000
        assert hist[0] == 18_000

    def test_reset_window_clears_stats_not_counters(self):
        eng, q = make_queue()
        for i in range(5):
            q.arrival(Packet(0, seq_no=i))
        eng.run_until(2 * 12_000)
        q.reset_window()
        assert q.enqueued == 5  # cumulative counters survive
        assert q.win_busy_ns == 0
        assert q.win_max_depth == q.depth
        assert q.depth_histogram() in ({}, {q.depth: 0})

    def test_win_max_depth_tracks_peak(self):
        eng, q = make_queue()
        for i in range(7):
            q.arrival(Packet(0, seq_no=i))
        assert q.win_max_depth == 6

    def test_snapshot_counters(self):
        eng, q = make_queue(capacity=1)
        for i in range(3):
            q.arrival(Packet(0, seq_no=i))
        snap = q.snapshot()
        assert snap == {
            "enqueued": 3, "dequeued": 1, "dropped": 1, "marked": 0, "depth": 1,
        }


def test_trace_event_stream():
    eng, q = make_queue(policy=DctcpThreshold(0), capacity=2)
    events = []
    q.trace = lambda t, depth, event: events.append((t, depth, event))
    for i in range(4):
        q.arrival(Packet(0, seq_no=i))
    eng.run_until(12_000)
    kinds = [e for _, _, e in events]
    # arrivals: serve, queue, queue+mark, drop; then one service start
    assert kinds == ["enq", "enq", "mark", "enq", "drop", "deq"]
    times = [t for t, _, _ in events]
    assert times == sorted(times)


@given(
    arrivals=st.lists(
        st.integers(min_value=0, max_value=200_000), min_size=1, max_size=60
    ),
    capacity=st.integers(min_value=1, max_value=5),
)
@settings(max_examples=60, deadline=None)
def test_conservation_under_random_arrivals(arrivals, capacity):
    eng, q = make_queue(capacity=capacity)
    depth_bound_ok = []
    q.trace = lambda t, depth, event: depth_bound_ok.append(0 <= depth <= capacity)
    for i, t in enumerate(sorted(arrivals)):
        eng.schedule(t, q.arrival, Packet(0, seq_no=i))
    eng.run_until(10**9)
    assert q.enqueued == q.dequeued + q.dropped + q.depth
    assert q.enqueued == len(arrivals)
    assert q.depth == 0
    assert all(depth_bound_ok)
