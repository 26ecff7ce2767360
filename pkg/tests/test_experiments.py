"""Experiment configs, workload generation, dumbbell wiring, and the run loop."""

from __future__ import annotations

import math
from dataclasses import replace
from statistics import mean

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbtcpsim.engine import NS_PER_MS, NS_PER_US, Engine
from tbtcpsim.experiments import (
    ACCESS_SPEEDUP,
    BDP_RTT_CHOICES,
    DEFAULT_BUFFER_PKTS,
    ExperimentConfig,
    FlowSpec,
    WorkloadSpec,
    build_dumbbell,
    generate_workload,
    run_experiment,
)
from tbtcpsim.marking import DctcpThreshold, IdealTbtcp, NoMarking, StepRed
from tbtcpsim.metrics import queue_stats

MBPS = 10**6
GBPS = 10**9


def micro_config(**overrides):
    """A cheap-but-valid dumbbell: 100 Mbps, 1 ms RTT, 150 ms horizon."""
    base = dict(
        name="micro",
        algorithm="tbtcp",
        bottleneck_bps=100 * MBPS,
        per_flow_rtts=(1 * NS_PER_MS,),
        n_flows=2,
        duration_ns=150 * NS_PER_MS,
        marking="ideal",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# -- flow and workload specs -----------------------------------------------------


def test_flow_spec_validation():
    with pytest.raises(ValueError):
        FlowSpec(start_ns=-1)
    with pytest.raises(ValueError):
        FlowSpec(start_ns=10, stop_ns=10)
    with pytest.raises(ValueError):
        FlowSpec(size_bytes=0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"load": 0.0},
        {"size_min": 0},
        {"size_min": 200 * 1024},  # above the split
        {"size_split": 6 * 1024 * 1024},  # above the max
        {"short_weight": -0.1},
        {"short_weight": 1.1},
    ],
)
def test_workload_spec_validation(kwargs):
    with pytest.raises(ValueError):
        WorkloadSpec(**kwargs)


def test_mean_size_closed_form():
    spec = WorkloadSpec(short_weight=1.0)  # single segment
    a, b = spec.size_min, spec.size_split
    assert spec.mean_size_bytes() == pytest.approx((b - a) / math.log(b / a))


def test_draws_agree_with_mean_and_bounds():
    spec = WorkloadSpec()
    rng = Engine(seed=7).stream("sizes")
    draws = [spec.draw_size(rng) for _ in range(200_000)]
    assert min(draws) >= spec.size_min and max(draws) <= spec.size_max
    assert mean(draws) == pytest.approx(spec.mean_size_bytes(), rel=0.03)


def test_short_flow_fraction():
    spec = WorkloadSpec()
    rng = Engine(seed=3).stream("sizes")
    draws = [spec.draw_size(rng) for _ in range(20_000)]
    frac = sum(1 for d in draws if d < spec.size_split) / len(draws)
    assert abs(frac - spec.short_weight) < 0.03


def test_draws_are_deterministic():
    spec = WorkloadSpec()
    a = [spec.draw_size(Engine(seed=5).stream("s")) for _ in range(1)]
    b = [spec.draw_size(Engine(seed=5).stream("s")) for _ in range(1)]
    assert a == b


def test_generate_workload_is_deterministic():
    spec = WorkloadSpec(load=0.5)
    one = generate_workload(spec, Engine(seed=2).stream("w"), GBPS, 10**9)
    two = generate_workload(spec, Engine(seed=2).stream("w"), GBPS, 10**9)
    assert one == two
    assert all(f.start_ns < 10**9 and f.size_bytes > 0 for f in one)


def test_generated_offered_load_matches_target():
    spec = WorkloadSpec(load=0.6)
    duration_ns = 60 * 10**9
    flows = generate_workload(spec, Engine(seed=4).stream("w"), GBPS, duration_ns)
    offered = sum(f.size_bytes for f in flows) * 8.0 / (duration_ns / 10**9)
    assert offered == pytest.approx(0.6 * GBPS, rel=0.10)


# -- experiment config -------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"algorithm": "cubic"},
        {"marking": "red"},
        {"bdp_rtt_choice": "median"},
        {"n_flows": 0},
        {"bottleneck_bps": 0},
        {"per_flow_rtts": ()},
        {"per_flow_rtts": (0,)},
        {"duration_ns": 50 * NS_PER_MS},  # under 100 rounds of the largest RTT
        {"warmup_frac": 1.0},
        {"marking": "step"},  # thresholds missing
    ],
)
def test_experiment_config_validation(kwargs):
    with pytest.raises(ValueError):
        micro_config(**kwargs)


def test_rtt_choice_for_sizing():
    cfg = micro_config(
        per_flow_rtts=(100 * NS_PER_US, 200 * NS_PER_US, 400 * NS_PER_US),
        duration_ns=100 * NS_PER_MS,
    )
    assert cfg.rtt_for_marking_ns() == round(700 * NS_PER_US / 3)
    assert replace(cfg, bdp_rtt_choice="min").rtt_for_marking_ns() == 100 * NS_PER_US
    assert replace(cfg, bdp_rtt_choice="max").rtt_for_marking_ns() == 400 * NS_PER_US
    assert BDP_RTT_CHOICES == ("min", "avg", "max")


def test_pipe_size_hand_value():
    cfg = micro_config(
        bottleneck_bps=40 * GBPS,
        per_flow_rtts=(160 * NS_PER_US,),
        duration_ns=100 * NS_PER_MS,
    )
    assert cfg.bdp_pkts() == pytest.approx(533.333, abs=0.01)


def test_default_threshold_is_a_seventh_of_the_pipe():
    cfg = micro_config(
        bottleneck_bps=40 * GBPS,
        per_flow_rtts=(250 * NS_PER_US,),
        duration_ns=100 * NS_PER_MS,
        marking="threshold",
    )
    assert 118.0 <= cfg.effective_k_pkts() <= 120.0
    assert micro_config(k_pkts=33.0).effective_k_pkts() == 33.0


def test_policy_dispatch():
    assert isinstance(micro_config(marking="ideal").build_policy(), IdealTbtcp)
    assert isinstance(micro_config(marking="threshold").build_policy(), DctcpThreshold)
    assert isinstance(micro_config(marking="none").build_policy(), NoMarking)
    step = micro_config(marking="step", t_min_pkts=0.0, t_max_pkts=80.0, p_max=0.7)
    assert isinstance(step.build_policy(), StepRed)


def test_policy_geometry_is_forwarded():
    cfg = micro_config(marking="ideal", marking_l_pkts=6.0, scale_r=2)
    policy = cfg.build_policy()
    assert policy.l == 6.0 and policy.scale_r == 2
    assert policy.bdp == pytest.approx(cfg.bdp_pkts())


def test_resolved_schedule_default_and_explicit():
    assert len(micro_config(n_flows=3).resolved_schedule()) == 3
    sched = (FlowSpec(start_ns=5), FlowSpec(start_ns=6))
    assert micro_config(flow_schedule=sched).resolved_schedule() == sched


# -- dumbbell wiring ------------------------------------------------------------------


def test_rtt_below_twice_serialization_is_rejected():
    # 100 Mbps serializes an MTU in 120 us; a 200 us RTT cannot ack-clock it
    cfg = micro_config(per_flow_rtts=(200 * NS_PER_US,), duration_ns=100 * NS_PER_MS)
    with pytest.raises(ValueError):
        build_dumbbell(cfg)


def test_increase_phases_are_spread_across_flows():
    cfg = micro_config(n_flows=10, beta=0.1)
    bell = build_dumbbell(cfg)
    assert [p.sender.rai_counter for p in bell.ports] == list(range(10))


def test_access_defaults_to_nic_speedup():
    bell = build_dumbbell(micro_config())
    assert bell.ports[0].access.bandwidth_bps == ACCESS_SPEEDUP * 100 * MBPS


def test_propagation_split_reconstructs_rtt():
    bell = build_dumbbell(micro_config(per_flow_rtts=(1 * NS_PER_MS + 1,)))
    port = bell.ports[0]
    assert port.fwd_prop_ns + port.ack_prop_ns == 1 * NS_PER_MS + 1


# -- run loop -----------------------------------------------------------------------


def test_run_is_deterministic():
    cfg = micro_config()
    assert run_experiment(cfg) == run_experiment(cfg)


def test_queue_conservation_and_bounds():
    rep = run_experiment(micro_config(n_flows=3))
    c = rep.counters
    assert c["enqueued"] == c["dequeued"] + c["dropped"] + c["depth"]
    assert 0.0 <= rep.utilization <= 1.0
    assert c["marked"] <= c["enqueued"]
    assert rep.queue.max_pkts <= DEFAULT_BUFFER_PKTS


def test_long_lived_run_fills_the_pipe():
    rep = run_experiment(micro_config())
    assert rep.utilization > 0.9
    assert rep.jain is not None and rep.jain > 0.8
    assert set(rep.per_flow_throughput_bps) == {0, 1}
    total = sum(rep.per_flow_throughput_bps.values())
    assert total == pytest.approx(rep.utilization * 100 * MBPS, rel=0.05)


def test_empty_schedule_yields_empty_report():
    rep = run_experiment(micro_config(flow_schedule=()))
    assert rep.utilization == 0.0
    assert rep.fct_records == () and rep.jain is None
    assert rep.counters["enqueued"] == 0


def test_sized_flows_produce_completion_records():
    sched = (
        FlowSpec(size_bytes=100 * 1024),
        FlowSpec(start_ns=NS_PER_MS, size_bytes=100 * 1024),
    )
    rep = run_experiment(micro_config(flow_schedule=sched))
    assert sorted(size for size, _ in rep.fct_records) == [102400, 102400]
    assert all(fct >= NS_PER_MS for _, fct in rep.fct_records)  # at least one RTT
    assert rep.jain is None  # no long-lived flows to compare


def test_access_cap_limits_delivery_rate():
    cfg = micro_config(
        access_bps=50 * MBPS, n_flows=1, marking="none", duration_ns=200 * NS_PER_MS
    )
    rep = run_experiment(cfg)
    assert 0.40 <= rep.utilization <= 0.60  # bottleneck busy half the time


def test_workload_run_is_deterministic_and_conserving():
    cfg = micro_config(
        workload=WorkloadSpec(load=0.4), n_flows=1, flow_schedule=None
    )
    one, two = run_experiment(cfg), run_experiment(cfg)
    assert one == two
    c = one.counters
    assert c["enqueued"] == c["dequeued"] + c["dropped"] + c["depth"]
    assert all(4 * 1024 <= size <= 5 * 1024 * 1024 for size, _ in one.fct_records)


def test_throughput_windows_cover_the_run():
    rep = run_experiment(micro_config())
    ends = [w.t_end_ns for w in rep.throughput_windows]
    assert ends == sorted(ends)
    assert ends[0] == 10 * NS_PER_MS and ends[-1] == rep.duration_ns


def test_queue_trace_is_time_ordered():
    rep = run_experiment(micro_config(collect_queue_trace=True))
    times = [t for t, _, _ in rep.queue_trace]
    assert times == sorted(times)
    kinds = {e for _, _, e in rep.queue_trace}
    assert "sample" in kinds and kinds <= {"sample", "enq", "deq", "mark", "drop"}


def test_flow_trace_records_lifecycle():
    sched = (FlowSpec(size_bytes=50 * 1024),)
    rep = run_experiment(micro_config(flow_schedule=sched, collect_flow_trace=True))
    events = [e for *_, e in rep.flow_trace]
    assert events[0] == "start" and "finish" in events


def test_window_sum_tracks_pipe_plus_queue():
    # ack-clocking identity: the summed windows of saturated flows equal the
    # packets in flight, which is the pipe plus the standing queue
    cfg = ExperimentConfig(
        name="identity",
        algorithm="tbtcp",
        bottleneck_bps=GBPS,
        per_flow_rtts=(1_200 * NS_PER_US,),
        n_flows=10,
        duration_ns=600 * NS_PER_MS,
        beta=0.5,
        marking="ideal",
    )
    eng = Engine(seed=cfg.seed)
    bell = build_dumbbell(cfg, eng)
    warm = 200 * NS_PER_MS
    eng.run_until(warm)
    bell.queue.reset_window()
    sums = []
    t = warm
    while t < cfg.duration_ns:
        t += 10 * NS_PER_MS
        eng.run_until(t)
        sums.append(sum(p.sender.cwnd for p in bell.ports))
    mean_q = queue_stats(bell.queue.depth_histogram(), 0).mean_pkts
    assert mean(sums) == pytest.approx(cfg.bdp_pkts() + mean_q, rel=0.10)


@given(
    n=st.integers(1, 4),
    algo=st.sampled_from(("tbtcp", "dctcp", "reno")),
    marking=st.sampled_from(("ideal", "threshold")),
    seed=st.integers(1, 50),
)
@settings(max_examples=10, deadline=None)
def test_micro_runs_conserve_packets(n, algo, marking, seed):
    cfg = micro_config(n_flows=n, algorithm=algo, marking=marking, seed=seed)
    rep = run_experiment(cfg)
    c = rep.counters
    assert c["enqueued"] == c["dequeued"] + c["dropped"] + c["depth"]
    assert 0.0 <= rep.utilization <= 1.0
