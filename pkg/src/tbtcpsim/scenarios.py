"""Named experiment catalog.

Every scenario comes in two sizes. The fast variant runs the same
dimensionless operating point (flows per BDP, marking thresholds as BDP
fractions, durations in RTT counts) at desk scale, finishing in seconds;
the paper variant keeps the original bandwidths and durations and is only
reachable through the CLI for patient reproduction runs. Queue laws,
fairness indexes and slopes are scale-free, which is what makes the fast
variants meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping

from tbtcpsim.curvefit import CurveSpec, fit_pmax
from tbtcpsim.engine import NS_PER_MS, NS_PER_S, NS_PER_US
from tbtcpsim.experiments import ExperimentConfig, FlowSpec, WorkloadSpec
from tbtcpsim.network import MTU

GBPS = 10 ** 9

# Testbed curve geometry, as fractions of the bandwidth-delay product:
# the no-mark offset l sat at 138/180 of BDP and the mark-all point at
# 550/180. Step scenarios reuse those ratios at whatever scale they run.
L_OVER_BDP = 138.0 / 180.0
TMAX_OVER_BDP = 550.0 / 180.0


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    build: Callable[[bool, int], tuple[ExperimentConfig, ...]]


def _bdp_pkts(bps: int, rtt_ns: int) -> float:
    return bps * rtt_ns / (8.0 * MTU * NS_PER_S)


def _steady_base(paper: bool, seed: int) -> ExperimentConfig:
    # 40 Gbps / 160 us in the original; the fast variant trades bandwidth
    # for RTT at a fixed 533-packet BDP so queue laws are unchanged
    if paper:
        bps, rtt, dur = 40 * GBPS, 160 * NS_PER_US, 10 * NS_PER_S
    else:
        bps, rtt, dur = 1 * GBPS, 6400 * NS_PER_US, 2400 * NS_PER_MS
    return ExperimentConfig(
        name="steady-queue",
        algorithm="tbtcp",
        bottleneck_bps=bps,
        per_flow_rtts=(rtt,),
        n_flows=100,
        duration_ns=dur,
        seed=seed,
        beta=0.1,
        marking="ideal",
        warmup_frac=0.25,
    )


def _steady_queue(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    base = _steady_base(paper, seed)
    return tuple(
        replace(base, name=f"steady-queue-n{n}", n_flows=n) for n in (50, 100)
    )


def _beta_sweep(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    base = _steady_base(paper, seed)
    return tuple(
        replace(base, name=f"beta-sweep-b{beta}", beta=beta)
        for beta in (0.05, 0.1, 0.2, 0.5)
    )


def _decoupling_base(paper: bool, seed: int, n_flows: int = 100) -> ExperimentConfig:
    # pipe deep enough (BDP ~1000 packets) that 200 flows still sit above
    # the 2-MSS window floor; k is the classic BDP / 7.  A compressed run
    # has no room for hundreds of simultaneous slow starts plus the
    # reduced increase's slow repair of the resulting mass collapse, so
    # flows start in congestion avoidance at their steady-state share,
    # spread over one RTT, with the mark estimator preloaded so the first
    # marked round cancels the standing queue instead of halving every
    # window.  The additive-increase fraction stays small enough that k
    # dominates the queue ceiling the way it does at full scale (where k
    # is hundreds of packets against beta*n of ~10).
    if paper:
        bps, rtt, dur = 40 * GBPS, 300 * NS_PER_US, 10 * NS_PER_S
    else:
        bps, rtt, dur = 1 * GBPS, 12 * NS_PER_MS, 2600 * NS_PER_MS
    bdp = _bdp_pkts(bps, rtt)
    k = round(bdp / 7.0)
    stagger = 0 if paper else round(rtt / n_flows)
    iw = max(2.0, (bdp + k) / n_flows)
    return ExperimentConfig(
        name="decoupling",
        algorithm="dctcp",
        bottleneck_bps=bps,
        per_flow_rtts=(rtt,),
        n_flows=n_flows,
        duration_ns=dur,
        seed=seed,
        beta=0.02,
        marking="threshold",
        k_pkts=k,
        warmup_frac=0.3,
        initial_cwnd=iw,
        initial_ssthresh=None if paper else iw,
        alpha_init=1.0 if paper else min(1.0, 2.0 * k / (bdp + k)),
        flow_schedule=tuple(
            FlowSpec(start_ns=i * stagger) for i in range(n_flows)
        ),
    )


def _queue_cdf(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    base = _decoupling_base(paper, seed)
    return (
        replace(base, name="queue-cdf-dctcp", algorithm="dctcp"),
        replace(base, name="queue-cdf-dctcp-rai", algorithm="dctcp_rai"),
        replace(
            base,
            name="queue-cdf-tbtcp",
            algorithm="tbtcp",
            marking="ideal",
            beta=0.1,
            k_pkts=None,
        ),
    )


def _buffer_decoupling(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    out = []
    for algo in ("dctcp", "dctcp_rai"):
        for n in (50, 100, 200):
            base = _decoupling_base(paper, seed, n_flows=n)
            out.append(
                replace(base, name=f"buffer-decoupling-{algo}-n{n}", algorithm=algo)
            )
    return tuple(out)


def _reduced_k(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    base = _decoupling_base(paper, seed)
    full_k = base.k_pkts
    half_k = round(full_k / 2.0)
    bdp = _bdp_pkts(base.bottleneck_bps, base.per_flow_rtts[0])
    iw = max(2.0, (bdp + half_k) / base.n_flows)
    return (
        replace(base, name="reduced-k-dctcp-full", algorithm="dctcp"),
        replace(
            base,
            name="reduced-k-rai-half",
            algorithm="dctcp_rai",
            k_pkts=half_k,
            initial_cwnd=iw,
            initial_ssthresh=base.initial_ssthresh if paper else iw,
            alpha_init=base.alpha_init if paper else min(1.0, 2.0 * half_k / (bdp + half_k)),
        ),
    )


def _fairness(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    # four identical flows joining in a staggered ramp, all running to the end
    if paper:
        bps, rtt, step, dur = 40 * GBPS, 160 * NS_PER_US, 10 * NS_PER_S, 50 * NS_PER_S
    else:
        bps, rtt, step, dur = 1 * GBPS, 800 * NS_PER_US, 300 * NS_PER_MS, 2400 * NS_PER_MS
    schedule = tuple(FlowSpec(start_ns=i * step) for i in range(4))
    return (
        ExperimentConfig(
            name="fairness-staggered",
            algorithm="tbtcp",
            bottleneck_bps=bps,
            per_flow_rtts=(rtt,),
            n_flows=4,
            duration_ns=dur,
            seed=seed,
            beta=0.1,
            marking="ideal",
            flow_schedule=schedule,
            warmup_frac=0.1,
        ),
    )


def _convergence_config(
    paper: bool, seed: int, algorithm: str, beta: float
) -> ExperimentConfig:
    # one incumbent, one joiner, then the incumbent leaves; convergence is
    # checked at the join and at the leave
    if paper:
        bps, rtt = 10 * GBPS, 80 * NS_PER_US
        join, leave, dur = 10 * NS_PER_S, 20 * NS_PER_S, 30 * NS_PER_S
    else:
        # BDP of ~26 packets keeps the post-slow-start additive ramp (one
        # segment per 1/beta rounds) down to tens of milliseconds
        bps, rtt = 1 * GBPS, 320 * NS_PER_US
        join, leave, dur = 600 * NS_PER_MS, 1200 * NS_PER_MS, 1800 * NS_PER_MS
    schedule = (
        FlowSpec(start_ns=0, stop_ns=leave),
        FlowSpec(start_ns=join),
    )
    # a marking offset of ~BDP/4 absorbs the joiner's slow-start transient
    # so it exits near its fair share instead of being cut down at a tiny
    # window; production switch settings use an offset the same way
    l_pkts = 0.0 if paper else 6.0
    # the threshold baseline keeps its deployment-practice setting per link
    # speed.  BDP/7 here would be under four packets, and at that depth two
    # round-synchronized flows can lock into a stable unfair split: the
    # end-of-round marking burst lands on the same flow's packets every
    # cycle and exactly cancels the additive-increase equalization.
    k = 65.0 if paper else 20.0
    return ExperimentConfig(
        name=f"convergence-{algorithm}",
        algorithm=algorithm,
        bottleneck_bps=bps,
        per_flow_rtts=(rtt,),
        n_flows=2,
        duration_ns=dur,
        seed=seed,
        beta=beta,
        marking="ideal" if algorithm == "tbtcp" else "threshold",
        marking_l_pkts=l_pkts if algorithm == "tbtcp" else 0.0,
        k_pkts=None if algorithm == "tbtcp" else k,
        # the joiner has to ramp from a genuinely small window or the
        # measurement is vacuous: ten segments is already the fair share
        # of this pipe
        initial_cwnd=2.0,
        warmup_frac=0.0,
        flow_schedule=schedule,
        convergence_events=(join, leave),
    )


def _convergence(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    return (
        _convergence_config(paper, seed, "tbtcp", 0.1),
        _convergence_config(paper, seed, "dctcp", 0.1),
    )


def _beta_convergence(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    out = []
    for beta in (0.1, 0.2, 0.3, 0.5):
        cfg = _convergence_config(paper, seed, "tbtcp", beta)
        out.append(replace(cfg, name=f"beta-convergence-b{beta}"))
    return tuple(out)


def _rtt_fairness(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    # four flows with spread propagation delays; per-host NICs at half the
    # bottleneck rate cap any single flow at half capacity
    if paper:
        bps, dur = 40 * GBPS, 10 * NS_PER_S
    else:
        bps, dur = 20 * GBPS, 600 * NS_PER_MS
    rtts = tuple(r * NS_PER_US for r in (20, 60, 100, 140))
    avg_rtt = sum(rtts) // len(rtts)
    k = round(_bdp_pkts(bps, avg_rtt) / 7.0)
    base = ExperimentConfig(
        name="rtt-fairness",
        algorithm="tbtcp",
        bottleneck_bps=bps,
        per_flow_rtts=rtts,
        n_flows=4,
        duration_ns=dur,
        seed=seed,
        beta=0.1,
        marking="ideal",
        access_bps=bps // 2,
        warmup_frac=0.25,
    )
    return (
        replace(base, name="rtt-fairness-tbtcp-minrtt", bdp_rtt_choice="min"),
        replace(base, name="rtt-fairness-tbtcp-avgrtt", bdp_rtt_choice="avg"),
        replace(base, name="rtt-fairness-tbtcp-maxrtt", bdp_rtt_choice="max"),
        replace(
            base,
            name="rtt-fairness-dctcp",
            algorithm="dctcp",
            marking="threshold",
            k_pkts=k,
        ),
    )


def _fct_base(paper: bool, seed: int) -> ExperimentConfig:
    # short propagation, as on hardware: the baseline's standing queue
    # then costs a large multiple of the base RTT, which is where the
    # completion-time differences come from.
    if paper:
        bps, rtt, dur = 10 * GBPS, 100 * NS_PER_US, 10 * NS_PER_S
        beta, iw = 0.1, 10.0
        l = round(L_OVER_BDP * _bdp_pkts(bps, rtt))
    else:
        # The compressed pipe needs three adjustments.  A joiner's
        # slow-start overshoot is a fixed handful of packets at any
        # scale, so the curve offset grows to a full pipe (the classic
        # buffer-sizing headroom) for an incumbent to survive each burst
        # without draining the link.  The reclaim rate rises with flow
        # lifetimes measured in rounds, ten times the hardware count at
        # this speed.  And the initial window stays a fraction of the
        # pipe, as the default ten segments are on a hardware pipe.
        bps, rtt, dur = 1 * GBPS, 100 * NS_PER_US, 3 * NS_PER_S
        beta, iw = 0.3, 4.0
        l = round(_bdp_pkts(bps, rtt))
    return ExperimentConfig(
        name="fct-mixed",
        algorithm="tbtcp",
        bottleneck_bps=bps,
        per_flow_rtts=(rtt,),
        n_flows=1,
        duration_ns=dur,
        seed=seed,
        beta=beta,
        marking="ideal",
        marking_l_pkts=l,
        initial_cwnd=iw,
        warmup_frac=0.1,
        workload=WorkloadSpec(load=0.8),
    )


def _fct_mixed(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    base = _fct_base(paper, seed)
    # the baseline keeps the deployment-practice threshold for its link
    # speed (65 at 10G, 20 at 1G), not BDP/7, which at these short RTTs
    # would be a degenerate one-packet threshold
    k = 65 if paper else 20
    return (
        replace(base, name="fct-mixed-tbtcp"),
        replace(
            base,
            name="fct-mixed-dctcp",
            algorithm="dctcp",
            marking="threshold",
            k_pkts=k,
        ),
    )


def _fct_mixed_step(paper: bool, seed: int) -> tuple[ExperimentConfig, ...]:
    # same comparison but with the switch-programmable 8-step curve,
    # thresholds at testbed ratios.  The sender-compensated scaling r = 4
    # only makes sense when windows are hundreds of segments; against a
    # ~10-segment desk window a 4-MSS step per echo is half the window,
    # so the compressed runs fit the unscaled curve.
    base = _fct_base(paper, seed)
    r = 4 if paper else 1
    bdp_pkts = base.bdp_pkts()
    kb_per_pkt = MTU / 1024.0
    t_min_pkts = L_OVER_BDP * bdp_pkts
    t_max_pkts = TMAX_OVER_BDP * bdp_pkts
    fit = fit_pmax(
        CurveSpec(
            bdp=bdp_pkts * kb_per_pkt,
            l=t_min_pkts * kb_per_pkt,
            t_min=t_min_pkts * kb_per_pkt,
            t_max=t_max_pkts * kb_per_pkt,
            scale_r=r,
        )
    )
    k = 65 if paper else 20
    return (
        replace(
            base,
            name="fct-step-tbtcp",
            marking="step",
            scale_r=r,
            t_min_pkts=round(t_min_pkts),
            t_max_pkts=round(t_max_pkts),
            p_max=fit.p_max,
        ),
        replace(
            base,
            name="fct-step-dctcp",
            algorithm="dctcp",
            marking="threshold",
            k_pkts=k,
        ),
    )


def named_scenarios() -> Mapping[str, Scenario]:
    """The built-in catalog, keyed by CLI name."""
    entries = (
        Scenario(
            "steady-queue",
            "100-RTT steady state of the canceling-decrease algorithm at "
            "n=50 and n=100; mean queue should sit near beta*n packets",
            _steady_queue,
        ),
        Scenario(
            "beta-sweep",
            "mean queue versus beta at n=100 under ideal marking",
            _beta_sweep,
        ),
        Scenario(
            "queue-cdf",
            "time-weighted queue depth CDFs for dctcp, dctcp_rai and tbtcp",
            _queue_cdf,
        ),
        Scenario(
            "buffer-decoupling",
            "max queue versus flow count: threshold marking grows ~1 packet "
            "per flow, reduced additive increase stays nearly flat",
            _buffer_decoupling,
        ),
        Scenario(
            "reduced-k",
            "utilization of dctcp_rai at half threshold versus dctcp at full",
            _reduced_k,
        ),
        Scenario(
            "fairness",
            "four identical flows joining staggered; fair sharing by the end",
            _fairness,
        ),
        Scenario(
            "convergence",
            "two-flow join then leave for tbtcp and dctcp with timing",
            _convergence,
        ),
        Scenario(
            "beta-convergence",
            "join/leave convergence across beta, including the beta=0.5 "
            "regime where the joiner is not expected to reach its share",
            _beta_convergence,
        ),
        Scenario(
            "rtt-fairness",
            "four flows at 20/60/100/140us RTT; marking-BDP choice and a "
            "threshold baseline compared by Jain index",
            _rtt_fairness,
        ),
        Scenario(
            "fct-mixed",
            "Poisson mixed workload (80% short flows); FCT by size bucket",
            _fct_mixed,
        ),
        Scenario(
            "fct-mixed-step",
            "the FCT comparison with the fitted 8-step switch curve at r=4",
            _fct_mixed_step,
        ),
    )
    return {s.name: s for s in entries}
