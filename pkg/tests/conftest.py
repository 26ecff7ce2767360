"""Shared fixtures: scenario runs are expensive, so each named scenario is
simulated once per session and its reports are shared between the unit tests
and the acceptance suite."""

from __future__ import annotations

import pytest

from tbtcpsim.engine import Engine
from tbtcpsim.experiments import run_experiment
from tbtcpsim.network import MTU, BottleneckQueue, Link, Packet
from tbtcpsim.scenarios import named_scenarios


def run_scenario(name: str, only=None, paper: bool = False, seed: int = 1):
    """Run every config of a named scenario (or a subset) and key by name."""
    family = named_scenarios()[name]
    reports = {}
    for cfg in family.build(paper, seed):
        if only is not None and cfg.name not in only:
            continue
        reports[cfg.name] = run_experiment(cfg)
    return reports


@pytest.fixture(scope="session")
def steady_queue_reports():
    return run_scenario("steady-queue")


@pytest.fixture(scope="session")
def buffer_decoupling_reports():
    return run_scenario("buffer-decoupling")


@pytest.fixture(scope="session")
def reduced_k_reports():
    return run_scenario("reduced-k")


@pytest.fixture(scope="session")
def rtt_fairness_reports():
    return run_scenario("rtt-fairness")


@pytest.fixture(scope="session")
def convergence_reports():
    return run_scenario("convergence")


@pytest.fixture(scope="session")
def beta05_convergence_report():
    only = ("beta-convergence-b0.5",)
    return run_scenario("beta-convergence", only=only)[only[0]]


@pytest.fixture(scope="session")
def fct_reports():
    return run_scenario("fct-mixed")


@pytest.fixture(scope="session")
def fairness_report():
    return run_scenario("fairness")["fairness-staggered"]


def pinned_depth_marks(policy, depth: int, n_arrivals: int, seed: int = 1):
    """Mark count over n_arrivals enqueues each seeing exactly `depth` waiting
    packets, produced through the real queue datapath.

    The queue is prefilled to depth+1 waiting packets (one more in service);
    arrivals are then interleaved between egress completions, so every
    pre-insertion depth equals `depth` exactly. Returns (marks, final_depth);
    final_depth == depth confirms the pinning held.
    """
    eng = Engine(seed=seed)
    queue = BottleneckQueue(
        eng, Link(10**9), capacity=depth + 10, policy=policy,
        rng=eng.stream("marking"),
    )
    t = queue.link.serialization_ns(MTU)
    for _ in range(depth + 2):
        eng.schedule(0, queue.arrival, Packet(0))
    eng.run_until(0)
    base = queue.marked
    for k in range(1, n_arrivals + 1):
        eng.schedule(k * t + t // 2, queue.arrival, Packet(0))
    eng.run_until((n_arrivals + 1) * t)
    return queue.marked - base, queue.depth


@pytest.fixture(scope="session")
def pinned_marks():
    return pinned_depth_marks
