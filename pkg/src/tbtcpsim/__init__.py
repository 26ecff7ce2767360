"""Deterministic packet-level network simulator for tiny-buffer TCP research.

The package provides a discrete-event engine with seeded random streams,
a bottleneck queue with pluggable ECN marking policies, window-based
transport senders (tbtcp, dctcp, dctcp_rai, reno), a marking-curve fitter
for 8-step commodity RED hardware, an experiment harness with named
scenarios, and a command line front end.
"""

from tbtcpsim.engine import Engine, RngStream, SimulationError, uniform01

__version__ = "0.1.0"

__all__ = ["Engine", "RngStream", "SimulationError", "uniform01", "__version__"]
