"""Discrete-event simulator for RPL networks over ContikiMAC and TSCH/Orchestra,
with trace analysis for joining time, convergence time and formation energy."""

from .kernel import MS, SECOND, ClockModel, Simulator, rng_stream, seconds
from .medium import BROADCAST, Frame, FrameKind, Medium, Topology
from .network import RunResult, simulate
from .scenario import Scenario, ScenarioError

__version__ = "0.1.0"

__all__ = ["MS", "SECOND", "ClockModel", "Simulator", "rng_stream", "seconds", "BROADCAST", "Frame",
           "FrameKind", "Medium", "Topology", "RunResult", "simulate", "Scenario", "ScenarioError"]
