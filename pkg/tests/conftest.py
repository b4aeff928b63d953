import time
from dataclasses import dataclass

import pytest

from llnsim import scenario
from llnsim.network import RunResult, simulate

SWEEP_SEEDS = tuple(range(1, 21))


@dataclass
class Sweep:
    runs: dict[str, list[RunResult]]
    wall_s: float


@pytest.fixture(scope="session")
def fig7_sweep() -> Sweep:
    """Fig.-7 topology, 20 seeds per protocol, shipped defaults."""
    base = scenario.builtin("fig7")
    t0 = time.perf_counter()
    runs = {}
    for proto in scenario.PROTOCOLS:
        sc = base.with_protocol(proto)
        runs[proto] = [simulate(sc, s) for s in SWEEP_SEEDS]
    return Sweep(runs, time.perf_counter() - t0)


def small_scenario(**overrides) -> scenario.Scenario:
    raw = {
        "schema": 1,
        "name": "pair",
        "duration_s": 120,
        "topology": {"radio_range": 11, "nodes": [
            {"id": 1, "x": 0, "y": 0, "root": True},
            {"id": 2, "x": 10, "y": 0},
        ]},
        "boot": {"leaves_s": 0, "root_delay_s": 5},
    }
    raw.update(overrides)
    return scenario.from_dict(raw)
