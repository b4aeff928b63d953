"""Assemble and run one seeded simulation of a scenario."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from .contikimac import ContikiMac
from .energy import EnergyLedger
from .kernel import ClockModel, Simulator, rng_stream
from .medium import RPL_KINDS, Frame, FrameKind, Medium
from .metrics import RunMetrics, analyze
from .rpl import RplNode
from .scenario import CONTIKIMAC, TSCH, Scenario
from .trace import END, Trace, TraceEvent
from .tsch import TschEngine, TschNode


def frame_event(frame: Frame, start: int, end: int) -> TraceEvent:
    via = target = None
    if frame.kind in (FrameKind.DAO, FrameKind.NO_PATH_DAO):
        via = frame.payload.get("parent")
        t = frame.payload.get("target")
        if t is not None and t != frame.src:
            target = t
    return TraceEvent(start, end, str(frame.kind), frame.src, frame.dst, via, target)


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    trace: Trace
    ledgers: dict[int, EnergyLedger]
    rpl: dict[int, RplNode]
    events: int
    wall_s: float
    engine: Optional[TschEngine] = None
    macs: dict = field(default_factory=dict)

    def metrics(self) -> RunMetrics:
        sc = self.scenario
        return analyze(self.trace, sc.perspective, sc.steady_window, self.ledgers, sc.profile, sc.node_ids)


class Network:
    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = sc = scenario
        self.seed = seed
        self.sim = Simulator(seed)
        self.ledgers = {n.id: EnergyLedger(n.id) for n in sc.nodes}
        self.trace = Trace(meta={"root": str(sc.root), "protocol": sc.protocol,
                                 "perspective": sc.perspective,
                                 "nodes": ",".join(str(i) for i in sc.node_ids),
                                 "seed": str(seed), "scenario": sc.hash})
        for n in sc.nodes:
            drift = n.drift_ppm
            crng = rng_stream(seed, f"clock:{n.id}")
            if drift is None:
                drift = crng.randint(-sc.drift_ppm_max, sc.drift_ppm_max)
            self.sim.add_clock(n.id, ClockModel(drift, crng.randrange(1_000_000)))
        channels = set(sc.tsch.hopping.channels) | {sc.rdc.channel}
        self.medium = Medium(sc.topology, {n.id: rng_stream(seed, f"link:{n.id}") for n in sc.nodes},
                             sorted(channels), on_state=self._on_state)
        self.rpl: dict[int, RplNode] = {}
        self.macs: dict = {}
        self.engine: Optional[TschEngine] = None
        if sc.protocol == TSCH:
            self.engine = TschEngine(self.sim, self.medium, sc.tsch)
            self.engine.on_air = self._on_air
            self.engine.on_desync = lambda node, now: self.rpl[node].detach(now)
        for n in sc.nodes:
            self._add_node(n.id, n.root)
        for n in sc.nodes:
            self.sim.schedule(n.boot, lambda ev, i=n.id: self._boot(i), n.id, "boot")

    def _on_state(self, node: int, state: str, now: int) -> None:
        self.ledgers[node].transition(state, now)

    def _on_air(self, frame: Frame, start: int, end: int) -> None:
        if frame.kind in RPL_KINDS:
            self.trace.append(frame_event(frame, start, end))

    def _add_node(self, node: int, is_root: bool) -> None:
        sc = self.scenario
        prng = rng_stream(self.seed, f"rpl:{node}")
        mrng = rng_stream(self.seed, f"mac:{node}")
        if sc.protocol == CONTIKIMAC:
            mac = ContikiMac(node, self.sim, self.medium, sc.rdc, mrng,
                             deliver=lambda f, now, i=node: self.rpl[i].receive(f, now),
                             link=lambda nbr, ok, k, i=node: self.rpl[i].link_outcome(nbr, ok, k),
                             on_air=self._on_air)
            send = mac.send
        else:
            eng = self.engine
            mac = TschNode(node, self.sim, sc.tsch, mrng, self.sim.clocks[node].drift_ppm, coordinator=is_root)
            eng.add(mac, deliver=lambda f, now, i=node: self.rpl[i].receive(f, now),
                    link=lambda nbr, ok, k, i=node: self.rpl[i].link_outcome(nbr, ok, k),
                    eb_allowed=(lambda i=node: self.rpl[i].joined) if sc.tsch.eb_requires_dodag else None)

            def send(frame, on_done=None, i=node):
                eng.send(i, frame, on_done)

        rpl = RplNode(node, self.sim, sc.rpl, prng, send, self.trace.append, is_root)
        if self.engine is not None:
            eng = self.engine
            rpl.parent_listeners.append(lambda old, new, i=node: eng.set_parent(i, new))
            rpl.route_listeners.append(lambda i=node: eng.set_neighbors(i, self.rpl[i].route_next_hops()))
        self.rpl[node] = rpl
        self.macs[node] = mac

    def _boot(self, node: int) -> None:
        now = self.sim.now
        if self.engine is not None:
            self.engine.boot(node, now)
        else:
            self.macs[node].start(now)
        self.rpl[node].boot(now)

    def run(self) -> RunResult:
        sc = self.scenario
        t0 = time.perf_counter()
        self.sim.run_until(sc.duration)
        end = sc.duration
        for ledger in self.ledgers.values():
            ledger.close(end)
        trace = self.trace.sorted()
        trace.append(TraceEvent(end, end, END, sc.root, -1))
        return RunResult(sc, self.seed, trace, self.ledgers, self.rpl, self.sim.fired,
                         time.perf_counter() - t0, self.engine, self.macs)


def simulate(scenario: Scenario, seed: int) -> RunResult:
    return Network(scenario, seed).run()
