import random
from statistics import fmean

import pytest
from hypothesis import given, settings, strategies as st

from llnsim.contikimac import ContikiMac, RdcConfig, phase_sweep, strobe_starts
from llnsim.energy import EnergyLedger
from llnsim.kernel import MS, SECOND, ClockModel, Simulator
from llnsim.medium import BROADCAST, Frame, FrameKind, Medium, Topology

CFG = RdcConfig()


class Net:
    """Hand-wired ContikiMAC nodes on one medium, with energy ledgers."""

    def __init__(self, positions, seed=0, links=None, phases=None, drift=None, cfg=CFG):
        self.sim = Simulator(seed)
        topo = Topology.from_positions(positions, 11.0, links)
        self.ledgers = {n: EnergyLedger(n) for n in positions}
        self.medium = Medium(topo, {n: random.Random(f"{seed}:{n}") for n in positions}, [cfg.channel],
                             on_state=lambda n, s, t: self.ledgers[n].transition(s, t))
        self.got = {n: [] for n in positions}
        self.links = []
        self.macs = {}
        for n in positions:
            self.sim.add_clock(n, ClockModel((drift or {}).get(n, 0)))
            mac = ContikiMac(n, self.sim, self.medium, cfg, random.Random(f"mac:{seed}:{n}"),
                             deliver=lambda f, now, n=n: self.got[n].append((f.uid, now)),
                             link=lambda nbr, ok, k, n=n: self.links.append((n, nbr, ok, k)))
            if phases and n in phases:
                mac.phase = phases[n]
            self.macs[n] = mac

    def start(self, *nodes):
        for n in nodes or self.macs:
            self.macs[n].start(self.sim.now)

    def send(self, src, dst, at, kind=FrameKind.DATA):
        frame = Frame(kind, src, dst)
        done = []
        self.sim.schedule(at, lambda ev: self.macs[src].send(frame, lambda ok, k: done.append((ok, self.sim.now))))
        return frame, done


def test_config_invariants():
    with pytest.raises(ValueError):
        RdcConfig(cca_gap=700)  # 700 + 128 >= 736 us of the smallest frame
    with pytest.raises(ValueError):
        RdcConfig(strobe_gap=500)
    with pytest.raises(ValueError):
        RdcConfig(cycle=700)


def test_idle_wake_duration_and_duty_cycle():
    net = Net({1: (0, 0)})
    net.start()
    net.sim.run_until(10 * SECOND)
    net.ledgers[1].close(10 * SECOND)
    t = net.ledgers[1].time_in_states(0, 10 * SECOND)
    mac = net.macs[1]
    assert t.get("cca", 0) == mac.wakes * (2 * CFG.cca_duration + CFG.cca_gap)
    awake = (t.get("cca", 0) + t.get("rx_listen", 0)) / (10 * SECOND)
    assert awake <= CFG.wake_span / CFG.cycle + 1e-3
    assert mac.wakes in (79, 80, 81)


def test_unicast_lossless_acked_within_bound():
    net = Net({1: (0, 0), 2: (10, 0)}, phases={2: 40 * MS})
    net.start()
    frame, done = net.send(1, 2, 300 * MS)
    net.sim.run_until(2 * SECOND)
    assert done and done[0][0] is True
    assert done[0][1] - 300 * MS <= CFG.wake_span + CFG.unicast_bound(frame.airtime)
    assert [u for u, _ in net.got[2]] == [frame.uid]
    assert net.links == [(1, 2, True, 1)]


def test_unicast_out_of_range_fails_after_full_train():
    net = Net({1: (0, 0), 2: (50, 0)})
    net.start()
    frame, done = net.send(1, 2, 300 * MS)
    net.sim.run_until(2 * SECOND)
    start = 300 * MS + CFG.wake_span
    assert done == [(False, done[0][1])]
    elapsed = done[0][1] - start
    assert CFG.train_length(frame.airtime) <= elapsed <= CFG.unicast_bound(frame.airtime)
    assert net.links == [(1, 2, False, 1)]


def test_overheard_unicast_is_dropped_without_ack():
    net = Net({1: (0, 0), 2: (10, 0), 3: (5, 5)}, phases={2: 10 * MS, 3: 60 * MS})
    net.start()
    frame, done = net.send(1, 2, 300 * MS)
    net.sim.run_until(2 * SECOND)
    assert net.got[3] == []
    assert net.macs[3].detections >= 1
    assert net.ledgers[3].time_in_states(0, net.ledgers[3].covered_until).get("tx", 0) == 0


def test_broadcast_reaches_each_neighbour_once():
    net = Net({1: (0, 0), 2: (10, 0), 3: (0, 10), 4: (-10, 0)})
    net.start()
    frame, done = net.send(1, BROADCAST, 300 * MS, FrameKind.DIO)
    net.sim.run_until(2 * SECOND)
    for n in (2, 3, 4):
        assert [u for u, _ in net.got[n]] == [frame.uid]
    assert done and done[0][0]


def test_broadcast_without_neighbours_or_with_radio_off():
    net = Net({1: (0, 0), 2: (10, 0)})
    net.start(1)  # node 2 never powers its radio
    frame, done = net.send(1, BROADCAST, 0)
    net.sim.run_until(SECOND)
    assert done and net.got[2] == []
    assert done[0][1] - CFG.wake_span == pytest.approx(CFG.train_length(frame.airtime), abs=frame.airtime + CFG.strobe_gap)


def test_phase_sweep_default_and_a_broken_config():
    assert phase_sweep(CFG, step=7) == []
    # a silent gap longer than the whole wake window can hide the train
    class Loose(RdcConfig):
        def __post_init__(self):
            pass
    assert phase_sweep(Loose(strobe_gap=900), step=7)


def test_strobe_train_spans_a_cycle():
    air = Frame(FrameKind.DATA, 1, BROADCAST, length=23).airtime
    starts = strobe_starts(CFG, air)
    assert starts[-1] + air - starts[0] >= CFG.cycle
    assert all(b - a == air + CFG.strobe_gap for a, b in zip(starts, starts[1:]))


@settings(max_examples=60, deadline=None)
@given(phase=st.integers(0, CFG.cycle - 1), at=st.integers(0, CFG.cycle - 1),
       drift=st.integers(-100, 100))
def test_broadcast_detected_at_any_phase(phase, at, drift):
    net = Net({1: (0, 0), 2: (10, 0)}, phases={2: phase}, drift={2: drift})
    net.start()
    frame, _ = net.send(1, BROADCAST, CFG.cycle + at)
    net.sim.run_until(CFG.cycle * 4)
    assert [u for u, _ in net.got[2]] == [frame.uid]


def _wakes_overlapping(net, train_start, frame):
    """Receiver wakes whose double CCA falls inside the strobe train."""
    mac, clock = net.macs[2], net.sim.clocks[2]
    end = train_start + CFG.train_length(frame.airtime)
    k, count = 0, 0
    while True:
        w = clock.to_global(mac.phase + k * CFG.cycle)
        k += 1
        if w >= end:
            return count
        if w + CFG.wake_span > train_start and w + CFG.wake_span + frame.airtime + CFG.strobe_gap <= end:
            count += 1


def test_lossy_unicast_success_probability():
    """P(acked) against 1 - 0.5**k, k = receiver wakes overlapping the train, over paired trials."""
    trials, successes, expected = 10_000, 0, []
    for seed in range(trials):
        net = Net({1: (0, 0), 2: (10, 0)}, seed=seed, links={(1, 2): 0.5})
        net.start()
        frame, done = net.send(1, 2, 200 * MS)
        net.sim.run_until(SECOND)
        successes += done[0][0]
        expected.append(1 - 0.5 ** _wakes_overlapping(net, 200 * MS + CFG.wake_span, frame))
    assert abs(successes / trials - fmean(expected)) <= 0.02
    assert 0.5 <= fmean(expected) < 0.75
