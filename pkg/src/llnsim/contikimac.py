"""ContikiMAC-style radio duty cycling.

Every node wakes once per cycle (of its own, possibly drifting, clock) and
runs two short CCAs.  A busy CCA keeps the radio on until a frame completes
or one strobe period passes.  Senders repeat the frame back to back
("strobing"): unicast trains stop on the receiver's ACK, broadcast trains
always run the full length.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .kernel import MS, Simulator
from .medium import MAX_FRAME_BYTES, Frame, FrameKind, Medium, Transmission, airtime_us

MIN_DATA_FRAME_BYTES = 23


@dataclass(frozen=True)
class RdcConfig:
    cycle: int = 125 * MS
    cca_duration: int = 128
    cca_gap: int = 500
    strobe_gap: int = 400
    max_unicast_retries: int = 1
    channel: int = 26
    busy_backoffs: int = 4
    min_frame_bytes: int = MIN_DATA_FRAME_BYTES

    def __post_init__(self):
        if self.cycle <= 0 or self.cca_duration <= 0 or self.cca_gap <= 0 or self.strobe_gap <= 0:
            raise ValueError("rdc durations must be positive")
        if self.cca_gap + self.cca_duration >= airtime_us(self.min_frame_bytes):
            raise ValueError("cca_gap + cca_duration must be shorter than the smallest frame")
        if self.strobe_gap >= self.cca_gap:
            raise ValueError("strobe_gap must be shorter than cca_gap")
        if self.max_unicast_retries < 1:
            raise ValueError("max_unicast_retries must be >= 1")
        if self.cycle <= self.wake_span:
            raise ValueError("cycle must exceed the wake window")

    @property
    def wake_span(self) -> int:
        return 2 * self.cca_duration + self.cca_gap

    @property
    def rx_timeout(self) -> int:
        return airtime_us(MAX_FRAME_BYTES) + self.strobe_gap

    def train_length(self, airtime: int) -> int:
        # one cycle, plus one strobe period so a detection in the last copy
        # still has a full copy to receive, plus the wake window itself
        return self.cycle + airtime + self.strobe_gap + self.wake_span

    def unicast_bound(self, airtime: int) -> int:
        """Latest time after the train start at which send_unicast reports."""
        return self.train_length(airtime) + airtime + self.strobe_gap


@dataclass
class _Train:
    frame: Frame
    on_done: Optional[Callable[[bool, int], None]]
    start: int
    deadline: int
    attempt: int = 1
    copies: int = 0
    delivered_end: Optional[int] = None
    last_end: Optional[int] = None
    acked: bool = False
    ack_ev: Optional[int] = None


DeliverFn = Callable[[Frame, int], None]
LinkFn = Callable[[int, bool, int], None]
AirFn = Callable[[Frame, int, int], None]


class ContikiMac:
    """One node's duty-cycled MAC; registered as the medium's radio handler."""

    def __init__(self, node: int, sim: Simulator, medium: Medium, cfg: RdcConfig,
                 rng: random.Random, deliver: DeliverFn, link: Optional[LinkFn] = None,
                 on_air: Optional[AirFn] = None):
        self.node = node
        self.sim = sim
        self.medium = medium
        self.cfg = cfg
        self.rng = rng
        self.deliver = deliver
        self.link = link
        self.on_air = on_air
        self.mode = "off"
        self.phase = rng.randrange(cfg.cycle)
        self.queue: deque[tuple[Frame, Optional[Callable[[bool, int], None]]]] = deque()
        self.train: Optional[_Train] = None
        self.receiving: Optional[Transmission] = None
        self.wake_start = 0
        self.wakes = 0
        self.detections = 0
        self._k = 0
        self._rx_timeout_ev: Optional[int] = None
        self._kick_ev: Optional[int] = None
        self._seen: deque[int] = deque(maxlen=256)
        self._seen_set: set[int] = set()
        self._busy_tries = 0
        medium.handlers[node] = self

    # -- lifecycle ----------------------------------------------------------

    def start(self, now: int) -> None:
        self.mode = "sleep"
        self.medium.sleep(self.node, now)
        local_now = self.sim.local_time(self.node, now)
        self._k = max(0, (local_now - self.phase) // self.cfg.cycle)
        self._schedule_wake()

    def _schedule_wake(self) -> None:
        clock = self.sim.clocks[self.node]
        while True:
            at = clock.to_global(self.phase + self._k * self.cfg.cycle)
            self._k += 1
            if at > self.sim.now:
                break
        self.sim.schedule(at, self._on_wake, self.node, "wake")

    # -- receive side -------------------------------------------------------

    def _on_wake(self, ev) -> None:
        self._schedule_wake()
        if self.mode != "sleep":
            return
        now = self.sim.now
        self.wakes += 1
        self.mode = "wake"
        self.wake_start = now
        self.medium.set_listen(self.node, self.cfg.channel, now, "cca")
        self.sim.schedule(now + self.cfg.wake_span, self._on_cca_done, self.node, "cca")

    def cca_busy(self, wake_start: int) -> bool:
        c, g = self.cfg.cca_duration, self.cfg.cca_gap
        ch = self.cfg.channel
        return (self.medium.busy_during(self.node, ch, wake_start, wake_start + c)
                or self.medium.busy_during(self.node, ch, wake_start + c + g, wake_start + 2 * c + g))

    def _on_cca_done(self, ev) -> None:
        if self.mode != "wake":
            return
        now = self.sim.now
        if self.cca_busy(self.wake_start):
            self.detections += 1
            self.mode = "rx"
            self.medium.set_listen(self.node, self.cfg.channel, now, "rx_listen")
            self._arm_rx_timeout(now)
        else:
            self._sleep(now)

    def _arm_rx_timeout(self, now: int) -> None:
        self.sim.cancel(self._rx_timeout_ev)
        self._rx_timeout_ev = self.sim.schedule(now + self.cfg.rx_timeout, self._on_rx_timeout,
                                                self.node, "rx-timeout")

    def _on_rx_timeout(self, ev) -> None:
        self._rx_timeout_ev = None
        if self.mode == "rx" and self.receiving is None:
            self._sleep(self.sim.now)

    def on_rx_start(self, tx: Transmission, now: int) -> None:
        if self.mode == "wake":
            self.detections += 1
            self.mode = "rx"
            self.medium.set_listen(self.node, self.cfg.channel, now, "rx_listen")
        if self.mode == "rx":
            self.receiving = tx
            self.sim.cancel(self._rx_timeout_ev)
            self._rx_timeout_ev = None

    def on_rx_end(self, tx: Transmission, ok: bool, now: int) -> None:
        frame = tx.frame
        if self.mode == "tx":
            t = self.train
            if (ok and t is not None and frame.kind is FrameKind.ACK and frame.dst == self.node
                    and frame.payload.get("ack") == t.frame.uid):
                t.acked = True
                self.sim.cancel(t.ack_ev)
                self._finish(now, True)
            return
        if self.mode != "rx":
            return
        self.receiving = None
        if not ok:
            self._sleep(now)
            return
        if frame.kind is FrameKind.ACK:
            self._sleep(now)
            return
        if frame.dst == self.node:
            ack = Frame(FrameKind.ACK, self.node, frame.src, payload={"ack": frame.uid})
            self.mode = "ack"
            atx = self.medium.begin_transmission(self.node, self.cfg.channel, ack, now)
            self.sim.schedule(now + atx.airtime, lambda ev, atx=atx: self._ack_sent(atx), self.node, "ack")
            self._up(frame, now)
        elif frame.broadcast:
            self._sleep(now)
            self._up(frame, now)
        else:
            self._sleep(now)

    def _ack_sent(self, atx: Transmission) -> None:
        now = self.sim.now
        self.medium.end_transmission(atx, now)
        self.mode = "sleep"
        self._kick()

    def _up(self, frame: Frame, now: int) -> None:
        if frame.uid in self._seen_set:
            return
        if len(self._seen) == self._seen.maxlen:
            self._seen_set.discard(self._seen[0])
        self._seen.append(frame.uid)
        self._seen_set.add(frame.uid)
        self.deliver(frame, now)

    def _sleep(self, now: int) -> None:
        self.sim.cancel(self._rx_timeout_ev)
        self._rx_timeout_ev = None
        self.receiving = None
        self.mode = "sleep"
        self.medium.sleep(self.node, now)
        self._kick()

    # -- transmit side ------------------------------------------------------

    def send(self, frame: Frame, on_done: Optional[Callable[[bool, int], None]] = None) -> None:
        self.queue.append((frame, on_done))
        self._kick()

    def _kick(self) -> None:
        if self.mode == "sleep" and self.queue and self._kick_ev is None:
            self._kick_ev = self.sim.schedule(self.sim.now, self._start_next, self.node, "tx-start")

    def _start_next(self, ev) -> None:
        self._kick_ev = None
        if self.mode != "sleep" or not self.queue:
            return
        now = self.sim.now
        self.mode = "tx"
        self.medium.set_listen(self.node, self.cfg.channel, now, "cca")
        self.sim.schedule(now + self.cfg.wake_span, self._pre_tx_cca, self.node, "tx-cca")

    def _pre_tx_cca(self, ev) -> None:
        # sensing spans a whole wake window, longer than the gap inside a strobe train
        now = self.sim.now
        busy = self.medium.busy_during(self.node, self.cfg.channel, now - self.cfg.wake_span, now)
        if busy or self.receiving is not None:
            self._busy_tries += 1
            self.mode = "sleep"
            self.medium.sleep(self.node, now)
            if self._busy_tries > self.cfg.busy_backoffs:
                self._busy_tries = 0
                frame, on_done = self.queue.popleft()
                self._report(frame, False, 0)
                if on_done:
                    on_done(False, 0)
                self._kick()
                return
            delay = self.cfg.wake_span + self.rng.randrange(self.cfg.cycle)
            self.sim.schedule(now + delay, lambda ev: self._kick(), self.node, "tx-backoff")
            return
        self._busy_tries = 0
        frame, on_done = self.queue.popleft()
        self.train = _Train(frame, on_done, now, now + self.cfg.train_length(frame.airtime))
        self._send_copy(now)

    def _send_copy(self, now: int) -> None:
        t = self.train
        tx = self.medium.begin_transmission(self.node, self.cfg.channel, t.frame, now)
        t.copies += 1
        self.sim.schedule(now + tx.airtime, lambda ev, tx=tx: self._copy_end(tx), self.node, "copy-end")

    def _copy_end(self, tx: Transmission) -> None:
        now = self.sim.now
        t = self.train
        unicast = not t.frame.broadcast
        t.last_end = now
        if unicast:
            delivered = self.medium.end_transmission(tx, now, listen_after=True)
            if t.frame.dst in delivered and t.delivered_end is None:
                t.delivered_end = now
            if t.acked or self.train is not t:
                return
            t.ack_ev = self.sim.schedule(now + self.cfg.strobe_gap, self._ack_timeout, self.node, "ack-wait")
        else:
            self.medium.end_transmission(tx, now)
            nxt = now + self.cfg.strobe_gap
            if nxt < t.deadline:
                self.sim.schedule(nxt, lambda ev: self._send_copy(self.sim.now), self.node, "copy")
            else:
                t.delivered_end = now
                self._finish(now, True)

    def _ack_timeout(self, ev) -> None:
        t = self.train
        if t is None or t.acked:
            return
        now = self.sim.now
        if now < t.deadline:
            self.medium.set_listen(self.node, None, now)
            self._send_copy(now)
            return
        if t.attempt < self.cfg.max_unicast_retries:
            t.attempt += 1
            t.deadline = now + self.cfg.train_length(t.frame.airtime)
            self._send_copy(now)
            return
        self._finish(now, False)

    def _finish(self, now: int, ok: bool) -> None:
        t = self.train
        self.train = None
        self.mode = "sleep"
        self.medium.sleep(self.node, now)
        if t.delivered_end is not None:
            if self.on_air is not None:
                self.on_air(t.frame, t.start, t.delivered_end)
        self._report(t.frame, ok, t.attempt)
        if t.on_done:
            t.on_done(ok, t.attempt)
        self._kick()

    def _report(self, frame: Frame, ok: bool, attempts: int) -> None:
        if self.link is not None and not frame.broadcast:
            self.link(frame.dst, ok, max(attempts, 1))


# -- analysis helpers ---------------------------------------------------------

def strobe_starts(cfg: RdcConfig, airtime: int, t0: int = 0) -> list[int]:
    """Copy start times of a full broadcast train beginning at ``t0``."""
    out, t = [], t0
    deadline = t0 + cfg.train_length(airtime)
    while True:
        out.append(t)
        t += airtime + cfg.strobe_gap
        if t >= deadline:
            return out


def phase_sweep(cfg: RdcConfig = RdcConfig(), frame_bytes: int = MIN_DATA_FRAME_BYTES,
                step: int = 1) -> list[int]:
    """Wake offsets (relative to the train start) at which a listener would miss the train.

    A two-node medium replays one full broadcast train; for every wake
    offset in one cycle the listener's double CCA is evaluated against it
    with :meth:`Medium.busy_during`, and a detection only counts if a later
    copy starts while the listener is still waiting for it.
    """
    from .medium import Topology

    topo = Topology.from_positions({0: (0.0, 0.0), 1: (1.0, 0.0)}, 10.0)
    medium = Medium(topo, channels=[cfg.channel])
    frame = Frame(FrameKind.DATA, 0, -1, length=frame_bytes)
    air = frame.airtime
    starts = strobe_starts(cfg, air)
    for s in starts:
        tx = medium.begin_transmission(0, cfg.channel, frame, s)
        medium.end_transmission(tx, s + air)
    c, g = cfg.cca_duration, cfg.cca_gap
    missed = []
    j = 0
    for w in range(0, cfg.cycle, step):
        busy = (medium.busy_during(1, cfg.channel, w, w + c)
                or medium.busy_during(1, cfg.channel, w + c + g, w + 2 * c + g))
        while j < len(starts) and starts[j] < w:
            j += 1
        heard_start = j < len(starts) and starts[j] < w + cfg.wake_span
        if heard_start:
            continue
        if not busy:
            missed.append(w)
            continue
        # receive mode: a copy must start before the rx timeout expires
        decided = w + cfg.wake_span
        k = j
        while k < len(starts) and starts[k] < decided:
            k += 1
        if k >= len(starts) or starts[k] > decided + cfg.rx_timeout:
            missed.append(w)
    return missed
