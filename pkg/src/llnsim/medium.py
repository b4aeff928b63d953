"""Shared radio medium.

Binary in-range links with an optional per-link delivery probability,
channel-orthogonal transmissions, no capture effect, and a reception rule
that requires the listener to be tuned in when a frame starts.
"""

from __future__ import annotations

import enum
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Protocol

BROADCAST = -1
BITRATE_BPS = 250_000
MIN_FRAME_BYTES = 5
MAX_FRAME_BYTES = 127
CHANNELS_24GHZ = tuple(range(11, 27))


class FrameKind(str, enum.Enum):
    DIS = "DIS"
    DIO = "DIO"
    DAO = "DAO"
    DAO_ACK = "DAO_ACK"
    NO_PATH_DAO = "NO_PATH_DAO"
    EB = "EB"
    DATA = "DATA"
    ACK = "ACK"

    def __str__(self) -> str:
        return self.value


RPL_KINDS = frozenset({FrameKind.DIS, FrameKind.DIO, FrameKind.DAO,
                       FrameKind.DAO_ACK, FrameKind.NO_PATH_DAO})

# frame lengths in bytes, MAC header included
DEFAULT_LENGTHS = {
    FrameKind.DIS: 30,
    FrameKind.DIO: 60,
    FrameKind.DAO: 52,
    FrameKind.DAO_ACK: 32,
    FrameKind.NO_PATH_DAO: 52,
    FrameKind.EB: 35,
    FrameKind.DATA: 64,
    FrameKind.ACK: 5,
}

_frame_ids = itertools.count(1)


@dataclass
class Frame:
    kind: FrameKind
    src: int
    dst: int
    length: int = 0
    payload: dict = field(default_factory=dict)
    uid: int = field(default_factory=lambda: next(_frame_ids))

    def __post_init__(self):
        if not self.length:
            self.length = DEFAULT_LENGTHS[self.kind]
        if not MIN_FRAME_BYTES <= self.length <= MAX_FRAME_BYTES:
            raise ValueError(f"frame length {self.length} outside [{MIN_FRAME_BYTES}, {MAX_FRAME_BYTES}]")
        if self.kind is FrameKind.NO_PATH_DAO:
            self.payload.setdefault("lifetime", 0)
            if self.payload["lifetime"] != 0:
                raise ValueError("NO_PATH_DAO must carry lifetime 0")

    @property
    def broadcast(self) -> bool:
        return self.dst == BROADCAST

    @property
    def airtime(self) -> int:
        return airtime_us(self.length)


def airtime_us(length: int, bitrate: int = BITRATE_BPS) -> int:
    return math.ceil(length * 8 * 1_000_000 / bitrate)


class MediumError(RuntimeError):
    pass


@dataclass
class NodeInfo:
    id: int
    x: float = 0.0
    y: float = 0.0


@dataclass
class Topology:
    nodes: dict[int, NodeInfo]
    links: dict[tuple[int, int], float]

    def __post_init__(self):
        for (a, b), p in self.links.items():
            if a == b:
                raise ValueError(f"self-link on node {a}")
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"link {a}->{b} references an unknown node")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"link {a}->{b} probability {p} outside [0, 1]")

    @classmethod
    def from_positions(cls, positions: dict[int, tuple[float, float]], radio_range: float,
                       overrides: Optional[dict[tuple[int, int], float]] = None) -> "Topology":
        nodes = {nid: NodeInfo(nid, float(x), float(y)) for nid, (x, y) in positions.items()}
        if len(nodes) != len(positions):
            raise ValueError("node ids must be unique")
        links = {}
        for a, b in itertools.permutations(sorted(nodes), 2):
            na, nb = nodes[a], nodes[b]
            if math.hypot(na.x - nb.x, na.y - nb.y) <= radio_range:
                links[(a, b)] = 1.0
        for (a, b), p in (overrides or {}).items():
            if p <= 0.0:
                links.pop((a, b), None)
            else:
                links[(a, b)] = p
        return cls(nodes, links)

    def neighbors(self, node: int) -> list[int]:
        return sorted(b for (a, b) in self.links if a == node)

    def in_range(self, sender: int, listener: int) -> bool:
        return (sender, listener) in self.links


@dataclass
class Transmission:
    id: int
    sender: int
    channel: int
    frame: Frame
    start: int
    airtime: int
    # listener -> epoch at frame start; None once the reception is spoiled
    receivers: dict[int, Optional[int]] = field(default_factory=dict)
    heard: set = field(default_factory=set)
    ended: bool = False

    @property
    def end(self) -> int:
        return self.start + self.airtime


class RadioHandler(Protocol):
    def on_rx_start(self, tx: Transmission, now: int) -> None: ...
    def on_rx_end(self, tx: Transmission, ok: bool, now: int) -> None: ...


StateHook = Callable[[int, str, int], None]


class Medium:
    """Owns per-node radio state and resolves who hears what."""


    def __init__(self, topology: Topology, rngs: Optional[dict[int, random.Random]] = None,
                 channels: Iterable[int] = CHANNELS_24GHZ, on_state: Optional[StateHook] = None):
        self.topology = topology
        self.channels = frozenset(channels)
        self.rngs = rngs or {}
        self.on_state = on_state
        self.handlers: dict[int, RadioHandler] = {}
        self.listening: dict[int, Optional[int]] = {n: None for n in topology.nodes}
        self.transmitting: dict[int, Optional[Transmission]] = {n: None for n in topology.nodes}
        self.epoch: dict[int, int] = {n: 0 for n in topology.nodes}
        self.active: list[Transmission] = []
        self.history: list[Transmission] = []
        self.collisions = 0
        self._tx_ids = itertools.count(1)
        self._listeners_of = {n: [b for (a, b) in topology.links if a == n] for n in topology.nodes}
        self._senders_to = {n: frozenset(a for (a, b) in topology.links if b == n) for n in topology.nodes}

    def _check(self, node: int) -> None:
        if node not in self.listening:
            raise MediumError(f"unknown node {node}")

    def _check_channel(self, channel: int) -> None:
        if channel not in self.channels:
            raise MediumError(f"channel {channel} not in the configured channel set")

    def _report(self, node: int, state: str, now: int) -> None:
        if self.on_state is not None:
            self.on_state(node, state, now)

    def report_state(self, node: int, state: str, now: int) -> None:
        """Book a radio state change that needs no channel bookkeeping."""
        self._report(node, state, now)

    # -- radio control ------------------------------------------------------

    def set_listen(self, node: int, channel: Optional[int], now: int, state: str = "rx_listen") -> None:
        """Tune ``node`` to ``channel`` (``None`` puts the radio to sleep)."""
        self._check(node)
        if channel is not None:
            self._check_channel(channel)
        if self.transmitting[node] is not None:
            raise MediumError(f"node {node} is transmitting")
        if self.listening[node] != channel:
            self.epoch[node] += 1
            self.listening[node] = channel
        self._report(node, state if channel is not None else "sleep", now)

    def sleep(self, node: int, now: int) -> None:
        self.set_listen(node, None, now)

    def power_off(self, node: int, now: int) -> None:
        self.set_listen(node, None, now)
        self._report(node, "off", now)

    def sense(self, node: int, channel: int, now: int) -> bool:
        """Instantaneous clear-channel assessment; True means busy."""
        self._check(node)
        if self.listening[node] is None:
            raise MediumError(f"node {node} sensed with its radio off")
        return self.busy_during(node, channel, now, now + 1)

    def busy_during(self, node: int, channel: int, t0: int, t1: int) -> bool:
        """Any in-range transmission on ``channel`` overlapping ``[t0, t1)``."""
        senders = self._senders_to[node]
        for tx in self.active:
            if tx.channel == channel and tx.sender in senders and tx.start < t1 and tx.end > t0:
                return True
        for tx in reversed(self.history):
            if tx.end <= t0:
                break
            if tx.channel == channel and tx.sender in senders and tx.start < t1 and tx.end > t0:
                return True
        return False

    # -- transmissions ------------------------------------------------------

    def begin_transmission(self, sender: int, channel: int, frame: Frame, now: int) -> Transmission:
        self._check(sender)
        self._check_channel(channel)
        if self.transmitting[sender] is not None:
            raise MediumError(f"node {sender} is already transmitting")
        tx = Transmission(next(self._tx_ids), sender, channel, frame, now, frame.airtime)
        self.listening[sender] = None
        self.epoch[sender] += 1
        self.transmitting[sender] = tx
        self._report(sender, "tx", now)

        # collision bookkeeping against everything still on the air
        for other in self.active:
            if other.channel != channel:
                continue
            common = self._senders_to_both(sender, other.sender)
            for listener in common:
                if listener in other.receivers and other.receivers[listener] is not None:
                    other.receivers[listener] = None
                    self.collisions += 1
                tx.receivers[listener] = None
        started = []
        for listener in self._listeners_of[sender]:
            if listener in tx.receivers:
                continue
            if self.transmitting[listener] is None and self.listening[listener] == channel:
                tx.receivers[listener] = self.epoch[listener]
                tx.heard.add(listener)
                started.append(listener)
        self.active.append(tx)
        for listener in started:
            handler = self.handlers.get(listener)
            if handler is not None:
                handler.on_rx_start(tx, now)
        return tx

    def _senders_to_both(self, a: int, b: int) -> list[int]:
        return [n for n in self._listeners_of[a] if b in self._senders_to[n]]

    def end_transmission(self, tx: Transmission, now: int, listen_after: bool = False,
                         state_after: str = "rx_listen") -> list[int]:
        """Finish ``tx``; returns the listeners that received it intact.

        The sender's radio is switched (listen or sleep) before any receiver
        handler runs, so an immediate reply is heard by the sender.
        """
        if tx.ended:
            raise MediumError(f"transmission {tx.id} already ended")
        tx.ended = True
        self.active.remove(tx)
        self.history.append(tx)
        if len(self.history) > 512:
            del self.history[:256]
        self.transmitting[tx.sender] = None
        if listen_after:
            self.listening[tx.sender] = tx.channel
            self._report(tx.sender, state_after, now)
        else:
            self._report(tx.sender, "sleep", now)

        delivered, failed = [], []
        for listener, epoch in tx.receivers.items():
            tuned = self.listening[listener] == tx.channel
            if epoch is None or epoch != self.epoch[listener] or not tuned:
                if tuned and listener in tx.heard:
                    failed.append(listener)
                continue
            p = self.topology.links[(tx.sender, listener)]
            if p < 1.0 and self.rngs[listener].random() >= p:
                failed.append(listener)
                continue
            delivered.append(listener)
        for listener in delivered:
            handler = self.handlers.get(listener)
            if handler is not None:
                handler.on_rx_end(tx, True, now)
        for listener in failed:
            handler = self.handlers.get(listener)
            if handler is not None:
                handler.on_rx_end(tx, False, now)
        return delivered
