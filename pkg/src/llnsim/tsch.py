"""Time-slotted channel hopping with Orchestra-style autonomous cells.

All synchronised nodes share one slot grid anchored to the coordinator's
clock, so the engine runs a single event per absolute slot number (ASN).
Each node's offset from that grid is tracked analytically from its drift
and its last resynchronisation; when it exceeds the guard time the node
loses sync and goes back to scanning.
"""

from __future__ import annotations

import math
import random
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .kernel import MS, SECOND, Simulator
from .medium import (BROADCAST, CHANNELS_24GHZ, DEFAULT_LENGTHS, RPL_KINDS, Frame, FrameKind, Medium,
                     Transmission, airtime_us)

TX, RX, SHARED = "tx", "rx", "shared"
BEACON, RPL, APPLICATION = "beacon", "rpl", "application"
DEFAULT_HOPPING = (15, 20, 25, 26)


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class HoppingSequence:
    channels: tuple[int, ...] = DEFAULT_HOPPING

    def __post_init__(self):
        chans = tuple(self.channels)
        object.__setattr__(self, "channels", chans)
        if not chans:
            raise ScheduleError("hopping sequence must not be empty")
        if len(set(chans)) != len(chans):
            raise ScheduleError("hopping sequence entries must be unique")
        for c in chans:
            if c not in CHANNELS_24GHZ:
                raise ScheduleError(f"channel {c} outside 11-26")

    def __len__(self) -> int:
        return len(self.channels)


def hop_channel(asn: int, channel_offset: int, hs: HoppingSequence) -> int:
    return hs.channels[(asn + channel_offset) % len(hs.channels)]


@dataclass(frozen=True)
class Cell:
    slot_offset: int
    channel_offset: int
    options: frozenset
    link_target: Optional[int]  # BROADCAST for shared cells, None = any unicast neighbour
    traffic_class: str = RPL
    rule: int = 0

    @property
    def is_tx(self) -> bool:
        return TX in self.options

    @property
    def is_rx(self) -> bool:
        return RX in self.options

    @property
    def shared(self) -> bool:
        return SHARED in self.options


@dataclass
class Slotframe:
    handle: int
    length: int
    cells: list[Cell] = field(default_factory=list)
    slot_duration: int = 10 * MS

    def __post_init__(self):
        if self.length < 1:
            raise ScheduleError("slotframe length must be >= 1")
        self._index: dict[int, list[Cell]] = {}
        for c in self.cells:
            self._check(c)
        self._reindex()

    def _check(self, cell: Cell) -> None:
        if not 0 <= cell.slot_offset < self.length:
            raise ScheduleError(f"slot offset {cell.slot_offset} outside slotframe of length {self.length}")
        if not cell.options & {TX, RX}:
            raise ScheduleError("a cell must be tx, rx or both")

    def _reindex(self) -> None:
        self._index = {}
        for c in self.cells:
            self._index.setdefault(c.slot_offset, []).append(c)

    def add(self, cell: Cell) -> None:
        self._check(cell)
        self.cells.append(cell)
        self._index.setdefault(cell.slot_offset, []).append(cell)

    def at(self, asn: int) -> list[Cell]:
        return self._index.get(asn % self.length, [])


# -- Orchestra rules ----------------------------------------------------------

def identity_hash(node_id: int) -> int:
    return node_id


@dataclass(frozen=True)
class CommonShared:
    length: int = 7
    slot_offset: int = 0
    channel_offset: int = 0
    name = "common_shared"


@dataclass(frozen=True)
class ReceiverBased:
    length: int = 7
    channel_offset: int = 1
    name = "receiver_based"


@dataclass(frozen=True)
class SenderBased:
    length: int = 7
    channel_offset: int = 1
    name = "sender_based"


RULE_TYPES = {r.name: r for r in (CommonShared, ReceiverBased, SenderBased)}


@dataclass(frozen=True)
class OrchestraRuleSet:
    rules: tuple = (CommonShared(), ReceiverBased())
    hash: Callable[[int], int] = identity_hash

    def __post_init__(self):
        if not self.rules:
            raise ScheduleError("orchestra rule list must not be empty")
        object.__setattr__(self, "rules", tuple(self.rules))


@dataclass
class TschSchedule:
    slotframes: list[Slotframe]

    def cells_at(self, asn: int) -> list[Cell]:
        """Cells active at ``asn``, highest priority (earliest rule) first."""
        out: list[Cell] = []
        for sf in self.slotframes:
            out.extend(sf.at(asn))
        return out

    @property
    def cells(self) -> list[Cell]:
        return [c for sf in self.slotframes for c in sf.cells]

    def unicast_targets(self) -> set[Optional[int]]:
        return {c.link_target for c in self.cells if c.is_tx and c.link_target != BROADCAST}


def install_orchestra(node_id: int, parent: Optional[int], rules: OrchestraRuleSet,
                      neighbors: Iterable[int] = (), slot_duration: int = 10 * MS) -> TschSchedule:
    """Cells for one node.

    The common-shared and receiver-based rules use only the node's own id
    and its parent. Unicasts without a dedicated cell (for example toward a
    child) fall back to the shared cell. The sender-based rule also needs
    the neighbour set, to listen in each neighbour's tx slot.
    """
    h = rules.hash
    nbrs = sorted({n for n in neighbors if n != node_id} | ({parent} if parent is not None else set()))
    frames = []
    for i, rule in enumerate(rules.rules):
        sf = Slotframe(i, rule.length, slot_duration=slot_duration)
        if isinstance(rule, CommonShared):
            sf.add(Cell(rule.slot_offset % rule.length, rule.channel_offset,
                        frozenset({TX, RX, SHARED}), BROADCAST, BEACON, i))
        elif isinstance(rule, ReceiverBased):
            sf.add(Cell(h(node_id) % rule.length, rule.channel_offset, frozenset({RX}), node_id, RPL, i))
            if parent is not None:
                sf.add(Cell(h(parent) % rule.length, rule.channel_offset, frozenset({TX}), parent, RPL, i))
        elif isinstance(rule, SenderBased):
            if nbrs:
                sf.add(Cell(h(node_id) % rule.length, rule.channel_offset, frozenset({TX}), None, RPL, i))
            for n in nbrs:
                sf.add(Cell(h(n) % rule.length, rule.channel_offset, frozenset({RX}), n, RPL, i))
        else:
            raise ScheduleError(f"unknown orchestra rule {rule!r}")
        frames.append(sf)
    return TschSchedule(frames)


# -- per-node MAC state -------------------------------------------------------

@dataclass(frozen=True)
class TschConfig:
    hopping: HoppingSequence = HoppingSequence()
    slot_duration: int = 10 * MS
    guard_time: int = 1 * MS
    tx_offset: int = 2120
    ack_delay: int = 1000
    eb_period: int = 16 * SECOND
    scan_dwell: Optional[int] = None  # defaults to eb_period
    keepalive_timeout: Optional[int] = 12 * SECOND
    max_retries: int = 8
    min_be: int = 1
    max_be: int = 5
    queue_size: int = 32
    eb_requires_dodag: bool = True
    rules: OrchestraRuleSet = OrchestraRuleSet()

    def __post_init__(self):
        if self.guard_time <= 0 or self.slot_duration <= 0:
            raise ValueError("slot_duration and guard_time must be positive")
        if self.tx_offset <= self.guard_time:
            raise ValueError("tx_offset must exceed guard_time")
        if self.eb_period <= 0:
            raise ValueError("eb_period must be positive")
        if self.max_retries < 0 or not 0 <= self.min_be <= self.max_be:
            raise ValueError("bad retry/backoff settings")

    @property
    def dwell(self) -> int:
        return self.scan_dwell if self.scan_dwell is not None else self.eb_period


@dataclass
class Queued:
    frame: Frame
    on_done: Optional[Callable[[bool, int], None]]
    attempts: int = 0
    first_start: Optional[int] = None
    last_end: Optional[int] = None


def desync_deadline(sync_time: int, sync_err: float, drift_ppm: float, guard: int) -> Optional[int]:
    """Global time at which the accumulated offset first exceeds ``guard``."""
    if drift_ppm == 0:
        return None
    margin = guard - abs(sync_err)
    if margin <= 0:
        return sync_time
    return sync_time + int(margin * 1_000_000 // abs(drift_ppm)) + 1


@dataclass(frozen=True)
class SlotAction:
    kind: str  # "tx", "rx", "sleep"
    cell: Optional[Cell] = None
    item: Optional[Queued] = None


SLEEP = SlotAction("sleep")


class TschNode:
    def __init__(self, node: int, sim: Simulator, cfg: TschConfig, rng: random.Random,
                 drift_ppm: float = 0.0, coordinator: bool = False):
        self.id = node
        self.sim = sim
        self.cfg = cfg
        self.rng = rng
        self.drift_ppm = drift_ppm
        self.coordinator = coordinator
        self.booted = False
        self.synced = False
        self.scanning = False
        self.time_source: Optional[int] = None
        self.sync_time = 0
        self.sync_err = 0.0
        self.desync_at: Optional[int] = None
        self.last_heard = 0
        self.queue: list[Queued] = []
        self.parent: Optional[int] = None
        self.neighbors: set[int] = set()
        self.schedule = TschSchedule([])
        self.backoff = 0
        self.be = cfg.min_be
        self.next_eb: Optional[int] = None
        self.keepalive_pending = False
        self.joined_at: Optional[int] = None
        self.scan_index = 0
        self.scan_ev: Optional[int] = None
        self.desyncs = 0
        self.dropped = 0
        self._seen: OrderedDict[int, None] = OrderedDict()
        self._targets: set = set()
        self._table: list = [((), SLEEP)]

    def remember(self, uid: int) -> bool:
        """False if this frame was already delivered (a retransmission after a lost ACK)."""
        if uid in self._seen:
            return False
        self._seen[uid] = None
        if len(self._seen) > 64:
            self._seen.popitem(last=False)
        return True

    # -- clocks -------------------------------------------------------------

    def offset(self, t: int) -> float:
        """Offset in µs of this node's slot boundaries from the global grid."""
        if self.coordinator:
            return 0.0
        return self.sync_err + self.drift_ppm * 1e-6 * (t - self.sync_time)

    def resync(self, now: int, source_err: float = 0.0) -> None:
        self.sync_time = now
        self.sync_err = source_err
        self.last_heard = now
        self.keepalive_pending = False
        self.desync_at = None if self.coordinator else desync_deadline(
            now, source_err, self.drift_ppm, self.cfg.guard_time)

    # -- schedule -----------------------------------------------------------

    def reinstall(self) -> None:
        self.schedule = install_orchestra(self.id, self.parent, self.cfg.rules, self.neighbors,
                                          self.cfg.slot_duration)
        self._targets = self.schedule.unicast_targets()
        # per residue of the hyperperiod: (tx cells in priority order, rx action or sleep)
        period = math.lcm(*(sf.length for sf in self.schedule.slotframes)) if self.schedule.slotframes else 1
        table = []
        for r in range(period):
            cells = self.schedule.cells_at(r)
            txs = tuple(c for c in cells if c.is_tx)
            rx = next((SlotAction("rx", c) for c in cells if c.is_rx), SLEEP)
            table.append((txs, rx))
        self._table = table

    def clear_schedule(self) -> None:
        self.schedule = TschSchedule([])
        self._targets = set()
        self._table = [((), SLEEP)]

    def slot_tick(self, asn: int) -> SlotAction:
        """What this node does in slot ``asn``: the first tx cell with a matching
        frame wins, otherwise the first rx cell, otherwise the radio sleeps."""
        table = self._table
        txs, rx = table[asn % len(table)]
        if self.queue:
            for cell in txs:
                item = self._match(cell)
                if item is not None:
                    return SlotAction("tx", cell, item)
        return rx

    def _match(self, cell: Cell) -> Optional[Queued]:
        if not self.queue:
            return None
        if cell.shared:
            for item in self.queue:
                f = item.frame
                if f.broadcast or f.payload.get("keepalive") or f.dst not in self._targets:
                    if self.backoff > 0:
                        self.backoff -= 1
                        return None
                    return item
            return None
        for item in self.queue:
            f = item.frame
            if f.broadcast:
                continue
            if cell.link_target is None:
                if f.dst in self.neighbors or f.dst == self.parent:
                    return item
            elif f.dst == cell.link_target:
                return item
        return None

    def enqueue(self, frame: Frame, on_done=None) -> bool:
        if len(self.queue) >= self.cfg.queue_size:
            self.dropped += 1
            if on_done:
                on_done(False, 0)
            return False
        self.queue.append(Queued(frame, on_done))
        return True


# -- the network-wide slot engine ---------------------------------------------

ACK_WAIT = 400  # extra listen time after the expected ACK end


@dataclass
class _SlotState:
    asn: int
    rx: list
    tx: list
    receiving: set = field(default_factory=set)
    acked: set = field(default_factory=set)


class TschEngine:
    """Drives every node's TSCH MAC off one shared slot grid.

    Slots where nobody transmits only book the idle-listen window of each
    listening node. Slots with traffic go through the medium event by event.
    """

    def __init__(self, sim: Simulator, medium: Medium, cfg: TschConfig):
        self.sim = sim
        self.medium = medium
        self.cfg = cfg
        self.nodes: dict[int, TschNode] = {}
        self.deliver: dict[int, Callable[[Frame, int], None]] = {}
        self.link: dict[int, Callable[[int, bool, int], None]] = {}
        self.eb_allowed: dict[int, Callable[[], bool]] = {}
        self.on_air: Optional[Callable[[Frame, int, int], None]] = None
        self.on_sync: Optional[Callable[[int, int], None]] = None
        self.on_desync: Optional[Callable[[int, int], None]] = None
        self.asn = 0
        self.slots_run = 0
        self._running = False
        self._cur: Optional[_SlotState] = None
        self._ack_air = airtime_us(DEFAULT_LENGTHS[FrameKind.ACK])

    def add(self, node: TschNode, deliver, link=None, eb_allowed=None) -> None:
        self.nodes[node.id] = node
        self.deliver[node.id] = deliver
        if link is not None:
            self.link[node.id] = link
        self.eb_allowed[node.id] = eb_allowed or (lambda: True)
        self.medium.handlers[node.id] = _Handler(self, node)

    # -- boot / scan --------------------------------------------------------

    def boot(self, node_id: int, now: int) -> None:
        n = self.nodes[node_id]
        n.booted = True
        if n.coordinator:
            n.synced = True
            n.joined_at = now
            n.resync(now)
            n.reinstall()
            self.medium.sleep(node_id, now)
            self._arm_eb(n, now)
        else:
            n.scan_index = n.rng.randrange(len(self.cfg.hopping))
            self._scan(n, now)
            return
        self._ensure_running(now)

    def _scan(self, n: TschNode, now: int) -> None:
        n.scanning = True
        n.synced = False
        ch = self.cfg.hopping.channels[n.scan_index % len(self.cfg.hopping)]
        self.medium.set_listen(n.id, ch, now)
        n.scan_ev = self.sim.schedule(now + self.cfg.dwell, lambda ev, n=n: self._rotate(n), n.id, "scan")

    def _rotate(self, n: TschNode) -> None:
        n.scan_ev = None
        if n.scanning:
            n.scan_index += 1
            self._scan(n, self.sim.now)

    def _associate(self, n: TschNode, frame: Frame, now: int, src_err: float) -> None:
        n.scanning = False
        if n.scan_ev is not None:
            self.sim.cancel(n.scan_ev)
            n.scan_ev = None
        n.synced = True
        n.time_source = frame.src
        n.joined_at = now
        n.resync(now, src_err)
        n.reinstall()
        self.medium.sleep(n.id, now)
        self._arm_eb(n, now)
        if self.on_sync is not None:
            self.on_sync(n.id, now)

    def _desync(self, n: TschNode, now: int) -> None:
        n.desyncs += 1
        n.synced = False
        n.time_source = None
        pending, n.queue = n.queue, []
        for item in pending:
            if item.on_done:
                item.on_done(False, item.attempts)
        n.parent = None
        n.neighbors = set()
        n.clear_schedule()
        n.next_eb = None
        n.keepalive_pending = False
        if self.on_desync is not None:
            self.on_desync(n.id, now)
        self._scan(n, now)

    def _arm_eb(self, n: TschNode, now: int) -> None:
        T = self.cfg.eb_period
        n.next_eb = now + T - n.rng.randrange(T // 4 + 1)

    # -- upper-layer hooks --------------------------------------------------

    def send(self, node_id: int, frame: Frame, on_done=None) -> None:
        n = self.nodes[node_id]
        if not n.synced:
            n.dropped += 1
            if on_done:
                on_done(False, 0)
            return
        n.enqueue(frame, on_done)

    def set_parent(self, node_id: int, parent: Optional[int]) -> None:
        n = self.nodes[node_id]
        n.parent = parent
        if parent is not None and not n.coordinator:
            n.time_source = parent
        if n.synced:
            n.reinstall()

    def set_neighbors(self, node_id: int, neighbors: Iterable[int]) -> None:
        n = self.nodes[node_id]
        n.neighbors = set(neighbors)
        if n.synced:
            n.reinstall()

    # -- slot loop ----------------------------------------------------------

    def _ensure_running(self, now: int) -> None:
        if self._running:
            return
        self._running = True
        sd = self.cfg.slot_duration
        self.asn = -(-now // sd)
        self.sim.schedule(self.asn * sd, self._slot, None, "slot")

    def _slot(self, ev) -> None:
        sim, cfg = self.sim, self.cfg
        asn = self.asn
        t0 = sim.now
        self.slots_run += 1
        sim.schedule(t0 + cfg.slot_duration, self._slot, None, "slot")
        self.asn = asn + 1

        hs = cfg.hopping
        txs: list = []
        rxs: list = []
        for n in self.nodes.values():
            if not n.synced:
                continue
            if n.desync_at is not None and t0 >= n.desync_at:
                self._desync(n, t0)
                continue
            self._housekeeping(n, t0)
            act = n.slot_tick(asn)
            if act.kind == "tx":
                txs.append((n, act, hop_channel(asn, act.cell.channel_offset, hs)))
            elif act.kind == "rx":
                rxs.append((n, hop_channel(asn, act.cell.channel_offset, hs)))
        t_tx = t0 + cfg.tx_offset
        g = cfg.guard_time
        if not txs:
            report = self.medium.report_state
            for n, _ in rxs:
                report(n.id, "rx_listen", t_tx - g)
                report(n.id, "sleep", t_tx + g)
            return
        st = _SlotState(asn, rxs, txs)
        self._cur = st
        sim.schedule(t_tx - g, lambda ev: self._open_rx(st), None, "rx-open")
        sim.schedule(t_tx, lambda ev: self._begin_tx(st), None, "tx")
        sim.schedule(t_tx + g, lambda ev: self._close_rx(st), None, "rx-close")

    def _housekeeping(self, n: TschNode, now: int) -> None:
        if n.next_eb is not None and now >= n.next_eb:
            self._arm_eb(n, now)
            if self.eb_allowed[n.id]():
                n.enqueue(Frame(FrameKind.EB, n.id, BROADCAST, payload={"asn": self.asn}))
        ka = self.cfg.keepalive_timeout
        if (ka is not None and not n.coordinator and not n.keepalive_pending
                and n.time_source is not None and now - n.last_heard >= ka):
            n.keepalive_pending = True
            n.enqueue(Frame(FrameKind.DATA, n.id, n.time_source, length=20, payload={"keepalive": True}))

    def _open_rx(self, st: _SlotState) -> None:
        now = self.sim.now
        for n, ch in st.rx:
            self.medium.set_listen(n.id, ch, now)

    def _begin_tx(self, st: _SlotState) -> None:
        now = self.sim.now
        for n, act, ch in st.tx:
            item = act.item
            item.attempts += 1
            if item.first_start is None:
                item.first_start = now
            tx = self.medium.begin_transmission(n.id, ch, item.frame, now)
            self.sim.schedule(now + tx.airtime, lambda ev, n=n, act=act, tx=tx: self._end_tx(st, n, act, tx),
                              n.id, "tx-end")

    def _close_rx(self, st: _SlotState) -> None:
        now = self.sim.now
        for n, _ in st.rx:
            if n.id not in st.receiving and self.medium.listening.get(n.id) is not None:
                self.medium.sleep(n.id, now)

    def _end_tx(self, st: _SlotState, n: TschNode, act: SlotAction, tx: Transmission) -> None:
        now = self.sim.now
        item = act.item
        item.last_end = now
        if item.frame.broadcast:
            self.medium.end_transmission(tx, now)
            self._done(n, item, True)
            return
        self.medium.end_transmission(tx, now, listen_after=True)
        wait = self.cfg.ack_delay + self._ack_air + ACK_WAIT
        self.sim.schedule(now + wait, lambda ev: self._ack_deadline(st, n, act), n.id, "ack-wait")

    def _ack_deadline(self, st: _SlotState, n: TschNode, act: SlotAction) -> None:
        item = act.item
        if item.frame.uid in st.acked:
            return
        now = self.sim.now
        if self.medium.listening.get(n.id) is not None:
            self.medium.sleep(n.id, now)
        if item.attempts > self.cfg.max_retries:
            self._done(n, item, False)
            return
        if act.cell.shared:
            n.be = min(n.be + 1, self.cfg.max_be)
            n.backoff = n.rng.randrange(1 << n.be)

    def _done(self, n: TschNode, item: Queued, ok: bool) -> None:
        try:
            n.queue.remove(item)
        except ValueError:
            return
        f = item.frame
        keepalive = f.payload.get("keepalive", False)
        if keepalive:
            n.keepalive_pending = False
        if not f.broadcast:
            n.be = self.cfg.min_be
            if ok:
                n.backoff = 0
            link = self.link.get(n.id)
            if link is not None and not keepalive:
                link(f.dst, ok, item.attempts)
        if ok and self.on_air is not None and f.kind in RPL_KINDS:
            self.on_air(f, item.first_start, item.last_end)
        if item.on_done:
            item.on_done(ok, item.attempts)

    # -- reception ----------------------------------------------------------

    def rx_start(self, n: TschNode, tx: Transmission, now: int) -> None:
        if n.synced and self._cur is not None:
            self._cur.receiving.add(n.id)

    def rx_end(self, n: TschNode, tx: Transmission, ok: bool, now: int) -> None:
        frame = tx.frame
        src = self.nodes.get(tx.sender)
        if n.scanning:
            if ok and frame.kind is FrameKind.EB and src is not None and src.synced:
                self._associate(n, frame, now, src.offset(now))
            return
        if not n.synced:
            return
        if ok and src is not None and abs(src.offset(now) - n.offset(now)) >= self.cfg.guard_time:
            ok = False
        if not ok:
            if self.medium.listening.get(n.id) is not None:
                self.medium.sleep(n.id, now)
            return
        from_source = frame.src == n.time_source and src is not None
        if frame.kind is FrameKind.ACK:
            if frame.dst != n.id:
                return
            uid = frame.payload.get("ack")
            for item in n.queue:
                if item.frame.uid == uid:
                    if from_source:
                        n.resync(now, src.offset(now))
                    self.medium.sleep(n.id, now)
                    if self._cur is not None:
                        self._cur.acked.add(uid)
                    self._done(n, item, True)
                    break
            return
        if from_source:
            n.resync(now, src.offset(now))
        if frame.dst == n.id:
            self._ack(n, frame, tx.channel, now)
            if n.remember(frame.uid):
                self.deliver_up(n, frame, now)
            return
        self.medium.sleep(n.id, now)
        if frame.broadcast and frame.kind is not FrameKind.EB and n.remember(frame.uid):
            self.deliver_up(n, frame, now)

    def _ack(self, n: TschNode, frame: Frame, channel: int, now: int) -> None:
        ack = Frame(FrameKind.ACK, n.id, frame.src, payload={"ack": frame.uid})

        def send(ev):
            t = self.sim.now
            if self.medium.transmitting.get(n.id) is not None:
                return
            atx = self.medium.begin_transmission(n.id, channel, ack, t)
            self.sim.schedule(t + atx.airtime, lambda ev: self.medium.end_transmission(atx, self.sim.now),
                              n.id, "ack-end")

        self.sim.schedule(now + self.cfg.ack_delay, send, n.id, "ack")

    def deliver_up(self, n: TschNode, frame: Frame, now: int) -> None:
        if frame.payload.get("keepalive"):
            return
        self.deliver[n.id](frame, now)


class _Handler:
    def __init__(self, engine: TschEngine, node: TschNode):
        self.engine = engine
        self.node = node

    def on_rx_start(self, tx: Transmission, now: int) -> None:
        self.engine.rx_start(self.node, tx, now)

    def on_rx_end(self, tx: Transmission, ok: bool, now: int) -> None:
        self.engine.rx_end(self.node, tx, ok, now)


# -- closed-form helpers ------------------------------------------------------

def channel_histogram(hs: HoppingSequence, asns: Iterable[int], channel_offset: int = 0) -> dict[int, int]:
    out = {c: 0 for c in hs.channels}
    for a in asns:
        out[hop_channel(a, channel_offset, hs)] += 1
    return out
