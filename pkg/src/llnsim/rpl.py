"""RPL DODAG formation and maintenance.

The node logic is MAC-agnostic: it hands frames to a ``send(frame, on_done)``
callable and receives frames through :meth:`RplNode.receive`.  Link
outcomes reported by the MAC feed the ETX estimate.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .kernel import MS, SECOND, Simulator
from .medium import BROADCAST, Frame, FrameKind
from .trace import ROUTE_ADD, ROUTE_REMOVE, TraceEvent

INFINITE_RANK = 0xFFFF

SendDone = Callable[[bool, int], None]
SendFn = Callable[[Frame, Optional[SendDone]], None]


class RplError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrickleConfig:
    i_min: int = 4096 * MS
    doublings: int = 8
    k: int = 10

    def __post_init__(self):
        if self.i_min <= 0 or self.doublings < 0 or self.k < 1:
            raise ValueError("trickle needs i_min > 0, doublings >= 0, k >= 1")

    @property
    def i_max(self) -> int:
        return self.i_min << self.doublings


@dataclass(frozen=True)
class RplConfig:
    mop: int = 2
    min_hop_rank_increase: int = 256
    etx_init: float = 1.5
    etx_alpha: float = 0.8
    etx_fail_sample: float = 4.0
    hysteresis: int = 128
    trickle: TrickleConfig = TrickleConfig()
    dis_period: int = 30 * SECOND
    dis_jitter: int = 3 * SECOND
    dao_lifetime: int = 600 * SECOND
    dao_retries: int = 3
    dao_retry_backoff: int = 2 * SECOND
    join_unicast_dio: bool = True

    def __post_init__(self):
        if self.mop not in (0, 1, 2):
            raise ValueError(f"mop must be 0, 1 or 2, got {self.mop}")
        if not 0.0 <= self.etx_alpha < 1.0:
            raise ValueError("etx_alpha must lie in [0, 1)")
        if self.etx_init < 1.0:
            raise ValueError("etx_init must be >= 1")
        if self.dis_jitter >= self.dis_period:
            raise ValueError("dis_jitter must be smaller than dis_period")


class TrickleTimer:
    """Interval state of a trickle timer; the owner schedules the firing."""

    def __init__(self, cfg: TrickleConfig, rng: random.Random):
        self.cfg = cfg
        self.rng = rng
        self.interval = cfg.i_min
        self.counter = 0

    def first_delay(self) -> int:
        return self._draw()

    def _draw(self) -> int:
        half = self.interval // 2
        return half + self.rng.randrange(self.interval - half)

    def consistent(self) -> None:
        self.counter += 1

    def expire(self) -> tuple[bool, int]:
        """Returns (transmit?, delay until the next expiry)."""
        transmit = self.counter < self.cfg.k
        self.interval = min(2 * self.interval, self.cfg.i_max)
        self.counter = 0
        return transmit, self._draw()

    def inconsistent(self) -> Optional[int]:
        """Reset to i_min; returns the new delay, or None if already at i_min."""
        if self.interval == self.cfg.i_min:
            return None
        self.interval = self.cfg.i_min
        self.counter = 0
        return self._draw()


@dataclass
class RouteEntry:
    target: int
    next_hop: int
    learned_at: int
    lifetime: int
    via: Optional[int] = None  # parent shown in route listings


@dataclass
class ParentInfo:
    rank: int
    etx: float


@dataclass
class DodagState:
    dodag_id: Optional[int] = None
    rank: int = INFINITE_RANK
    preferred_parent: Optional[int] = None
    parent_set: dict[int, ParentInfo] = field(default_factory=dict)
    routes: dict[int, RouteEntry] = field(default_factory=dict)


class RplNode:
    def __init__(self, node_id: int, sim: Simulator, cfg: RplConfig, rng: random.Random,
                 send: SendFn, trace: Optional[Callable[[TraceEvent], None]] = None,
                 is_root: bool = False):
        self.id = node_id
        self.sim = sim
        self.cfg = cfg
        self.rng = rng
        self._send = send
        self.trace = trace or (lambda ev: None)
        self.is_root = is_root
        self.state = DodagState()
        self.trickle = TrickleTimer(cfg.trickle, rng)
        self.booted = False
        self.advertised_rank = INFINITE_RANK
        self.dao_seq = 0
        self._trickle_ev: Optional[int] = None
        self._dis_ev: Optional[int] = None
        self._dao_refresh_ev: Optional[int] = None
        self._expiry_ev: dict[int, int] = {}
        self.parent_listeners: list[Callable[[Optional[int], Optional[int]], None]] = []
        self.route_listeners: list[Callable[[], None]] = []
        self.rank_log: list[tuple[int, int, int]] = []  # (time, own rank, parent rank seen)
        self.trickle_log: list[int] = []
        self.sent_log: list[tuple[int, FrameKind, int, dict]] = []  # (time, kind, dst, payload)
        self.parent_log: list[tuple[int, Optional[int], Optional[int]]] = []  # (time, old, new)
        self.dropped = 0

    def send(self, frame: Frame, on_done: Optional[SendDone] = None) -> None:
        self.sent_log.append((self.sim.now, frame.kind, frame.dst, frame.payload))
        self._send(frame, on_done)

    # -- properties ---------------------------------------------------------

    @property
    def joined(self) -> bool:
        return self.state.dodag_id is not None

    @property
    def rank(self) -> int:
        return self.state.rank

    @property
    def parent(self) -> Optional[int]:
        return self.state.preferred_parent

    # -- lifecycle ----------------------------------------------------------

    def boot(self, now: int) -> None:
        self.booted = True
        if self.is_root:
            self.start_root(now)
        else:
            self._arm_dis(now, first=True)

    def start_root(self, now: int) -> None:
        if self.joined:
            raise RplError(f"node {self.id} is already in a DODAG")
        self.is_root = True
        self.state.dodag_id = self.id
        self.state.rank = self.cfg.min_hop_rank_increase
        self.trickle = TrickleTimer(self.cfg.trickle, self.rng)
        self._arm_trickle(self.trickle.first_delay())

    def detach(self, now: int) -> None:
        """Leave the DODAG (e.g. after losing MAC synchronisation)."""
        if self.is_root or not self.joined:
            return
        old = self.state.preferred_parent
        self.state.dodag_id = None
        self.state.rank = INFINITE_RANK
        self.state.preferred_parent = None
        self.state.parent_set.clear()
        self.sim.cancel(self._trickle_ev)
        self.sim.cancel(self._dao_refresh_ev)
        self._trickle_ev = self._dao_refresh_ev = None
        self._notify_parent(old, None)
        self._arm_dis(now, first=True)

    # -- timers -------------------------------------------------------------

    def _arm_dis(self, now: int, first: bool = False) -> None:
        self.sim.cancel(self._dis_ev)
        if first:
            delay = self.rng.randrange(SECOND)
        else:
            j = self.cfg.dis_jitter
            delay = self.cfg.dis_period + self.rng.randint(-j, j)
        self._dis_ev = self.sim.schedule(now + delay, self._on_dis_timer, self.id, "dis")

    def _on_dis_timer(self, ev) -> None:
        self._dis_ev = None
        if self.joined:
            return
        self.send(Frame(FrameKind.DIS, self.id, BROADCAST), None)
        self._arm_dis(self.sim.now)

    def _arm_trickle(self, delay: int) -> None:
        self.sim.cancel(self._trickle_ev)
        self.trickle_log.append(self.trickle.interval)
        self._trickle_ev = self.sim.schedule(self.sim.now + delay, self._on_trickle, self.id, "trickle")

    def _on_trickle(self, ev) -> None:
        self._trickle_ev = None
        if not self.joined:
            return
        transmit, delay = self.trickle.expire()
        if transmit:
            self._send_dio(BROADCAST)
        self._arm_trickle(delay)

    def _reset_trickle(self) -> None:
        delay = self.trickle.inconsistent()
        if delay is not None or self._trickle_ev is None:
            self._arm_trickle(delay if delay is not None else self.trickle.first_delay())

    # -- frames -------------------------------------------------------------

    def _dio_frame(self, dst: int) -> Frame:
        self.advertised_rank = self.state.rank
        return Frame(FrameKind.DIO, self.id, dst,
                     payload={"rank": self.state.rank, "dodag": self.state.dodag_id, "mop": self.cfg.mop})

    def _send_dio(self, dst: int, on_done: Optional[SendDone] = None) -> None:
        self.send(self._dio_frame(dst), on_done)

    def receive(self, frame: Frame, now: int) -> None:
        if not self.booted:
            return
        kind = frame.kind
        if kind is FrameKind.DIO:
            self.on_dio(frame.src, frame.payload, now, unicast=not frame.broadcast)
        elif kind is FrameKind.DIS:
            self.on_dis(frame.src, not frame.broadcast, now)
        elif kind in (FrameKind.DAO, FrameKind.NO_PATH_DAO):
            self.on_dao(frame, now)
        elif kind is FrameKind.DAO_ACK:
            self.on_dao_ack(frame, now)

    def on_dis(self, src: int, unicast: bool, now: int) -> None:
        if not self.joined:
            return
        if unicast:
            self._send_dio(src)
        else:
            self._reset_trickle()

    # -- parent selection ---------------------------------------------------

    def _rank_via(self, nbr: int) -> int:
        info = self.state.parent_set[nbr]
        if info.rank >= INFINITE_RANK:
            return INFINITE_RANK
        return min(INFINITE_RANK, info.rank + round(self.cfg.min_hop_rank_increase * info.etx))

    def _best_candidate(self, limit: Optional[int]) -> Optional[int]:
        best, best_rank = None, INFINITE_RANK
        for nbr in sorted(self.state.parent_set):
            info = self.state.parent_set[nbr]
            if limit is not None and info.rank >= limit:
                continue
            r = self._rank_via(nbr)
            if r < best_rank:
                best, best_rank = nbr, r
        return best

    def on_dio(self, src: int, payload: dict, now: int, unicast: bool = False) -> None:
        if self.is_root:
            if payload.get("rank", INFINITE_RANK) >= self.state.rank:
                self.trickle.consistent()
            return
        rank = payload.get("rank", INFINITE_RANK)
        info = self.state.parent_set.get(src)
        if info is None:
            info = self.state.parent_set[src] = ParentInfo(rank, self.cfg.etx_init)
        else:
            info.rank = rank
        if not self.joined:
            if rank >= INFINITE_RANK:
                return
            self._join(src, payload, now)
            return
        if payload.get("dodag") != self.state.dodag_id:
            return
        changed = self._reevaluate(now)
        if not changed:
            self.trickle.consistent()

    def _join(self, dio_sender: int, payload: dict, now: int) -> None:
        parent = self._best_candidate(None)
        if parent is None:
            return
        st = self.state
        st.dodag_id = payload.get("dodag")
        st.preferred_parent = parent
        st.rank = self._rank_via(parent)
        self.rank_log.append((now, st.rank, st.parent_set[parent].rank))
        self.sim.cancel(self._dis_ev)
        self._dis_ev = None
        self.trickle = TrickleTimer(self.cfg.trickle, self.rng)
        self._notify_parent(None, parent)

        steps: list[Callable[[SendDone], None]] = []
        if self.cfg.join_unicast_dio:
            steps.append(lambda done: self._send_dio(dio_sender, done))
        steps.append(lambda done: self._send_dio(BROADCAST, done))
        if self.cfg.mop >= 1:
            steps.append(lambda done: self._send_own_dao(done))
        self._chain(steps, lambda: self._arm_trickle(self.trickle.first_delay()))

    def _chain(self, steps: list, finish: Optional[Callable[[], None]] = None) -> None:
        if not steps:
            if finish is not None:
                finish()
            return
        head, rest = steps[0], steps[1:]
        head(lambda ok, attempts: self._chain(rest, finish))

    def _reevaluate(self, now: int) -> bool:
        """Recompute rank and maybe switch parent; True when anything changed."""
        st = self.state
        current = st.preferred_parent
        if current is None or current not in st.parent_set:
            return False
        cur_rank = self._rank_via(current)
        best = self._best_candidate(st.rank)
        switched = False
        if best is not None and best != current:
            if cur_rank - self._rank_via(best) > self.cfg.hysteresis:
                self._switch_parent(current, best, now)
                switched = True
        if not switched:
            new_rank = cur_rank
            if new_rank != st.rank:
                st.rank = new_rank
                self.rank_log.append((now, st.rank, st.parent_set[current].rank))
                if abs(st.rank - self.advertised_rank) >= self.cfg.hysteresis:
                    self._reset_trickle()
                return True
            return False
        return True

    def _switch_parent(self, old: int, new: int, now: int) -> None:
        st = self.state
        st.preferred_parent = new
        st.rank = self._rank_via(new)
        self.rank_log.append((now, st.rank, st.parent_set[new].rank))
        self._notify_parent(old, new)
        if abs(st.rank - self.advertised_rank) >= self.cfg.hysteresis:
            self._reset_trickle()
        if self.cfg.mop == 0:
            return
        targets = [self.id] + sorted(t for t in st.routes if t != self.id)
        steps: list[Callable[[SendDone], None]] = []
        for t in targets:
            steps.append(lambda done, t=t: self._send_no_path(t, old, done))
        steps.append(lambda done: self._send_own_dao(done))
        for t in targets[1:]:
            steps.append(lambda done, t=t: self._send_dao_for(t, done))
        self._chain(steps)

    def link_outcome(self, nbr: int, ok: bool, attempts: int) -> None:
        info = self.state.parent_set.get(nbr)
        if info is None:
            return
        sample = float(attempts) if ok else max(float(attempts), self.cfg.etx_fail_sample)
        a = self.cfg.etx_alpha
        info.etx = a * info.etx + (1.0 - a) * sample
        if self.joined and not self.is_root:
            self._reevaluate(self.sim.now)

    def _notify_parent(self, old: Optional[int], new: Optional[int]) -> None:
        self.parent_log.append((self.sim.now, old, new))
        for cb in self.parent_listeners:
            cb(old, new)

    # -- DAO ----------------------------------------------------------------

    def _dao_dst(self) -> int:
        return self.state.preferred_parent

    def _send_own_dao(self, on_done: Optional[SendDone] = None, retries: Optional[int] = None) -> None:
        if self.cfg.mop == 0 or self.state.preferred_parent is None:
            if on_done:
                on_done(False, 0)
            return
        self.dao_seq += 1
        parent = self.state.preferred_parent
        frame = Frame(FrameKind.DAO, self.id, parent,
                      payload={"target": self.id, "parent": parent, "lifetime": self.cfg.dao_lifetime,
                               "seq": self.dao_seq, "root": self.state.dodag_id})
        left = self.cfg.dao_retries if retries is None else retries

        def done(ok: bool, attempts: int) -> None:
            if not ok and left > 0 and self.state.preferred_parent == parent:
                # random backoff so hidden neighbours stop retrying in lockstep
                delay = self.rng.randrange(self.cfg.dao_retry_backoff + 1)
                self.sim.schedule(self.sim.now + delay, lambda ev: self._retry_dao(parent, on_done, left - 1),
                                  self.id, "dao-retry")
                return
            if on_done:
                on_done(ok, attempts)

        self.send(frame, done)
        self._arm_dao_refresh()

    def _send_dao_for(self, target: int, on_done: Optional[SendDone] = None) -> None:
        parent = self.state.preferred_parent
        entry = self.state.routes.get(target)
        if parent is None or entry is None:
            if on_done:
                on_done(False, 0)
            return
        frame = Frame(FrameKind.DAO, self.id, parent,
                      payload={"target": target, "parent": entry.next_hop, "lifetime": entry.lifetime,
                               "seq": 0, "root": self.state.dodag_id})
        self.send(frame, on_done)

    def _send_no_path(self, target: int, old_parent: int, on_done: Optional[SendDone] = None) -> None:
        if self.cfg.mop == 2:
            dst = old_parent
        else:
            dst = self.state.preferred_parent
        frame = Frame(FrameKind.NO_PATH_DAO, self.id, dst,
                      payload={"target": target, "parent": old_parent, "lifetime": 0,
                               "root": self.state.dodag_id})
        self.send(frame, on_done)

    def _retry_dao(self, parent: int, on_done: Optional[SendDone], left: int) -> None:
        if self.joined and self.state.preferred_parent == parent:
            self._send_own_dao(on_done, left)
        elif on_done:
            on_done(False, 0)

    def _arm_dao_refresh(self) -> None:
        self.sim.cancel(self._dao_refresh_ev)
        half = self.cfg.dao_lifetime // 2
        delay = half - self.rng.randrange(half // 10 + 1)
        self._dao_refresh_ev = self.sim.schedule(self.sim.now + delay,
                                                 self._on_dao_refresh, self.id, "dao-refresh")

    def _on_dao_refresh(self, ev) -> None:
        self._dao_refresh_ev = None
        if self.joined and not self.is_root:
            self._send_own_dao()

    def _log_route(self, kind: str, target: int, via: int, now: int) -> None:
        self.trace(TraceEvent(now, now, kind, target, self.id, via))
        for cb in self.route_listeners:
            cb()

    def _install(self, target: int, next_hop: int, lifetime: int, now: int, via: int) -> None:
        routes = self.state.routes
        old = routes.get(target)
        routes[target] = RouteEntry(target, next_hop, now, lifetime, via)
        if old is None or old.next_hop != next_hop or old.via != via:
            self._log_route(ROUTE_ADD, target, via, now)
        self.sim.cancel(self._expiry_ev.get(target))
        self._expiry_ev[target] = self.sim.schedule(now + lifetime, lambda ev, t=target: self._expire(t),
                                                    self.id, "route-expiry")

    def _remove(self, target: int, now: int) -> None:
        entry = self.state.routes.pop(target, None)
        if entry is None:
            return
        self.sim.cancel(self._expiry_ev.pop(target, None))
        self._log_route(ROUTE_REMOVE, target, entry.via, now)

    def _expire(self, target: int) -> None:
        self._expiry_ev.pop(target, None)
        self._remove(target, self.sim.now)

    def on_dao(self, frame: Frame, now: int) -> None:
        if not self.joined or self.cfg.mop == 0:
            self.dropped += 1
            return
        p = frame.payload
        target = p["target"]
        no_path = frame.kind is FrameKind.NO_PATH_DAO
        if self.cfg.mop == 2:
            # storing mode: every hop keeps "target via the child that told us"
            if no_path:
                entry = self.state.routes.get(target)
                if entry is None or entry.next_hop != frame.src:
                    return
                self._remove(target, now)
            else:
                self._install(target, frame.src, p["lifetime"], now, frame.src)
        else:
            if not self.is_root:
                self._forward_up(frame)
                return
            parent = p["parent"]
            via = target if parent == self.id else parent
            if no_path:
                entry = self.state.routes.get(target)
                if entry is not None and entry.via == via:
                    self._remove(target, now)
                return
            self._install(target, parent, p["lifetime"], now, via)
        if self.is_root:
            if not no_path:
                self._send_dao_ack(target, p.get("seq", 0))
            return
        self._forward_up(frame)

    def _send_dao_ack(self, target: int, seq: int) -> None:
        payload = {"target": target, "seq": seq}
        if self.cfg.mop == 1:
            path = self.source_route(target)
            if not path:
                return
            payload["path"] = path
            hop = path[0]
        else:
            hop = self.first_hop_to(target)
            if hop is None:
                return
        self.send(Frame(FrameKind.DAO_ACK, self.id, hop, payload=payload), None)

    def _forward_up(self, frame: Frame) -> None:
        parent = self.state.preferred_parent
        if parent is None:
            self.dropped += 1
            return
        self.send(Frame(frame.kind, self.id, parent, payload=dict(frame.payload)), None)

    def source_route(self, target: int) -> Optional[list[int]]:
        """Hops from this (root) node down to ``target`` in non-storing mode."""
        chain = [target]
        while True:
            entry = self.state.routes.get(chain[-1])
            if entry is None:
                return None
            if entry.next_hop == self.id:
                return list(reversed(chain))
            if entry.next_hop in chain:
                return None
            chain.append(entry.next_hop)

    def first_hop_to(self, target: int) -> Optional[int]:
        """Next hop from this node toward ``target`` using stored routes."""
        if self.cfg.mop == 2:
            entry = self.state.routes.get(target)
            return None if entry is None else entry.next_hop
        path = self.source_route(target)
        return path[0] if path else None

    def on_dao_ack(self, frame: Frame, now: int) -> None:
        target = frame.payload["target"]
        if target == self.id:
            return
        if self.cfg.mop == 1:
            path = frame.payload.get("path") or []
            i = path.index(self.id) if self.id in path else -1
            hop = path[i + 1] if 0 <= i < len(path) - 1 else None
        else:
            hop = self.first_hop_to(target)
        if hop is not None:
            self.send(Frame(FrameKind.DAO_ACK, self.id, hop, payload=dict(frame.payload)), None)

    # -- schedule-relevant neighbours ---------------------------------------

    def route_next_hops(self) -> set[int]:
        return {e.next_hop for e in self.state.routes.values()}


# -- static views over a converged DODAG --------------------------------------

@dataclass
class DodagView:
    """Snapshot of parents and route tables used for path analysis."""

    root: int
    parents: dict[int, Optional[int]]
    routes: dict[int, dict[int, int]]  # holder -> target -> next hop
    mop: int

    @classmethod
    def from_nodes(cls, nodes: Iterable[RplNode], mop: Optional[int] = None) -> "DodagView":
        nodes = list(nodes)
        root = next(n.id for n in nodes if n.is_root)
        parents = {n.id: n.parent for n in nodes}
        routes = {n.id: {t: e.next_hop for t, e in n.state.routes.items()} for n in nodes}
        return cls(root, parents, routes, nodes[0].cfg.mop if mop is None else mop)

    def ancestors(self, node: int) -> list[int]:
        out, seen = [], {node}
        cur = self.parents.get(node)
        while cur is not None:
            if cur in seen:
                raise RplError(f"parent loop through {cur}")
            seen.add(cur)
            out.append(cur)
            cur = self.parents.get(cur)
        return out

    def parent_graph_acyclic(self) -> bool:
        try:
            for n in self.parents:
                self.ancestors(n)
        except RplError:
            return False
        return True

    def routes_acyclic(self) -> bool:
        """Following stored next hops for any target never revisits a node.

        In non-storing mode the root keeps target -> parent entries instead,
        so every source route must reach the root.
        """
        if self.mop == 1:
            return all(self._source_route(t) is not None for t in self.routes.get(self.root, {}))
        for holder, table in self.routes.items():
            for target in table:
                cur, seen = holder, set()
                while cur != target:
                    if cur in seen:
                        return False
                    seen.add(cur)
                    nxt = self.routes.get(cur, {}).get(target)
                    if nxt is None:
                        break
                    cur = nxt
        return True

    def forward(self, node: int, dst: int, at_root_path: Optional[list[int]] = None) -> Optional[int]:
        """Next hop for a packet at ``node`` heading to ``dst``; ``node`` itself means deliver."""
        if node == dst:
            return node
        if self.mop == 2:
            nxt = self.routes.get(node, {}).get(dst)
            if nxt is not None:
                return nxt
            return self.parents.get(node)
        if self.mop == 1:
            if node == self.root:
                path = self._source_route(dst)
                return path[0] if path else None
            if at_root_path and node in at_root_path:
                i = at_root_path.index(node)
                return at_root_path[i + 1] if i + 1 < len(at_root_path) else None
            return self.parents.get(node)
        return self.parents.get(node) if node != self.root else None

    def _source_route(self, dst: int) -> Optional[list[int]]:
        table = self.routes.get(self.root, {})
        chain = [dst]
        while True:
            hop = table.get(chain[-1])
            if hop is None:
                return None
            if hop == self.root:
                break
            if hop in chain:
                return None
            chain.append(hop)
        return list(reversed(chain))

    def hop_path(self, src: int, dst: int, limit: int = 64) -> Optional[list[int]]:
        path = [src]
        cur = src
        down: Optional[list[int]] = None
        while cur != dst:
            if self.mop == 1 and cur == self.root:
                down = self._source_route(dst)
                if down is None:
                    return None
                path.extend(down)
                return path
            nxt = self.forward(cur, dst, down)
            if nxt is None or len(path) > limit:
                return None
            path.append(nxt)
            cur = nxt
        return path

    def hop_count(self, src: int, dst: int) -> Optional[int]:
        p = self.hop_path(src, dst)
        return None if p is None else len(p) - 1


def non_storing_routes(parents: dict[int, Optional[int]], root: int) -> dict[int, int]:
    """Root's source-route table for a parent map (target -> its parent)."""
    return {n: (root if p == root else p) for n, p in parents.items() if p is not None}
