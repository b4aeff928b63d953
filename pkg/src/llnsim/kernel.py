"""Deterministic discrete-event kernel.

All scheduling happens on a single global clock counted in integer
microsecond ticks.  Per-node clock drift is a read-side transform applied
by :meth:`Simulator.local_time`; protocol code converts explicitly.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

US = 1
MS = 1_000
SECOND = 1_000_000

MAX_DRIFT_PPM = 10_000


def seconds(value: float) -> int:
    """Convert seconds to ticks, rounding to the nearest microsecond."""
    return int(round(value * SECOND))


def to_seconds(ticks: int) -> float:
    return ticks / SECOND


class SimulationError(RuntimeError):
    pass


class EventCapExceeded(SimulationError):
    pass


@dataclass(order=True)
class SimEvent:
    fire_at: int
    seq: int
    id: int = field(compare=False)
    target: Any = field(compare=False, default=None)
    kind: Any = field(compare=False, default=None)
    callback: Optional[Callable[["SimEvent"], None]] = field(compare=False, default=None, repr=False)
    cancelled: bool = field(compare=False, default=False, repr=False)


@dataclass
class ClockModel:
    drift_ppm: int = 0
    offset: int = 0

    def __post_init__(self):
        if abs(self.drift_ppm) > MAX_DRIFT_PPM:
            raise ValueError(f"drift_ppm {self.drift_ppm} outside ±{MAX_DRIFT_PPM}")

    def local(self, global_ticks: int) -> int:
        # integer arithmetic keeps rounding identical across platforms
        num = global_ticks * (1_000_000 + self.drift_ppm)
        return (2 * num + 1_000_000) // 2_000_000 + self.offset

    def to_global(self, local_ticks: int) -> int:
        """Smallest global tick whose local reading is >= ``local_ticks``."""
        scale = 1_000_000 + self.drift_ppm
        g = max(0, ((local_ticks - self.offset) * 1_000_000) // scale)
        while self.local(g) < local_ticks:
            g += 1
        while g > 0 and self.local(g - 1) >= local_ticks:
            g -= 1
        return g


def rng_stream(seed: int, stream: Any) -> random.Random:
    """Independent RNG for ``(seed, stream)``.

    String seeding goes through SHA-512 in CPython, so the draws are the
    same on every platform.
    """
    return random.Random(f"llnsim:{seed}:{stream}")


class Simulator:
    """Event queue ordered by ``(fire_at, seq)``."""

    def __init__(self, seed: int = 0, event_cap: int = 50_000_000):
        self.now = 0
        self.seed = seed
        self.event_cap = event_cap
        self.fired = 0
        self._queue: list[tuple[int, int, SimEvent]] = []
        self._pending: dict[int, SimEvent] = {}
        self._seq = 0
        self._next_id = 1
        self.clocks: dict[Any, ClockModel] = {}

    # -- scheduling ---------------------------------------------------------

    def schedule(self, fire_at: int, callback: Callable[[SimEvent], None] | None = None,
                 target: Any = None, kind: Any = None) -> int:
        if fire_at < self.now:
            raise SimulationError(f"cannot schedule at {fire_at} < now {self.now}")
        ev = SimEvent(fire_at=int(fire_at), seq=self._seq, id=self._next_id,
                      target=target, kind=kind, callback=callback)
        self._seq += 1
        self._next_id += 1
        heapq.heappush(self._queue, (ev.fire_at, ev.seq, ev))
        self._pending[ev.id] = ev
        return ev.id

    def schedule_in(self, delay: int, callback, target=None, kind=None) -> int:
        return self.schedule(self.now + delay, callback, target, kind)

    def cancel(self, event_id: Optional[int]) -> bool:
        ev = self._pending.pop(event_id, None) if event_id is not None else None
        if ev is None:
            return False
        ev.cancelled = True
        return True

    def pending(self, event_id: int) -> bool:
        return event_id in self._pending

    def run_until(self, t_end: int) -> int:
        if t_end < self.now:
            raise SimulationError(f"run_until({t_end}) is before now {self.now}")
        count = 0
        queue = self._queue
        pending = self._pending
        while queue and queue[0][0] <= t_end:
            ev = heapq.heappop(queue)[2]
            if ev.cancelled:
                continue
            del pending[ev.id]
            self.now = ev.fire_at
            count += 1
            self.fired += 1
            if self.fired > self.event_cap:
                raise EventCapExceeded(f"fired-event cap {self.event_cap} exceeded at t={self.now}")
            if ev.callback is not None:
                ev.callback(ev)
        self.now = t_end
        return count

    # -- clocks -------------------------------------------------------------

    def add_clock(self, node: Any, clock: ClockModel) -> None:
        self.clocks[node] = clock

    def local_time(self, node: Any, global_ticks: Optional[int] = None) -> int:
        try:
            clock = self.clocks[node]
        except KeyError:
            raise KeyError(f"unknown node {node!r}") from None
        return clock.local(self.now if global_ticks is None else global_ticks)

    def rng(self, stream: Any) -> random.Random:
        return rng_stream(self.seed, stream)
