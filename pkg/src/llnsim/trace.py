"""Line-oriented trace log.

One event per line::

    start_us end_us kind src dst [via [target]]

``dst`` is ``*`` for broadcasts, ``-`` marks an absent optional field.
Lines starting with ``#`` are header comments of the form ``# key value``
(``root``, ``protocol``, ``perspective``, ``seed``, ...).  Topology changes
use the kinds ``route-add`` / ``route-remove`` with ``src`` = route target,
``dst`` = node holding the route and ``via`` = next hop; they have zero
duration.  ``END`` marks the end of the capture.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .medium import BROADCAST

ROUTE_ADD = "route-add"
ROUTE_REMOVE = "route-remove"
END = "END"
TOPOLOGY_KINDS = frozenset({ROUTE_ADD, ROUTE_REMOVE})
FRAME_KINDS = frozenset({"DIS", "DIO", "DAO", "DAO_ACK", "NO_PATH_DAO", "EB", "DATA", "ACK"})


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    start: int
    end: int
    kind: str
    src: int
    dst: int
    via: Optional[int] = None
    target: Optional[int] = None

    def __post_init__(self):
        if self.end < self.start:
            raise TraceFormatError(f"event ends before it starts: {self}")
        if self.kind in TOPOLOGY_KINDS and self.end != self.start:
            raise TraceFormatError(f"topology change must have zero duration: {self}")

    @property
    def subject(self) -> int:
        """Node the event is about: route target, or DAO originator."""
        return self.target if self.target is not None else self.src

    def to_line(self) -> str:
        parts = [str(self.start), str(self.end), self.kind, str(self.src),
                 "*" if self.dst == BROADCAST else str(self.dst)]
        if self.via is not None or self.target is not None:
            parts.append("-" if self.via is None else str(self.via))
        if self.target is not None:
            parts.append(str(self.target))
        return " ".join(parts)


@dataclass
class Trace:
    events: list[TraceEvent] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def root(self) -> int:
        try:
            return int(self.meta["root"])
        except KeyError:
            raise TraceFormatError("trace header lacks '# root <id>'") from None

    @property
    def end_time(self) -> int:
        ends = [e.end for e in self.events if e.kind == END]
        if ends:
            return max(ends)
        return max((e.end for e in self.events), default=0)

    def nodes(self) -> list[int]:
        seen = set()
        for e in self.events:
            if e.kind == END:
                continue
            seen.add(e.src)
            if e.kind in TOPOLOGY_KINDS:
                seen.add(e.dst)
        return sorted(seen)

    def append(self, event: TraceEvent) -> None:
        self.events.append(event)

    def sorted(self) -> "Trace":
        return Trace(sorted(self.events, key=lambda e: (e.start, e.end)), dict(self.meta))

    def dumps(self) -> str:
        lines = [f"# {k} {v}" for k, v in self.meta.items()]
        lines.extend(e.to_line() for e in self.events)
        return "\n".join(lines) + "\n"

    def write(self, path: Path | str) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _opt(token: str) -> Optional[int]:
    return None if token == "-" else int(token)


def parse_line(line: str) -> TraceEvent:
    parts = line.split()
    if not 5 <= len(parts) <= 7:
        raise TraceFormatError(f"expected 5-7 fields, got {len(parts)}: {line!r}")
    try:
        start, end = int(parts[0]), int(parts[1])
        kind = parts[2]
        src = int(parts[3])
        dst = BROADCAST if parts[4] == "*" else int(parts[4])
        via = _opt(parts[5]) if len(parts) > 5 else None
        target = _opt(parts[6]) if len(parts) > 6 else None
    except ValueError as exc:
        raise TraceFormatError(f"bad field in {line!r}: {exc}") from None
    if kind not in FRAME_KINDS and kind not in TOPOLOGY_KINDS and kind != END:
        raise TraceFormatError(f"unknown event kind {kind!r}")
    return TraceEvent(start, end, kind, src, dst, via, target)


def parse(lines: Iterable[str]) -> Trace:
    trace = Trace()
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip().split(None, 1)
            if body:
                trace.meta[body[0]] = body[1] if len(body) > 1 else ""
            continue
        trace.events.append(parse_line(line))
    return trace


def loads(text: str) -> Trace:
    return parse(text.splitlines())


def read(path: Path | str) -> Trace:
    with open(path, encoding="utf-8") as fh:
        return parse(fh)


def iter_kind(trace: Trace, *kinds: str) -> Iterator[TraceEvent]:
    wanted = set(kinds)
    return (e for e in trace.events if e.kind in wanted)
