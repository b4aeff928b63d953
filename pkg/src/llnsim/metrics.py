"""Joining time, convergence time and formation energy from trace logs.

Two vantage points are supported:

``sniffer``
    Over-the-air capture.  A node's DAOs are the DAO frames it originates;
    joining is measured from the start of the nearest preceding root DIO
    multicast to the end of the node's first DAO.

``root_serial``
    The root's own log.  A DAO "arrives" when the root installs the route
    (a ``route-add`` held by the root); joining is measured from the root's
    most recent DIO multicast before that arrival.
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .energy import EnergyLedger, EnergySample, RadioStateProfile, energy
from .kernel import SECOND
from .medium import BROADCAST
from .trace import END, ROUTE_ADD, ROUTE_REMOVE, TOPOLOGY_KINDS, Trace, TraceEvent

SNIFFER = "sniffer"
ROOT_SERIAL = "root_serial"
PERSPECTIVES = (SNIFFER, ROOT_SERIAL)
DEFAULT_STEADY_WINDOW = 120 * SECOND

OK = "ok"
ABSENT = "absent"
INCONCLUSIVE = "inconclusive"


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class JoinRecord:
    node: int
    perspective: str
    status: str = OK
    reference: Optional[int] = None
    joined_at: Optional[int] = None

    @property
    def joining_time(self) -> Optional[int]:
        if self.status != OK:
            return None
        return self.joined_at - self.reference


@dataclass(frozen=True)
class ConvergenceRecord:
    node: int
    status: str = OK
    first_dao_end: Optional[int] = None
    last_dao_end: Optional[int] = None
    steady_window: int = DEFAULT_STEADY_WINDOW

    @property
    def convergence_time(self) -> Optional[int]:
        if self.status != OK:
            return None
        return self.last_dao_end - self.first_dao_end


def _check_perspective(perspective: str) -> None:
    if perspective not in PERSPECTIVES:
        raise MetricsError(f"unknown perspective {perspective!r}")


def root_dios(trace: Trace) -> list[TraceEvent]:
    root = trace.root
    return sorted((e for e in trace.events
                   if e.kind == "DIO" and e.src == root and e.dst == BROADCAST),
                  key=lambda e: e.start)


def _latest_before(dios: Sequence[TraceEvent], t: int) -> Optional[TraceEvent]:
    best = None
    for d in dios:
        if d.start <= t:
            best = d
        else:
            break
    return best


def _own_daos(trace: Trace, node: int) -> list[TraceEvent]:
    return sorted((e for e in trace.events
                   if e.kind == "DAO" and e.src == node and e.subject == node),
                  key=lambda e: (e.end, e.start))


def _root_routes(trace: Trace, node: int) -> list[TraceEvent]:
    root = trace.root
    return sorted((e for e in trace.events
                   if e.kind in TOPOLOGY_KINDS and e.dst == root and e.src == node),
                  key=lambda e: e.start)


def joining_time(trace: Trace, node: int, perspective: str = SNIFFER) -> JoinRecord:
    _check_perspective(perspective)
    dios = root_dios(trace)
    if perspective == SNIFFER:
        daos = _own_daos(trace, node)
        if not daos:
            return JoinRecord(node, perspective, ABSENT)
        first = daos[0]
        anchor_t, joined = first.start, first.end
    else:
        adds = [e for e in _root_routes(trace, node) if e.kind == ROUTE_ADD]
        if not adds:
            return JoinRecord(node, perspective, ABSENT)
        anchor_t = joined = adds[0].start
    ref = _latest_before(dios, anchor_t)
    if ref is None:
        return JoinRecord(node, perspective, ABSENT)
    return JoinRecord(node, perspective, OK, ref.start, joined)


def _change_times(trace: Trace, node: int, perspective: str) -> tuple[list[int], list[int]]:
    """(DAO instance times, topology-change times) for ``node``."""
    if perspective == ROOT_SERIAL:
        events = _root_routes(trace, node)
        daos = [e.start for e in events if e.kind == ROUTE_ADD]
        return daos, [e.start for e in events]
    own = sorted((e for e in trace.events
                  if e.kind in ("DAO", "NO_PATH_DAO") and e.src == node and e.subject == node),
                 key=lambda e: (e.end, e.start))
    daos, changes = [], []
    current_via: object = object()
    for e in own:
        if e.kind == "NO_PATH_DAO":
            changes.append(e.end)
            current_via = None
            continue
        daos.append(e.end)
        if e.via != current_via:
            changes.append(e.end)
            current_via = e.via
    return daos, changes


def convergence_time(trace: Trace, node: int, steady_window: int = DEFAULT_STEADY_WINDOW,
                     perspective: str = SNIFFER) -> ConvergenceRecord:
    _check_perspective(perspective)
    daos, changes = _change_times(trace, node, perspective)
    if not daos:
        return ConvergenceRecord(node, ABSENT, steady_window=steady_window)
    end = trace.end_time
    first = daos[0]
    for t in daos:
        if t + steady_window > end:
            break
        if not any(t < c <= t + steady_window for c in changes):
            return ConvergenceRecord(node, OK, first, t, steady_window)
    return ConvergenceRecord(node, INCONCLUSIVE, first, None, steady_window)


# -- root-relative report -----------------------------------------------------

@dataclass
class ReportRow:
    kind: str  # "reference", "route", "remove"
    time: int
    cumulative: float
    node: Optional[int] = None
    dio_rel: Optional[float] = None
    dao_rel: Optional[float] = None
    target: Optional[int] = None
    via: Optional[int] = None
    dao_via: Optional[int] = None
    _order: tuple = field(default=(), repr=False)

    def route_text(self) -> str:
        if self.kind == "remove":
            return f"Remove route {self.target} --> via {self.via}"
        if self.kind == "route":
            return f"{self.target} --> via {self.via}"
        return ""


@dataclass
class RootRelativeReport:
    root: int
    rows: list[ReportRow]

    def format(self) -> str:
        def s(v):
            return "" if v is None else f"{v:.2f} s"

        header = ("NodeID --> Type", "Child NodeID", "DIO", "DAO (--> via parent)",
                  "DAG Route Advertised", "Cumulative Elapsed Time")
        table = [header]
        for r in self.rows:
            if r.kind == "reference":
                table.append((f"{self.root} (root) --> DIO", "", "", "", "", s(r.cumulative)))
            elif r.kind == "remove":
                table.append((f"{r.target} --> NO-PATH DAO", "", "", "", r.route_text(), s(r.cumulative)))
            else:
                dao = s(r.dao_rel)
                if r.dio_rel is None and r.dao_via is not None:
                    dao += f" (--> via {r.dao_via})"
                table.append(("", str(r.node), s(r.dio_rel), dao, r.route_text(), s(r.cumulative)))
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        lines = []
        for i, row in enumerate(table):
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "node", "dio_rel_s", "dao_rel_s", "target", "via", "cumulative_s"])
        for r in self.rows:
            w.writerow([r.kind, "" if r.node is None else r.node,
                        "" if r.dio_rel is None else f"{r.dio_rel:.2f}",
                        "" if r.dao_rel is None else f"{r.dao_rel:.2f}",
                        "" if r.target is None else r.target,
                        "" if r.via is None else r.via, f"{r.cumulative:.2f}"])
        return buf.getvalue()


def _compatible(route: TraceEvent, msg: TraceEvent, root: int) -> bool:
    if route.src != msg.src:
        return False
    if route.dst == root:
        return route.via == msg.via or (route.via == msg.src and msg.via == root)
    # route held by the parent the message was sent to
    return route.dst == msg.via and route.via == msg.src


def _match(msg: TraceEvent, routes: list[TraceEvent], used: set[int], root: int) -> Optional[int]:
    fallback = None
    for i, r in enumerate(routes):
        if i in used or not _compatible(r, msg, root):
            continue
        if r.dst == root:
            return i
        if fallback is None:
            fallback = i
    return fallback


def root_relative_report(trace: Trace) -> RootRelativeReport:
    root = trace.root
    dios = root_dios(trace)
    zero = dios[0].start if dios else 0
    indexed = list(enumerate(trace.events))

    def sec(t: int) -> float:
        return t / SECOND

    rows: list[ReportRow] = [
        ReportRow("reference", d.start, sec(d.start - zero), _order=(d.start, 0, d.start, i))
        for i, d in indexed if d.kind == "DIO" and d.src == root and d.dst == BROADCAST
    ]
    child_dios = [(i, e) for i, e in indexed if e.kind == "DIO" and e.src != root and e.dst == root]
    used_dios: set[int] = set()
    adds = sorted((e for e in trace.events if e.kind == ROUTE_ADD), key=lambda e: e.start)
    removes = sorted((e for e in trace.events if e.kind == ROUTE_REMOVE), key=lambda e: e.start)
    used_adds: set[int] = set()
    used_removes: set[int] = set()

    messages = sorted(((i, e) for i, e in indexed
                       if e.kind in ("DAO", "NO_PATH_DAO") and e.src != root and e.subject == e.src),
                      key=lambda p: (p[1].end, p[0]))
    for i, m in messages:
        ref = _latest_before(dios, m.end)
        ref_t = ref.start if ref is not None else zero
        if m.kind == "NO_PATH_DAO":
            j = _match(m, removes, used_removes, root)
            if j is not None:
                used_removes.add(j)
                r = removes[j]
                via = r.via if r.dst == root else m.via
                t = r.start
            else:
                via, t = m.via, m.end
            rows.append(ReportRow("remove", t, sec(t - zero), node=m.src, target=m.src, via=via,
                                  _order=(t, 1, m.end, i)))
            continue
        j = _match(m, adds, used_adds, root)
        if j is not None:
            used_adds.add(j)
            r = adds[j]
            via = r.via if r.dst == root else m.via
            t = r.start
        else:
            via, t = m.via, m.end
        dio_rel = None
        for k, d in reversed(child_dios):
            if k in used_dios or d.src != m.src:
                continue
            if ref_t <= d.end <= m.end:
                used_dios.add(k)
                dio_rel = sec(d.end - ref_t)
                break
        rows.append(ReportRow("route", t, sec(t - zero), node=m.src, dio_rel=dio_rel,
                              dao_rel=sec(m.end - ref_t), target=m.src, via=via, dao_via=m.via,
                              _order=(t, 1, m.end, i)))
    # root routes no DAO frame accounts for (pure serial logs)
    for j, r in enumerate(adds):
        if j in used_adds or r.dst != root:
            continue
        ref = _latest_before(dios, r.start)
        ref_t = ref.start if ref is not None else zero
        rows.append(ReportRow("route", r.start, sec(r.start - zero), node=r.src,
                              dao_rel=sec(r.start - ref_t), target=r.src, via=r.via,
                              _order=(r.start, 1, r.start, -1)))
    rows.sort(key=lambda r: r._order)
    return RootRelativeReport(root, rows)


# -- energy -------------------------------------------------------------------

def formation_energy(ledger: EnergyLedger, join: JoinRecord, conv: ConvergenceRecord,
                     profile: RadioStateProfile = RadioStateProfile()) -> EnergySample:
    if join.status != OK or conv.status != OK:
        raise MetricsError(f"node {join.node}: formation window needs a joined, converged node")
    window = (join.reference, conv.last_dao_end)
    if window[1] <= window[0]:
        raise MetricsError(f"node {join.node}: formation window {window} is empty")
    return energy(ledger, window, profile)


# -- run analysis and comparison ----------------------------------------------

@dataclass
class NodeMetrics:
    node: int
    join: JoinRecord
    conv: ConvergenceRecord
    formation: Optional[EnergySample] = None

    @property
    def status(self) -> str:
        if self.join.status != OK:
            return self.join.status
        return self.conv.status

    @property
    def formation_time(self) -> Optional[int]:
        if self.status != OK:
            return None
        return self.join.joining_time + self.conv.convergence_time


@dataclass
class RunMetrics:
    protocol: str
    perspective: str
    nodes: dict[int, NodeMetrics]
    seed: Optional[int] = None
    source: str = ""

    @property
    def inconclusive(self) -> bool:
        return any(m.status == INCONCLUSIVE for m in self.nodes.values())


def default_perspective(protocol: str) -> str:
    return ROOT_SERIAL if protocol.startswith("tsch") else SNIFFER


def analyze(trace: Trace, perspective: Optional[str] = None,
            steady_window: int = DEFAULT_STEADY_WINDOW,
            ledgers: Optional[dict[int, EnergyLedger]] = None,
            profile: RadioStateProfile = RadioStateProfile(),
            nodes: Optional[Iterable[int]] = None) -> RunMetrics:
    protocol = trace.meta.get("protocol", "unknown")
    perspective = perspective or trace.meta.get("perspective") or default_perspective(protocol)
    root = trace.root
    if nodes is None:
        if "nodes" in trace.meta:
            nodes = [int(x) for x in trace.meta["nodes"].split(",") if x]
        else:
            nodes = trace.nodes()
    out = {}
    for n in (n for n in dict.fromkeys(nodes) if n != root):
        j = joining_time(trace, n, perspective)
        c = convergence_time(trace, n, steady_window, perspective)
        nm = NodeMetrics(n, j, c)
        if ledgers is not None and nm.status == OK and n in ledgers:
            if nm.conv.last_dao_end > nm.join.reference:
                nm.formation = formation_energy(ledgers[n], j, c, profile)
        out[n] = nm
    seed = trace.meta.get("seed")
    return RunMetrics(protocol, perspective, out, int(seed) if seed is not None else None)


@dataclass
class ProtocolSummary:
    protocol: str
    runs: int
    join_s: dict[int, Optional[float]]
    conv_s: dict[int, Optional[float]]
    status: dict[int, str]

    def formation_s(self, node: int) -> Optional[float]:
        j, c = self.join_s.get(node), self.conv_s.get(node)
        return None if j is None or c is None else j + c

    @property
    def mean_join_s(self) -> Optional[float]:
        vals = [v for v in self.join_s.values() if v is not None]
        return statistics.fmean(vals) if vals else None

    @property
    def mean_formation_s(self) -> Optional[float]:
        vals = [self.formation_s(n) for n in self.join_s]
        vals = [v for v in vals if v is not None]
        return statistics.fmean(vals) if vals else None


@dataclass
class ComparisonReport:
    summaries: dict[str, ProtocolSummary]
    nodes: list[int]
    formation_ratio: Optional[float] = None

    def format(self) -> str:
        protos = list(self.summaries)
        header = ["Child Node ID"]
        for p in protos:
            header += [f"{p} Joining (s)", f"{p} Convergence (s)"]
        table = [header]
        for n in self.nodes:
            row = [str(n)]
            for p in protos:
                s = self.summaries[p]
                for v in (s.join_s.get(n), s.conv_s.get(n)):
                    row.append(f"{v:.2f}" if v is not None else s.status.get(n, ABSENT))
            table.append(row)
        widths = [max(len(r[i]) for r in table) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table]
        lines.insert(1, "  ".join("-" * w for w in widths))
        for p in protos:
            m = self.summaries[p].mean_formation_s
            lines.append(f"mean joining+convergence [{p}]: "
                         + (f"{m:.4f} s" if m is not None else "n/a"))
        if self.formation_ratio is not None:
            lines.append(f"formation_ratio ({protos[-1]} / {protos[0]}): {self.formation_ratio:.3f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["protocol", "node_id", "joining_s", "convergence_s", "status"])
        for p, s in self.summaries.items():
            for n in self.nodes:
                j, c = s.join_s.get(n), s.conv_s.get(n)
                w.writerow([p, n, "" if j is None else f"{j:.2f}", "" if c is None else f"{c:.2f}",
                            s.status.get(n, ABSENT)])
        if self.formation_ratio is not None:
            w.writerow(["formation_ratio", "", "", "", f"{self.formation_ratio:.4f}"])
        return buf.getvalue()


def summarize(protocol: str, runs: Sequence[RunMetrics]) -> ProtocolSummary:
    nodes = sorted({n for r in runs for n in r.nodes})
    join_s, conv_s, status = {}, {}, {}
    for n in nodes:
        js, cs, states = [], [], []
        for r in runs:
            m = r.nodes.get(n)
            if m is None:
                continue
            states.append(m.status)
            if m.status == OK:
                js.append(m.join.joining_time / SECOND)
                cs.append(m.conv.convergence_time / SECOND)
        join_s[n] = statistics.fmean(js) if js else None
        conv_s[n] = statistics.fmean(cs) if cs else None
        status[n] = OK if js else (INCONCLUSIVE if INCONCLUSIVE in states else ABSENT)
    return ProtocolSummary(protocol, len(runs), join_s, conv_s, status)


def compare(runs: Sequence[RunMetrics], require_pair: bool = False) -> ComparisonReport:
    by_proto: dict[str, list[RunMetrics]] = {}
    for r in runs:
        by_proto.setdefault(r.protocol, []).append(r)
    if not by_proto:
        raise MetricsError("no runs to compare")
    node_sets = {p: frozenset(n for r in rs for n in r.nodes) for p, rs in by_proto.items()}
    if len(set(node_sets.values())) > 1:
        detail = "; ".join(f"{p}: {sorted(s)}" for p, s in node_sets.items())
        raise MetricsError(f"mismatched node sets: {detail}")
    if require_pair and len(by_proto) < 2:
        raise MetricsError("a comparison needs runs from two protocols")
    order = sorted(by_proto, key=lambda p: (p.startswith("tsch"), p))
    summaries = {p: summarize(p, by_proto[p]) for p in order}
    nodes = sorted(next(iter(node_sets.values())), key=_first_seen_order(runs))
    ratio = None
    if len(order) >= 2:
        base, other = summaries[order[0]], summaries[order[-1]]
        b, o = base.mean_formation_s, other.mean_formation_s
        if b and o is not None:
            ratio = o / b
    return ComparisonReport(summaries, nodes, ratio)


def _first_seen_order(runs: Sequence[RunMetrics]):
    order = {}
    for r in runs:
        for n in r.nodes:
            order.setdefault(n, len(order))
    return lambda n: order[n]


def metrics_to_csv(run: RunMetrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "perspective", "status", "reference_s", "joined_at_s", "joining_s",
                "last_dao_s", "convergence_s", "formation_mJ"])
    for n, m in run.nodes.items():
        j, c = m.join, m.conv

        def f(t):
            return "" if t is None else f"{t / SECOND:.6f}"

        w.writerow([n, run.perspective, m.status, f(j.reference), f(j.joined_at), f(j.joining_time),
                    f(c.last_dao_end), f(c.convergence_time),
                    "" if m.formation is None else f"{m.formation.energy_mJ:.6f}"])
    return buf.getvalue()
