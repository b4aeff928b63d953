"""Radio state-time accounting and energy arithmetic.

Currents are in mA, times in integer microsecond ticks, power in mW and
energy in mJ.  ``energy_mJ = avg_power_mW * window_s`` holds by construction.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .kernel import SECOND

STATES = ("tx", "rx_listen", "cca", "sleep", "cpu_active", "off")


class LedgerError(ValueError):
    pass


@dataclass(frozen=True)
class RadioStateProfile:
    tx: float = 24.0
    rx_listen: float = 20.0
    cca: float = 20.0
    sleep: float = 0.02
    cpu_active: float = 13.0
    off: float = 0.0
    supply_voltage: float = 3.3

    def __post_init__(self):
        for name in STATES:
            if getattr(self, name) < 0:
                raise ValueError(f"current for {name} must be >= 0")
        if not self.tx >= self.rx_listen >= self.sleep:
            raise ValueError("profile must satisfy tx >= rx_listen >= sleep")
        if self.supply_voltage <= 0:
            raise ValueError("supply_voltage must be positive")

    def current(self, state: str) -> float:
        if state not in STATES:
            raise KeyError(f"unknown radio state {state!r}")
        return getattr(self, state)


@dataclass(frozen=True)
class ShuntConfig:
    resistance: float = 0.5
    gain: float = 51.0
    adc_full_scale: float = 3.3
    adc_bits: int = 12

    def __post_init__(self):
        if self.resistance <= 0 or self.gain <= 0:
            raise ValueError("resistance and gain must be positive")

    @property
    def lsb(self) -> float:
        return self.adc_full_scale / (2 ** self.adc_bits)


@dataclass(frozen=True)
class EnergySample:
    node: int
    window: tuple[int, int]
    avg_current_mA: float
    avg_power_mW: float
    energy_mJ: float

    @property
    def duration_s(self) -> float:
        return (self.window[1] - self.window[0]) / SECOND


@dataclass
class Segment:
    state: str
    start: int
    end: int


@dataclass
class EnergyLedger:
    """Per-node list of non-overlapping radio-state segments."""

    node: int
    boot: int = 0
    segments: list[Segment] = field(default_factory=list)
    _state: Optional[str] = field(default=None, repr=False)
    _since: int = field(default=0, repr=False)

    @property
    def covered_until(self) -> int:
        return self.segments[-1].end if self.segments else self.boot

    def record_state(self, state: str, start: int, end: int) -> None:
        if state not in STATES:
            raise LedgerError(f"unknown radio state {state!r}")
        if end <= start:
            raise LedgerError(f"segment [{start}, {end}) must have end > start")
        if start < self.covered_until:
            raise LedgerError(f"segment starting at {start} overlaps ledger end {self.covered_until}")
        last = self.segments[-1] if self.segments else None
        if last is not None and last.state == state and last.end == start:
            last.end = end
        else:
            self.segments.append(Segment(state, start, end))

    # incremental interface used by the medium: the state holds until the next change
    def transition(self, state: str, now: int) -> None:
        if self._state is None:
            self._state, self._since = state, now
            if now > self.covered_until:
                self.record_state("off", self.covered_until, now)
            return
        if now > self._since:
            self.record_state(self._state, self._since, now)
            self._since = now
        elif now < self._since:
            raise LedgerError(f"state change at {now} precedes {self._since}")
        self._state = state

    def close(self, now: int) -> None:
        """End the ledger at ``now``; changes a MAC pre-announced past it are cut off."""
        if self._state is None:
            if now > self.covered_until:
                self.record_state("off", self.covered_until, now)
            return
        if self._since >= now:
            while self.segments and self.segments[-1].start >= now:
                self.segments.pop()
            if self.segments and self.segments[-1].end > now:
                self.segments[-1].end = now
        elif now > self._since:
            self.record_state(self._state, self._since, now)
        self._since = now

    def time_in_states(self, start: int, end: int) -> dict[str, int]:
        if end <= start:
            raise LedgerError("window must have end > start")
        if not self.segments or start < self.segments[0].start or end > self.covered_until:
            raise LedgerError(f"window [{start}, {end}) outside ledger coverage")
        totals: dict[str, int] = {}
        covered = 0
        for seg in self._overlapping(start, end):
            overlap = min(seg.end, end) - max(seg.start, start)
            totals[seg.state] = totals.get(seg.state, 0) + overlap
            covered += overlap
        if covered != end - start:
            raise LedgerError(f"ledger has a gap inside [{start}, {end})")
        return totals

    def _overlapping(self, start: int, end: int) -> Iterable[Segment]:
        segs = self.segments
        lo, hi = 0, len(segs)
        while lo < hi:
            mid = (lo + hi) // 2
            if segs[mid].end <= start:
                lo = mid + 1
            else:
                hi = mid
        for seg in segs[lo:]:
            if seg.start >= end:
                break
            yield seg

    def gaps(self, start: int, end: int) -> list[tuple[int, int]]:
        """Uncovered sub-intervals of ``[start, end)``, plus overlaps as negative spans."""
        problems = []
        cursor = start
        for seg in self.segments:
            if seg.end <= start:
                continue
            if seg.start >= end:
                break
            if seg.start != cursor:
                problems.append((cursor, seg.start))
            cursor = seg.end
        if cursor < end:
            problems.append((cursor, end))
        return problems


def average_current(ledger: EnergyLedger, window: tuple[int, int], profile: RadioStateProfile) -> float:
    start, end = window
    totals = ledger.time_in_states(start, end)
    charge = sum(profile.current(state) * t for state, t in totals.items())
    return charge / (end - start)


def energy(ledger: EnergyLedger, window: tuple[int, int], profile: RadioStateProfile) -> EnergySample:
    avg_mA = average_current(ledger, window, profile)
    power = avg_mA * profile.supply_voltage
    duration_s = (window[1] - window[0]) / SECOND
    return EnergySample(ledger.node, window, avg_mA, power, power * duration_s)


def sample_from_power(node: int, window: tuple[int, int], avg_power_mW: float,
                      supply_voltage: float = 3.3) -> EnergySample:
    duration_s = (window[1] - window[0]) / SECOND
    if duration_s <= 0:
        raise LedgerError("window must have end > start")
    return EnergySample(node, window, avg_power_mW / supply_voltage, avg_power_mW,
                        avg_power_mW * duration_s)


def periodic_samples(ledger: EnergyLedger, start: int, end: int, profile: RadioStateProfile,
                     period: int = SECOND) -> list[EnergySample]:
    """One sample per ``period``, the way the monitor mote reports averages."""
    out = []
    t = start
    while t + period <= end:
        out.append(energy(ledger, (t, t + period), profile))
        t += period
    return out


# -- shunt-sense emulation --------------------------------------------------

@dataclass(frozen=True)
class AdcReading:
    volts: float
    code: int
    saturated: bool


def shunt_adc_voltage(current_mA: float, cfg: ShuntConfig = ShuntConfig()) -> AdcReading:
    if current_mA < 0:
        raise ValueError("current must be >= 0")
    volts = current_mA / 1000.0 * cfg.resistance * cfg.gain
    max_code = 2 ** cfg.adc_bits - 1
    code = int(volts / cfg.lsb)
    saturated = volts > cfg.adc_full_scale
    return AdcReading(volts, min(code, max_code), saturated)


def current_from_adc(reading: AdcReading | int, cfg: ShuntConfig = ShuntConfig()) -> float:
    code = reading.code if isinstance(reading, AdcReading) else int(reading)
    volts = code * cfg.lsb
    return volts / (cfg.resistance * cfg.gain) * 1000.0


def current_lsb_mA(cfg: ShuntConfig = ShuntConfig()) -> float:
    return cfg.lsb / (cfg.resistance * cfg.gain) * 1000.0


# -- CSV --------------------------------------------------------------------

CSV_HEADER = ("node_id", "window_start_s", "window_end_s", "avg_mA", "avg_mW", "mJ")


def samples_to_csv(samples: Iterable[EnergySample]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in samples:
        writer.writerow([s.node, f"{s.window[0] / SECOND:.6f}", f"{s.window[1] / SECOND:.6f}",
                         f"{s.avg_current_mA:.6f}", f"{s.avg_power_mW:.6f}", f"{s.energy_mJ:.6f}"])
    return buf.getvalue()
