"""Golden traces and ledgers shipped with the package."""

from __future__ import annotations

import json
from importlib import resources

from .energy import EnergyLedger, RadioStateProfile
from .kernel import SECOND, seconds
from .trace import Trace, loads

CONTIKIMAC_SNIFFER = "contikimac_sniffer.trace"
TSCH_ROOT_SERIAL = "tsch_root_serial.trace"
FORMATION_ENERGY = "formation_energy.json"


def _text(name: str) -> str:
    return resources.files("llnsim.data.fixtures").joinpath(name).read_text(encoding="utf-8")


def load_trace(name: str) -> Trace:
    return loads(_text(name))


def contikimac_trace() -> Trace:
    return load_trace(CONTIKIMAC_SNIFFER)


def tsch_trace() -> Trace:
    return load_trace(TSCH_ROOT_SERIAL)


def energy_reference() -> dict:
    return json.loads(_text(FORMATION_ENERGY))


def reference_ledgers(horizon: int = 300 * SECOND) -> dict[int, EnergyLedger]:
    """Ledgers whose 1 s duty pattern averages to each node's reported power."""
    ref = energy_reference()
    period = seconds(ref["period_s"])
    busy, idle = ref["states"]
    out = {}
    for row in ref["nodes"]:
        ledger = EnergyLedger(row["node"])
        on = row["rx_us_per_period"]
        for t in range(0, horizon, period):
            ledger.record_state(busy, t, t + on)
            ledger.record_state(idle, t + on, t + period)
        out[row["node"]] = ledger
    return out


def reference_profile() -> RadioStateProfile:
    return RadioStateProfile(supply_voltage=energy_reference()["supply_voltage"])
