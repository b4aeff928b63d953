"""Scenario files: JSON with a versioned ``schema`` field.

User files are validated against a strict schema (unknown keys are
errors), then deep-merged over the built-in defaults and turned into the
typed configs the simulator modules take.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .contikimac import RdcConfig
from .energy import RadioStateProfile
from .kernel import MAX_DRIFT_PPM, seconds
from .medium import CHANNELS_24GHZ, Topology
from .rpl import RplConfig, TrickleConfig
from .tsch import (CommonShared, HoppingSequence, OrchestraRuleSet, ReceiverBased, SenderBased,
                   TschConfig, identity_hash)

SCHEMA_VERSION = 1
CONTIKIMAC = "contikimac"
TSCH = "tsch_orchestra"
PROTOCOLS = (CONTIKIMAC, TSCH)


class ScenarioError(ValueError):
    """Invalid scenario; the message names the offending key path."""


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int = {"type": "integer"}
_posint = {"type": "integer", "minimum": 1}
_prob = {"type": "number", "minimum": 0, "maximum": 1}
_channel = {"type": "integer", "minimum": CHANNELS_24GHZ[0], "maximum": CHANNELS_24GHZ[-1]}

_node = _obj({"id": _int, "x": _num, "y": _num, "root": {"type": "boolean"},
              "boot_s": _nonneg,
              "drift_ppm": {"type": "integer", "minimum": -MAX_DRIFT_PPM, "maximum": MAX_DRIFT_PPM}},
             ("id", "x", "y"))
_link = _obj({"from": _int, "to": _int, "p": _prob}, ("from", "to", "p"))
_topology = _obj({"radio_range": _pos, "link_probability": _prob,
                  "nodes": {"type": "array", "items": _node, "minItems": 1},
                  "links": {"type": "array", "items": _link}})

_rule = _obj({"type": {"enum": ["common_shared", "receiver_based", "sender_based"]},
              "length": _posint, "slot_offset": {"type": "integer", "minimum": 0},
              "channel_offset": {"type": "integer", "minimum": 0}}, ("type",))

SCHEMA = _obj({
    "schema": {"const": SCHEMA_VERSION},
    "name": {"type": "string"},
    "protocol": {"enum": list(PROTOCOLS)},
    "mop": {"enum": [0, 1, 2]},
    "duration_s": _pos,
    "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
    "topology": {"oneOf": [{"type": "string"}, _topology]},
    "boot": _obj({"leaves_s": _nonneg, "root_delay_s": _nonneg}),
    "clock": _obj({"drift_ppm_max": {"type": "integer", "minimum": 0, "maximum": MAX_DRIFT_PPM}}),
    "rpl": _obj({
        "trickle": _obj({"i_min_ms": _pos, "doublings": {"type": "integer", "minimum": 0}, "k": _posint}),
        "min_hop_rank_increase": _posint, "etx_init": {"type": "number", "minimum": 1},
        "etx_alpha": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "hysteresis": {"type": "integer", "minimum": 0},
        "dis_period_s": _pos, "dis_jitter_s": _nonneg, "dao_lifetime_s": _pos,
        "dao_retries": {"type": "integer", "minimum": 0}, "dao_retry_backoff_s": _nonneg,
    }),
    "mac": _obj({
        "contikimac": _obj({"cycle_ms": _pos, "cca_duration_us": _posint, "cca_gap_us": _posint,
                            "strobe_gap_us": _posint, "max_unicast_retries": _posint,
                            "channel": _channel}),
        "tsch": _obj({
            "hopping_sequence": {"type": "array", "items": _channel, "minItems": 1, "uniqueItems": True},
            "slot_duration_ms": _pos, "guard_time_us": _posint, "tx_offset_us": _posint,
            "ack_delay_us": _posint, "eb_period_s": _pos, "scan_dwell_s": {"type": ["number", "null"]},
            "keepalive_timeout_s": {"type": ["number", "null"]},
            "max_retries": {"type": "integer", "minimum": 0},
            "min_be": {"type": "integer", "minimum": 0}, "max_be": {"type": "integer", "minimum": 0},
            "eb_requires_dodag": {"type": "boolean"},
            "orchestra": _obj({"rules": {"type": "array", "items": _rule, "minItems": 1},
                               "hash": {"enum": ["id_mod_length"]}}),
        }),
    }),
    "energy": _obj({"supply_voltage": _pos, "tx_mA": _nonneg, "rx_listen_mA": _nonneg,
                    "cca_mA": _nonneg, "sleep_mA": _nonneg, "cpu_active_mA": _nonneg}),
    "metrics": _obj({"steady_window_s": _pos, "perspective": {"enum": ["sniffer", "root_serial"]}}),
}, ("schema", "topology"))

DEFAULTS: dict[str, Any] = {
    "schema": SCHEMA_VERSION,
    "name": "scenario",
    "protocol": CONTIKIMAC,
    "mop": 2,
    "duration_s": 600,
    "seeds": [1],
    "boot": {"leaves_s": 0, "root_delay_s": 60},
    "clock": {"drift_ppm_max": 20},
    "rpl": {"trickle": {"i_min_ms": 4096, "doublings": 8, "k": 10},
            "min_hop_rank_increase": 256, "etx_init": 1.5, "etx_alpha": 0.8, "hysteresis": 128,
            "dis_period_s": 30, "dis_jitter_s": 3, "dao_lifetime_s": 600, "dao_retries": 3,
            "dao_retry_backoff_s": 2},
    "mac": {
        "contikimac": {"cycle_ms": 125, "cca_duration_us": 128, "cca_gap_us": 500,
                       "strobe_gap_us": 400, "max_unicast_retries": 1, "channel": 26},
        "tsch": {"hopping_sequence": [15, 20, 25, 26], "slot_duration_ms": 10, "guard_time_us": 1000,
                 "tx_offset_us": 2120, "ack_delay_us": 1000, "eb_period_s": 16, "scan_dwell_s": None,
                 "keepalive_timeout_s": 12, "max_retries": 8, "min_be": 1, "max_be": 5,
                 "eb_requires_dodag": True,
                 "orchestra": {"rules": [{"type": "common_shared", "length": 7},
                                         {"type": "receiver_based", "length": 7}],
                               "hash": "id_mod_length"}},
    },
    "energy": {"supply_voltage": 3.3, "tx_mA": 24.0, "rx_listen_mA": 20.0, "cca_mA": 20.0,
               "sleep_mA": 0.02, "cpu_active_mA": 13.0},
    "metrics": {"steady_window_s": 120},
}

PERSPECTIVE_FOR = {CONTIKIMAC: "sniffer", TSCH: "root_serial"}


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_raw(raw: Any) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: [str(p) for p in e.absolute_path])
    if not errors:
        return
    err = errors[0]
    # oneOf failures hide the useful message one level down
    if err.context:
        useful = [e for e in err.context if e.validator != "type"] or err.context
        err = max(useful, key=lambda e: len(list(e.absolute_path)))
    raise ScenarioError(f"{_path(err.absolute_path)}: {err.message}")


@dataclass
class NodeSpec:
    id: int
    x: float
    y: float
    root: bool
    boot: int
    drift_ppm: Optional[int]


@dataclass
class Scenario:
    name: str
    protocol: str
    mop: int
    duration: int
    seeds: list[int]
    nodes: list[NodeSpec]
    topology: Topology
    drift_ppm_max: int
    rpl: RplConfig
    rdc: RdcConfig
    tsch: TschConfig
    profile: RadioStateProfile
    steady_window: int
    perspective: str
    config: dict

    @property
    def root(self) -> int:
        return next(n.id for n in self.nodes if n.root)

    @property
    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    @property
    def hash(self) -> str:
        canon = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_protocol(self, protocol: str) -> "Scenario":
        cfg = copy.deepcopy(self.config)
        cfg["protocol"] = protocol
        cfg["metrics"].pop("perspective", None)
        return from_dict(cfg)


def _rules(spec: list[dict]) -> tuple:
    kinds = {"common_shared": CommonShared, "receiver_based": ReceiverBased, "sender_based": SenderBased}
    out = []
    for i, r in enumerate(spec):
        kw = {k: v for k, v in r.items() if k != "type"}
        cls = kinds[r["type"]]
        try:
            out.append(cls(**kw))
        except TypeError:
            raise ScenarioError(f"$.mac.tsch.orchestra.rules[{i}]: key not valid for {r['type']}") from None
    return tuple(out)


def _build(cfg: dict) -> Scenario:
    topo = cfg["topology"]
    if "nodes" not in topo:
        raise ScenarioError("$.topology: missing nodes")
    ids = [n["id"] for n in topo["nodes"]]
    if len(set(ids)) != len(ids):
        raise ScenarioError("$.topology.nodes: node ids must be unique")
    roots = [n["id"] for n in topo["nodes"] if n.get("root")]
    if len(roots) != 1:
        raise ScenarioError(f"$.topology.nodes: exactly one root required, found {len(roots)}")
    if "radio_range" not in topo:
        raise ScenarioError("$.topology.radio_range: required")
    boot = cfg["boot"]
    nodes = []
    for n in topo["nodes"]:
        default = boot["root_delay_s"] if n.get("root") else boot["leaves_s"]
        nodes.append(NodeSpec(n["id"], float(n["x"]), float(n["y"]), bool(n.get("root", False)),
                              seconds(n.get("boot_s", default)), n.get("drift_ppm")))
    p = topo.get("link_probability", 1.0)
    overrides = {}
    positions = {n.id: (n.x, n.y) for n in nodes}
    try:
        topology = Topology.from_positions(positions, topo["radio_range"])
        if p < 1.0:
            overrides = {k: p for k in topology.links}
        for i, link in enumerate(topo.get("links", [])):
            a, b = link["from"], link["to"]
            if a not in positions or b not in positions:
                raise ScenarioError(f"$.topology.links[{i}]: unknown node")
            overrides[(a, b)] = link["p"]
        if overrides:
            topology = Topology.from_positions(positions, topo["radio_range"], overrides)
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"$.topology: {exc}") from None

    r = cfg["rpl"]
    c = cfg["mac"]["contikimac"]
    t = cfg["mac"]["tsch"]
    e = cfg["energy"]
    try:
        rpl = RplConfig(
            mop=cfg["mop"], min_hop_rank_increase=r["min_hop_rank_increase"], etx_init=r["etx_init"],
            etx_alpha=r["etx_alpha"], hysteresis=r["hysteresis"],
            trickle=TrickleConfig(seconds(r["trickle"]["i_min_ms"] / 1000), r["trickle"]["doublings"],
                                  r["trickle"]["k"]),
            dis_period=seconds(r["dis_period_s"]), dis_jitter=seconds(r["dis_jitter_s"]),
            dao_lifetime=seconds(r["dao_lifetime_s"]), dao_retries=r["dao_retries"],
            dao_retry_backoff=seconds(r["dao_retry_backoff_s"]))
    except ValueError as exc:
        raise ScenarioError(f"$.rpl: {exc}") from None
    try:
        rdc = RdcConfig(cycle=seconds(c["cycle_ms"] / 1000), cca_duration=c["cca_duration_us"],
                        cca_gap=c["cca_gap_us"], strobe_gap=c["strobe_gap_us"],
                        max_unicast_retries=c["max_unicast_retries"], channel=c["channel"])
    except ValueError as exc:
        raise ScenarioError(f"$.mac.contikimac: {exc}") from None
    try:
        tsch = TschConfig(
            hopping=HoppingSequence(tuple(t["hopping_sequence"])),
            slot_duration=seconds(t["slot_duration_ms"] / 1000), guard_time=t["guard_time_us"],
            tx_offset=t["tx_offset_us"], ack_delay=t["ack_delay_us"], eb_period=seconds(t["eb_period_s"]),
            scan_dwell=None if t["scan_dwell_s"] is None else seconds(t["scan_dwell_s"]),
            keepalive_timeout=None if t["keepalive_timeout_s"] is None else seconds(t["keepalive_timeout_s"]),
            max_retries=t["max_retries"], min_be=t["min_be"], max_be=t["max_be"],
            eb_requires_dodag=t["eb_requires_dodag"],
            rules=OrchestraRuleSet(_rules(t["orchestra"]["rules"]), identity_hash))
        if tsch.tx_offset + tsch.guard_time >= tsch.slot_duration:
            raise ValueError("tx_offset + guard_time must fit in the slot")
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"$.mac.tsch: {exc}") from None
    try:
        profile = RadioStateProfile(tx=e["tx_mA"], rx_listen=e["rx_listen_mA"], cca=e["cca_mA"],
                                    sleep=e["sleep_mA"], cpu_active=e["cpu_active_mA"],
                                    supply_voltage=e["supply_voltage"])
    except ValueError as exc:
        raise ScenarioError(f"$.energy: {exc}") from None
    perspective = cfg["metrics"].get("perspective") or PERSPECTIVE_FOR[cfg["protocol"]]
    return Scenario(cfg["name"], cfg["protocol"], cfg["mop"], seconds(cfg["duration_s"]), list(cfg["seeds"]),
                    nodes, topology, cfg["clock"]["drift_ppm_max"], rpl, rdc, tsch, profile,
                    seconds(cfg["metrics"]["steady_window_s"]), perspective, cfg)


def from_dict(raw: Any, base_dir: Optional[Path] = None) -> Scenario:
    validate_raw(raw)
    raw = copy.deepcopy(raw)
    if isinstance(raw["topology"], str):
        ref = Path(raw["topology"])
        if not ref.is_absolute() and base_dir is not None:
            ref = base_dir / ref
        try:
            topo = json.loads(ref.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"$.topology: cannot read {ref}: {exc}") from None
        try:
            jsonschema.validate(topo, _topology)
        except jsonschema.ValidationError as exc:
            raise ScenarioError(f"{ref}: {_path(exc.absolute_path)}: {exc.message}") from None
        raw["topology"] = topo
    cfg = _deep_merge(DEFAULTS, raw)
    return _build(cfg)


def loads(text: str, base_dir: Optional[Path] = None) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc}") from None
    return from_dict(raw, base_dir)


def load(path: Path | str) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    return loads(text, path.parent)


def builtin(name: str) -> Scenario:
    """One of the shipped example scenarios, e.g. ``"fig7"``."""
    res = resources.files("llnsim.data.scenarios").joinpath(f"{name}.json")
    return loads(res.read_text(encoding="utf-8"))


def builtin_names() -> list[str]:
    folder = resources.files("llnsim.data.scenarios")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))
