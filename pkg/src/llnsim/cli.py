"""Command line: ``llnsim run | report | validate``.

Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 metrics inconclusive (some node never reached a steady state in time).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import scenario as scenario_mod
from .energy import periodic_samples, samples_to_csv
from .metrics import MetricsError, RunMetrics, analyze, compare, metrics_to_csv
from .network import simulate
from .scenario import Scenario, ScenarioError
from .trace import TraceFormatError, read

log = logging.getLogger("llnsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_INCONCLUSIVE = 0, 1, 2, 3
OUT_ENV = "LLNSIM_OUT"
MANIFEST = "artifact.json"


@dataclass
class RunArtifact:
    scenario_hash: str
    scenario_name: str
    protocol: str
    seed: int
    trace: str
    energy_csv: str
    metrics_csv: str
    inconclusive: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"1..20"`` or ``"1,4,9"``."""
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ValueError(f"bad seed list {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise ValueError(f"bad seed list {text!r}")
    return seeds


def load_scenario(ref: str) -> Scenario:
    """A scenario file path, or the name of a shipped example such as ``fig7``."""
    path = Path(ref)
    if path.exists():
        return scenario_mod.load(path)
    if ref in scenario_mod.builtin_names():
        return scenario_mod.builtin(ref)
    raise ScenarioError(f"no scenario file or built-in scenario named {ref!r}")


def run_one(sc: Scenario, seed: int, out_dir: Path) -> RunArtifact:
    result = simulate(sc, seed)
    run_dir = out_dir / f"{sc.name}-{sc.hash}" / f"seed-{seed:04d}"
    run_dir.mkdir(parents=True, exist_ok=True)
    trace_path = run_dir / "trace.log"
    energy_path = run_dir / "energy.csv"
    metrics_path = run_dir / "metrics.csv"
    result.trace.write(trace_path)
    samples = []
    for node in sc.node_ids:
        samples.extend(periodic_samples(result.ledgers[node], 0, sc.duration, sc.profile))
    energy_path.write_text(samples_to_csv(samples), encoding="utf-8")
    metrics = result.metrics()
    metrics_path.write_text(metrics_to_csv(metrics), encoding="utf-8")
    art = RunArtifact(sc.hash, sc.name, sc.protocol, seed, str(trace_path), str(energy_path),
                      str(metrics_path), metrics.inconclusive)
    (run_dir / MANIFEST).write_text(art.to_json(), encoding="utf-8")
    return art


def _run_job(args: tuple) -> RunArtifact:
    raw, seed, out_dir = args
    return run_one(scenario_mod.from_dict(raw), seed, Path(out_dir))


def run(sc: Scenario, out_dir: Path, seeds: Optional[Sequence[int]] = None, jobs: int = 1) -> list[RunArtifact]:
    seeds = list(seeds if seeds is not None else sc.seeds)
    if jobs > 1 and len(seeds) > 1:
        # scenario files may reference a topology file; pass the resolved config
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_job, [(sc.config, s, str(out_dir)) for s in seeds]))
    return [run_one(sc, s, out_dir) for s in seeds]


def _load_run(ref: str) -> RunMetrics:
    path = Path(ref)
    if path.is_dir():
        path = path / MANIFEST
    if path.name == MANIFEST or path.suffix == ".json":
        art = json.loads(path.read_text(encoding="utf-8"))
        trace = read(art["trace"])
    else:
        trace = read(path)
    return analyze(trace)


def _cmd_run(ns) -> int:
    sc = load_scenario(ns.scenario)
    if ns.protocol:
        sc = sc.with_protocol(ns.protocol)
    seeds = parse_seeds(ns.seeds) if ns.seeds else None
    out = Path(ns.out or os.environ.get(OUT_ENV) or "runs")
    arts = run(sc, out, seeds, ns.jobs)
    for a in arts:
        print(f"seed {a.seed}: {Path(a.trace).parent}")
    if any(a.inconclusive for a in arts):
        log.warning("some nodes did not settle within the run; metrics are inconclusive")
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _cmd_report(ns) -> int:
    runs = [_load_run(ref) for ref in ns.artifacts]
    report = compare(runs, require_pair=ns.compare)
    sys.stdout.write(report.format())
    if ns.csv:
        Path(ns.csv).write_text(report.to_csv(), encoding="utf-8")
    return EXIT_INCONCLUSIVE if any(r.inconclusive for r in runs) else EXIT_OK


def _cmd_validate(ns) -> int:
    sc = load_scenario(ns.scenario)
    print(f"ok: {sc.name} ({sc.protocol}, mop {sc.mop}, {len(sc.nodes)} nodes, root {sc.root}, "
          f"{sc.duration / 1e6:g} s, seeds {sc.seeds}) hash {sc.hash}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="llnsim", description="RPL over ContikiMAC / TSCH-Orchestra simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario for each seed")
    r.add_argument("scenario", help="scenario JSON file or built-in name (fig6, fig7)")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")
    r.add_argument("--seeds", help="N, N..M or a comma list; overrides the scenario's seeds")
    r.add_argument("--protocol", choices=scenario_mod.PROTOCOLS, help="override the scenario's protocol")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="joining/convergence summary from run artifacts")
    rep.add_argument("artifacts", nargs="+", help="artifact.json files, run directories or trace logs")
    rep.add_argument("--compare", action="store_true", help="compare protocols and print formation_ratio")
    rep.add_argument("--csv", help="also write the table as CSV")
    rep.set_defaults(func=_cmd_report)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return ns.func(ns)
    except (ScenarioError, ValueError) as exc:
        if isinstance(exc, (MetricsError, TraceFormatError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
