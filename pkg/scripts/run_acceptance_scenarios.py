"""Run every preset scenario through the CLI and print a one-line summary each.

Usage: python scripts/run_acceptance_scenarios.py [--out DIR]
Outputs land in DIR/<config stem>/ (default: out/scenarios).
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from radterrace.cli import execute

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
PLAN = [
    ("front", "front_cubic"),
    ("run", "homogeneous"),
    ("terrace", "invasion_d3"),
    ("terrace", "terrace_triple"),
    ("run", "residual_energy"),
    ("audit", "decay_d3"),
    ("audit", "invasion_audit_d3"),
]


def describe(command: str, path: Path) -> str:
    doc = json.loads(path.read_text()) if path.suffix == ".json" else {}
    if command == "front":
        meta = json.loads(path.with_suffix(".json").read_text())
        return f"speed={meta['speed']:.7f}"
    if command == "terrace":
        return f"q={doc['q']} speeds={[round(c, 5) for c in doc['speeds']]}"
    if command == "run":
        return json.dumps(doc.get("summary", {}))
    if command == "audit":
        lv = doc["levels"]
        return (f"samples={sum(x['samples'] for x in lv)} "
                f"violations={sum(x['violations'] for x in lv)} "
                f"ratios={[round(q, 3) for q in doc['calibration']['ratios']]}")
    return str(path)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("out/scenarios"))
    args = p.parse_args()
    for command, name in PLAN:
        start = time.perf_counter()
        path = execute(command, CONFIGS / f"{name}.cfg", args.out / name)
        print(f"{command:8s} {name:20s} {time.perf_counter() - start:7.1f}s  "
              f"{describe(command, path)}")


if __name__ == "__main__":
    main()
