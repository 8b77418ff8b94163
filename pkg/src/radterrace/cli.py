"""Command-line entry point: ``radterrace <command> --config FILE --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 solver bracket/convergence
error, 4 runtime instability.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, load_config
from .experiment import cmd_analyze, cmd_audit, cmd_front, cmd_run, cmd_terrace
from .fronts import BracketError
from .radial import InstabilityError, ObserverError
from .terrace import NotStableAtInfinityError, TerraceNotFormedError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_RUNTIME = 0, 2, 3, 4
COMMANDS = ("analyze", "front", "run", "terrace", "sweep", "audit")


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"not valid JSON: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS)
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS)
    common.add_argument("--observe-every", type=int, default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="radterrace", parents=[common],
                                description="Radial reaction-diffusion fronts and terraces.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="potential analysis JSON")
    f = sub.add_parser("front", parents=[common], help="solve a bistable front")
    f.add_argument("--m-minus", type=_json_arg, default=None)
    f.add_argument("--m-plus", type=_json_arg, default=None)
    f.add_argument("--bracket", type=float, nargs=2, default=None)
    sub.add_parser("run", parents=[common], help="simulate and write observer CSVs")
    t = sub.add_parser("terrace", parents=[common], help="fit a terrace to a run")
    t.add_argument("--manifest", type=Path, default=None)
    sub.add_parser("sweep", parents=[common], help="run several configs concurrently")
    sub.add_parser("audit", parents=[common], help="lemma audits with slack calibration")
    return p


def execute(command: str, config: Path, out: Path, observe_every: int | None = None,
            **extra) -> Path:
    overrides = {"integrator.observe_every": observe_every} if observe_every else None
    cfg = load_config(config, overrides)
    if command == "analyze":
        return cmd_analyze(cfg, out)
    if command == "front":
        return cmd_front(cfg, out, extra.get("m_minus"), extra.get("m_plus"), extra.get("bracket"))
    if command == "run":
        return cmd_run(cfg, out)
    if command == "terrace":
        return cmd_terrace(cfg, out, extra.get("manifest"))
    if command == "audit":
        return cmd_audit(cfg, out)
    if command == "sweep":
        return run_sweep(cfg, out, observe_every)
    raise ConfigError("command", f"unknown command {command!r}")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (BracketError, NotImplementedError, TerraceNotFormedError,
                        NotStableAtInfinityError)):
        return EXIT_SOLVER
    if isinstance(exc, (InstabilityError, ObserverError, FloatingPointError)):
        return EXIT_RUNTIME
    raise exc


def _sweep_job(args: tuple) -> tuple[str, int, str]:
    command, config, out, observe_every = args
    try:
        path = execute(command, config, out, observe_every)
        return str(config), EXIT_OK, str(path)
    except Exception as exc:  # noqa: BLE001 - reported per job
        return str(config), exit_code(exc), str(exc)


def run_sweep(cfg, out: Path, observe_every: int | None) -> Path:
    """Run ``sweep.configs`` (paths relative to the sweep file) into out/<stem>/."""
    configs = cfg.get("sweep.configs")
    if not isinstance(configs, list) or not configs:
        raise ConfigError("sweep.configs", "expected a non-empty list of config paths")
    command = cfg.get("sweep.command", "run")
    if command not in COMMANDS or command == "sweep":
        raise ConfigError("sweep.command", f"cannot sweep {command!r}")
    base = cfg.source.parent if cfg.source is not None else Path(".")
    jobs = [(command, base / c, out / Path(c).stem, observe_every) for c in configs]
    stems = [j[2].name for j in jobs]
    if len(set(stems)) != len(stems):
        raise ConfigError("sweep.configs", "config names must have distinct stems")
    workers = int(cfg.get("sweep.workers", min(4, len(jobs))))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_sweep_job, jobs))
    out.mkdir(parents=True, exist_ok=True)
    doc = [{"config": c, "exit_code": code, "result": msg} for c, code, msg in results]
    path = out / "sweep.json"
    path.write_text(json.dumps(doc, indent=2))
    worst = max(code for _, code, _ in results)
    if worst:
        raise SweepFailed(worst, path)
    return path


class SweepFailed(RuntimeError):
    def __init__(self, code: int, path: Path):
        super().__init__(f"at least one sweep job failed; see {path}")
        self.code = code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = getattr(args, "config", None)
    out = getattr(args, "out", None)
    if config is None:
        print("error: --config: missing required flag", file=sys.stderr)
        return EXIT_CONFIG
    if out is None:
        out = Path("out") / args.command
    extra = {k: getattr(args, k) for k in ("m_minus", "m_plus", "bracket", "manifest")
             if hasattr(args, k)}
    try:
        path = execute(args.command, config, out, getattr(args, "observe_every", None), **extra)
    except SweepFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
