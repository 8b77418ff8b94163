"""Flat key-value experiment configuration.

Grammar, one entry per line::

    # full-line comment
    section.key = <value>

Values are parsed as JSON (numbers, booleans, lists, quoted strings); anything
that is not valid JSON is kept as a bare string. Keys are dotted lowercase
identifiers and may not repeat. Trailing comments are not supported.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .radial import INITIAL_KINDS, OUTER_BCS, SCHEMES, IntegratorConfig, RadialGrid

KEY_RE = re.compile(r"^[a-z_][a-z0-9_]*(\.[a-z0-9_]+)*$")
OBSERVER_KINDS = ("tracker", "energy", "residual", "firewall", "dissipation", "frame")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def parse_config(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not KEY_RE.match(key):
            raise ConfigError(key, "malformed key")
        if key in out:
            raise ConfigError(key, "duplicate key")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def format_config(entries: dict[str, Any]) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in entries.items())


def _sub(entries: dict[str, Any], prefix: str) -> dict[str, Any]:
    p = prefix + "."
    return {k[len(p):]: v for k, v in entries.items() if k.startswith(p)}


def _num(entries: dict, key: str, default=None, kind=float):
    if key not in entries:
        if default is None:
            raise ConfigError(key, "missing required key")
        return default
    v = entries[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(key, f"expected an integer, got {v!r}")
    return kind(v)


def _str(entries: dict, key: str, default: str | None = None, choices=None) -> str:
    if key not in entries:
        if default is None:
            raise ConfigError(key, "missing required key")
        return default
    v = entries[key]
    if not isinstance(v, str):
        raise ConfigError(key, f"expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(key, f"expected one of {list(choices)}, got {v!r}")
    return v


@dataclass
class PotentialBlock:
    name: str
    params: dict[str, float]
    search_box: Any = None


@dataclass
class InitialBlock:
    kind: str
    params: dict[str, Any]


@dataclass
class ExperimentConfig:
    entries: dict[str, Any]
    potential: PotentialBlock | None    # None only for sweep configs
    grid: RadialGrid | None
    integrator: IntegratorConfig | None
    initial: InitialBlock | None
    observers: list[str] = field(default_factory=list)
    observer_params: dict[str, dict[str, Any]] = field(default_factory=dict)
    source: Path | None = None

    def section(self, prefix: str) -> dict[str, Any]:
        return _sub(self.entries, prefix)

    def get(self, key: str, default=None):
        return self.entries.get(key, default)

    def require_run_blocks(self) -> None:
        for name in ("grid", "integrator", "initial"):
            if getattr(self, name) is None:
                raise ConfigError(f"{name}.*", "block required for this command")


def _grid(entries: dict) -> RadialGrid | None:
    if not _sub(entries, "grid"):
        return None
    r_max = _num(entries, "grid.r_max")
    d = _num(entries, "grid.d", 3, int)
    if "grid.n_nodes" in entries and "grid.dr" in entries:
        raise ConfigError("grid.dr", "give either grid.n_nodes or grid.dr, not both")
    try:
        if "grid.dr" in entries:
            return RadialGrid.from_spacing(r_max, _num(entries, "grid.dr"), d)
        return RadialGrid(r_max, _num(entries, "grid.n_nodes", kind=int), d)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from exc


def _integrator(entries: dict, grid: RadialGrid | None) -> IntegratorConfig | None:
    if not _sub(entries, "integrator"):
        return None
    outer_value = entries.get("integrator.outer_value")
    if outer_value is not None:
        outer_value = tuple(float(x) for x in (outer_value if isinstance(outer_value, list)
                                               else [outer_value]))
    try:
        cfg = IntegratorConfig(
            dt=_num(entries, "integrator.dt"),
            t_end=_num(entries, "integrator.t_end"),
            scheme=_str(entries, "integrator.scheme", "imex_cn", SCHEMES),
            outer_bc=_str(entries, "integrator.outer_bc", "neumann_zero", OUTER_BCS),
            outer_value=outer_value,
            observe_every=_num(entries, "integrator.observe_every", 50, int),
        )
        if grid is not None:
            cfg.validate(grid)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("integrator", str(exc)) from exc
    return cfg


def build_config(entries: dict[str, Any], source: Path | None = None) -> ExperimentConfig:
    """Validate entries into an ExperimentConfig; raises ConfigError naming the key."""
    pot = None
    if "sweep.configs" not in entries:
        pot = PotentialBlock(_str(entries, "potential.name"), {},
                             entries.get("potential.search_box"))
        for k, v in _sub(entries, "potential.params").items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"potential.params.{k}", "expected a number")
            pot.params[k] = float(v)
    grid = _grid(entries)
    integ = _integrator(entries, grid)
    initial = None
    if "initial.kind" in entries:
        initial = InitialBlock(_str(entries, "initial.kind", choices=INITIAL_KINDS),
                               _sub(entries, "initial.params"))
    observers = entries.get("observers", [])
    if not isinstance(observers, list) or any(o not in OBSERVER_KINDS for o in observers):
        raise ConfigError("observers", f"expected a list drawn from {list(OBSERVER_KINDS)}")
    params = {o: _sub(entries, f"observer.{o}") for o in OBSERVER_KINDS}
    return ExperimentConfig(entries, pot, grid, integ, initial, list(observers), params, source)


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from exc
    entries = parse_config(text)
    if overrides:
        entries.update(overrides)
    return build_config(entries, path)
