"""Scenario assembly and the file-producing experiment runners behind the CLI."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .config import ConfigError, ExperimentConfig
from .diagnostics import (DissipationObserver, EnergyIdentityObserver, EscapeTracker,
                          FirewallConfig, ResidualEnergyObserver, TravelingFrameConfig,
                          audit_escape_implication, audit_firewall_decay, audit_invasion_bound,
                          calibrate_slack, sample_firewall, traveling_frame_series)
from .diagnostics.energy import cauchy_time
from .fronts import (FrontProfile, load_front, normalize_front, save_front,
                     solve_bistable_front)
from .potential import (DEFAULT_BOXES, MinimumPoint, PotentialAnalysis, PotentialSpec,
                        analyze_potential, make_potential)
from .radial import (IntegratorConfig, RadialField, RadialGrid, TrajectoryRecorder, integrate,
                     load_snapshot, make_initial_data, save_snapshot)
from .terrace import export_terrace, fit_terrace

MINIMUM_MATCH_TOL = 1e-3


@dataclass
class Scenario:
    config: ExperimentConfig
    spec: PotentialSpec
    analysis: PotentialAnalysis
    grid: RadialGrid
    integrator: IntegratorConfig
    initial: RadialField
    m_outer: MinimumPoint
    firewall: FirewallConfig | None


def build_potential(cfg: ExperimentConfig) -> tuple[PotentialSpec, PotentialAnalysis]:
    if cfg.potential is None:
        raise ConfigError("potential.name", "missing required key")
    name = cfg.potential.name
    try:
        spec = make_potential(name, **cfg.potential.params)
    except KeyError as exc:
        raise ConfigError("potential.name", str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError("potential.params", str(exc)) from exc
    box = cfg.potential.search_box or DEFAULT_BOXES[name]
    if isinstance(box[0], (int, float)):
        box = [tuple(box)] * spec.n
    try:
        analysis = analyze_potential(spec, [tuple(b) for b in box])
    except ValueError as exc:
        raise ConfigError("potential.search_box", str(exc)) from exc
    return spec, analysis


def match_minimum(analysis: PotentialAnalysis, location, key: str) -> MinimumPoint:
    if location is None:
        raise ConfigError(key, "missing required key")
    x = np.atleast_1d(np.asarray(location, dtype=float))
    if x.size != analysis.n:
        raise ConfigError(key, f"expected {analysis.n} components")
    m = analysis.nearest_minimum(x)
    if np.linalg.norm(m.location - x) > MINIMUM_MATCH_TOL:
        raise ConfigError(key, f"{location!r} is not a local minimum of the potential")
    return m


def firewall_or_none(analysis: PotentialAnalysis, d: int) -> FirewallConfig | None:
    return FirewallConfig.from_analysis(analysis, d) if d >= 2 else None


def solve_front(spec: PotentialSpec, analysis: PotentialAnalysis, m_minus: MinimumPoint,
                m_plus: MinimumPoint, bracket=(0.0, 2.0), normalize: bool = True) -> FrontProfile:
    prof = solve_bistable_front(spec, analysis, m_minus, m_plus, tuple(bracket))
    return normalize_front(prof, analysis.d_esc) if normalize else prof


def build_scenario(cfg: ExperimentConfig, refine: int = 0,
                   potential: tuple[PotentialSpec, PotentialAnalysis] | None = None) -> Scenario:
    """Assemble a scenario; ``refine`` halves dr and dt that many times."""
    cfg.require_run_blocks()
    spec, an = potential or build_potential(cfg)
    grid, integ = cfg.grid, cfg.integrator
    for _ in range(refine):
        grid = RadialGrid(grid.r_max, 2 * (grid.n_nodes - 1) + 1, grid.d)
        integ = replace(integ, dt=0.5 * integ.dt)
    p = cfg.initial.params
    kind = cfg.initial.kind
    try:
        if kind == "front_seed":
            m_minus = match_minimum(an, p.get("m_minus"), "initial.params.m_minus")
            m_outer = match_minimum(an, p.get("m_plus"), "initial.params.m_plus")
            prof = solve_front(spec, an, m_minus, m_outer, p.get("bracket", [0.0, 2.0]))
            field0 = make_initial_data(kind, grid, r0=float(p.get("r0", 0.0)), profile=prof)
        else:
            m_outer = match_minimum(an, p.get("m_outer"), "initial.params.m_outer")
            m_inner = None
            if kind == "plateau":
                m_inner = match_minimum(an, p.get("m_inner"), "initial.params.m_inner").location
            field0 = make_initial_data(kind, grid, m_outer=m_outer.location, m_inner=m_inner,
                                       r0=float(p.get("r0", 0.0)), w=float(p.get("w", 1.0)),
                                       amplitude=p.get("amplitude", 0.0), n=spec.n)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("initial", str(exc)) from exc
    return Scenario(cfg, spec, an, grid, integ, field0, m_outer, firewall_or_none(an, grid.d))


# ---------------------------------------------------------------------------
# running


def _param(cfg: ExperimentConfig, kind: str, name: str, default=None):
    v = cfg.observer_params.get(kind, {}).get(name, default)
    if v is None:
        raise ConfigError(f"observer.{kind}.{name}", "missing required key")
    return v


def residual_speed(cfg: ExperimentConfig) -> float:
    if "c" in cfg.observer_params.get("residual", {}):
        return float(_param(cfg, "residual", "c"))
    return float(_param(cfg, "residual", "c_factor", 0.5)) * float(_param(cfg, "residual", "c_hom"))


@dataclass
class RunResult:
    scenario: Scenario
    final: RadialField
    observers: dict[str, Any]
    recorder: TrajectoryRecorder | None
    post: dict[str, Any] = field(default_factory=dict)


def rho_lattice(cfg: ExperimentConfig, sc: Scenario) -> np.ndarray:
    fw = sc.firewall
    if fw is None:
        raise ConfigError("grid.d", "firewall diagnostics need d >= 2")
    lo = float(_param(cfg, "firewall", "rho_min", fw.r_sc))
    hi = float(_param(cfg, "firewall", "rho_max", 0.95 * sc.grid.r_max))
    step = float(_param(cfg, "firewall", "rho_step", 2.0))
    if lo < fw.r_sc or hi <= lo:
        raise ConfigError("observer.firewall.rho_min", f"need r_sc = {fw.r_sc:g} <= rho_min < rho_max")
    return np.arange(lo, hi + 1e-9, step)


def run_scenario(sc: Scenario, kinds: list[str] | None = None, record: bool = False,
                 extra: tuple = ()) -> RunResult:
    cfg = sc.config
    kinds = list(cfg.observers if kinds is None else kinds)
    obs: dict[str, Any] = {}
    if "tracker" in kinds or "dissipation" in kinds:
        hull = bool(_param(cfg, "tracker", "hull", True))
        obs["tracker"] = EscapeTracker(sc.m_outer, sc.analysis.d_esc, sc.spec,
                                       sc.firewall if hull else None)
    if "energy" in kinds:
        obs["energy"] = EnergyIdentityObserver(sc.spec, sc.m_outer.value, sc.integrator.outer_bc)
    if "residual" in kinds:
        obs["residual"] = ResidualEnergyObserver(sc.spec, sc.m_outer, residual_speed(cfg))
    if "dissipation" in kinds:
        tracker = obs["tracker"]

        def position(t: float) -> float:
            x = np.asarray(tracker.r_Esc, dtype=float)
            ok = np.isfinite(x)
            if not ok.any():
                return math.nan
            return float(np.interp(t, np.asarray(tracker.t)[ok], x[ok]))

        obs["dissipation"] = DissipationObserver(
            sc.spec, position, float(_param(cfg, "dissipation", "c_esc")))
    recorder = TrajectoryRecorder() if record or {"firewall", "frame"} & set(kinds) else None
    callbacks = list(obs.values()) + ([recorder] if recorder is not None else []) + list(extra)
    final = integrate(sc.initial, sc.spec, sc.integrator, callbacks)
    res = RunResult(sc, final, obs, recorder)
    if "firewall" in kinds:
        samples = sample_firewall(recorder.fields, rho_lattice(cfg, sc), sc.firewall, sc.spec,
                                  sc.m_outer)
        res.post["firewall_samples"] = samples
        res.post["firewall"] = audit_firewall_decay(samples, sc.firewall)
    if "frame" in kinds:
        tf = TravelingFrameConfig.from_firewall(
            sc.firewall, float(_param(cfg, "frame", "c")),
            t_init=float(_param(cfg, "frame", "t_init", 0.0)),
            r_init=float(_param(cfg, "frame", "r_init", 2.0 * sc.firewall.r_sc)))
        res.post["frame"] = traveling_frame_series(recorder.fields, tf, sc.spec, sc.m_outer,
                                                   outer_bc=sc.integrator.outer_bc)
    return res


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


def write_observers(res: RunResult, out: Path) -> dict[str, str]:
    paths: dict[str, str] = {}
    o = res.observers
    if "tracker" in o:
        o["tracker"].write_csv(out / "tracker.csv")
        paths["tracker"] = "tracker.csv"
    if "energy" in o:
        e = o["energy"]
        _, mism = e.mismatch("tangent")
        _write_rows(out / "energy.csv", ["t", "E", "D", "flux", "dEdt", "mismatch"],
                    zip(e.t, e.E, e.D, e.flux, e.dEdt, mism))
        paths["energy"] = "energy.csv"
    if "residual" in o:
        r = o["residual"]
        _write_rows(out / "residual.csv", ["t", "c", "residual_energy"],
                    ((t, r.c, v) for t, v in zip(r.t, r.values)))
        paths["residual"] = "residual.csv"
    if "dissipation" in o:
        dd = o["dissipation"]
        _write_rows(out / "dissipation.csv", ["t", "delta_dissip"], zip(dd.t, dd.values))
        paths["dissipation"] = "dissipation.csv"
    if "firewall" in res.post:
        s = res.post["firewall_samples"]
        res.post["firewall"].write_csv(out / "firewall.csv", s.f0[1:-1], s.escape[1:-1])
        paths["firewall"] = "firewall.csv"
    if "frame" in res.post:
        res.post["frame"].write_csv(out / "frame.csv")
        paths["frame"] = "frame.csv"
    return paths


def summarize(res: RunResult) -> dict[str, Any]:
    out: dict[str, Any] = {"t_final": res.final.time}
    o = res.observers
    if "tracker" in o:
        tr = o["tracker"]
        t = np.asarray(tr.t)
        try:
            c, err = tr.speed((0.5 * t[-1], t[-1]))
            out["escape_speed"] = {"slope": c, "stderr": err, "window": [0.5 * t[-1], t[-1]]}
        except ValueError:
            pass
    if "energy" in o:
        t, m = o["energy"].mismatch("tangent")
        out["energy_max_mismatch_after_t0"] = float(np.max(m[t > t[0]])) if t.size > 1 else None
    if "residual" in o:
        r = o["residual"]
        tstar = cauchy_time(r.t, r.values)
        out["residual"] = {"c": r.c, "cauchy_time": None if math.isnan(tstar) else tstar,
                           "last": r.values[-1] if r.values else None}
    if "firewall" in res.post:
        rep = res.post["firewall"]
        out["firewall"] = {"samples": rep.n_samples, "min_margin": rep.min_margin}
    return out


def analysis_document(an: PotentialAnalysis) -> dict:
    return an.to_json()


def cmd_analyze(cfg: ExperimentConfig, out: Path) -> Path:
    _, an = build_potential(cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "analysis.json"
    path.write_text(json.dumps(analysis_document(an), indent=2))
    return path


def cmd_front(cfg: ExperimentConfig, out: Path, m_minus=None, m_plus=None, bracket=None) -> Path:
    spec, an = build_potential(cfg)
    mm = match_minimum(an, m_minus if m_minus is not None else cfg.get("front.m_minus"),
                       "front.m_minus")
    mp = match_minimum(an, m_plus if m_plus is not None else cfg.get("front.m_plus"),
                       "front.m_plus")
    bracket = bracket if bracket is not None else cfg.get("front.bracket", [0.0, 2.0])
    prof = solve_front(spec, an, mm, mp, bracket, bool(cfg.get("front.normalize", True)))
    out.mkdir(parents=True, exist_ok=True)
    save_front(prof, out / "front.csv")
    return out / "front.csv"


def cmd_run(cfg: ExperimentConfig, out: Path) -> Path:
    sc = build_scenario(cfg)
    every = int(cfg.get("output.snapshot_every", 10))
    out.mkdir(parents=True, exist_ok=True)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    snaps: list[str] = []

    def snapshotter(fl: RadialField) -> None:
        if every > 0 and snapshotter.count % every == 0:
            name = f"snapshots/snap_{len(snaps):05d}.csv"
            save_snapshot(fl, out / name)
            snaps.append(name)
        snapshotter.count += 1
    snapshotter.count = 0

    res = run_scenario(sc, extra=(snapshotter,))
    (out / "analysis.json").write_text(json.dumps(analysis_document(sc.analysis), indent=2))
    manifest = {
        "config": cfg.entries,
        "analysis": "analysis.json",
        "snapshots": snaps,
        "observers": write_observers(res, out),
        "summary": summarize(res),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_manifest_fields(manifest_path: Path) -> list[RadialField]:
    doc = json.loads(manifest_path.read_text())
    return [load_snapshot(manifest_path.parent / s) for s in doc["snapshots"]]


def cmd_terrace(cfg: ExperimentConfig, out: Path, manifest: Path | None = None) -> Path:
    spec, an = build_potential(cfg)
    if manifest is None:
        manifest = cmd_run(cfg, out)
    fields = load_manifest_fields(Path(manifest))
    if not fields:
        raise ConfigError("output.snapshot_every", "manifest lists no snapshots")
    window = cfg.get("terrace.window")
    if window is None:
        t_end = fields[-1].time
        window = (0.5 * t_end, t_end)
    library = [load_front(p) for p in cfg.get("terrace.fronts", [])]
    fw = firewall_or_none(an, fields[0].grid.d)
    terrace, report = fit_terrace(fields, an, library, spec, tuple(window),
                                  tuple(cfg.get("terrace.bracket", [0.0, 5.0])),
                                  max_speed=fw.c_noesc if fw is not None else None)
    return export_terrace(terrace, report, out)


# ---------------------------------------------------------------------------
# audits


@dataclass
class AuditLevel:
    dr: float
    dt: float
    result: RunResult


def run_audit_levels(cfg: ExperimentConfig, levels: int) -> list[AuditLevel]:
    pot = build_potential(cfg)
    out = []
    for k in range(levels):
        sc = build_scenario(cfg, refine=k, potential=pot)
        res = run_scenario(sc, ["tracker", "firewall"])
        out.append(AuditLevel(sc.grid.dr, sc.integrator.dt, res))
    return out


def audit_document(levels: list[AuditLevel], safety: float = 2.0) -> dict[str, Any]:
    """Slack calibration, firewall violations, escape implication and invasion bound."""
    reports = [lv.result.post["firewall"] for lv in levels]
    fw = levels[0].result.scenario.firewall
    cal = calibrate_slack(reports, safety) if len(reports) > 1 else None
    doc: dict[str, Any] = {"levels": []}
    for k, lv in enumerate(levels):
        rep = reports[k]
        # level k's slack comes from its change to level k+1; the finest level
        # takes the coarser estimate scaled by the second-order factor 1/4
        if cal is None:
            slack = 0.0
        elif k < len(cal.slacks):
            slack = cal.slacks[k]
        else:
            slack = cal.slacks[-1] / 4.0
        samples = lv.result.post["firewall_samples"]
        imp = audit_escape_implication(samples, fw, slack=lv.dr)
        tr = lv.result.observers["tracker"]
        inv = audit_invasion_bound(tr.t, tr.r_Esc, fw.c_noesc)
        doc["levels"].append({
            "dr": lv.dr, "dt": lv.dt, "samples": rep.n_samples, "min_margin": rep.min_margin,
            "slack": slack, "violations": rep.with_slack(slack).n_violations,
            "implication": {"checked": imp.n_checked, "triggered": imp.n_triggered,
                            "counterexamples": imp.n_counterexamples},
            "invasion_bound": {"pairs": inv.n_pairs, "skipped": inv.n_skipped,
                               "violations": inv.n_violations},
        })
    if cal:
        doc["calibration"] = {"errors": cal.errors, "ratios": cal.ratios, "slacks": cal.slacks,
                              "safety": cal.safety}
    return doc


def cmd_audit(cfg: ExperimentConfig, out: Path) -> Path:
    levels = run_audit_levels(cfg, int(cfg.get("audit.levels", 3)))
    doc = audit_document(levels, float(cfg.get("audit.safety", 2.0)))
    doc["config"] = cfg.entries
    out.mkdir(parents=True, exist_ok=True)
    finest = levels[-1].result
    s = finest.post["firewall_samples"]
    finest.post["firewall"].write_csv(out / "firewall.csv", s.f0[1:-1], s.escape[1:-1])
    path = out / "audit.json"
    path.write_text(json.dumps(doc, indent=2))
    return path
