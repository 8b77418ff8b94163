"""Propagating terraces: detection, fitting and reconstruction of stacked fronts."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .diagnostics.firewall import deviation, speed_estimate
from .fronts import FrontProfile, normalize_front, solve_bistable_front
from .potential import MinimumPoint, PotentialAnalysis, PotentialSpec
from .radial import RadialField, RadialGrid

EPS_FACTORS = (0.1, 0.25, 0.5)
PLATEAU_NODES = 10


class TerraceNotFormedError(RuntimeError):
    pass


class NotStableAtInfinityError(ValueError):
    pass


@dataclass
class Terrace:
    q: int
    minima_chain: list[MinimumPoint]          # m_0 (outer) ... m_q (inner)
    fronts: list[FrontProfile]                # fronts[i-1] joins m_i (left) to m_{i-1} (right)
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    positions: list[np.ndarray] = field(default_factory=list)
    speeds: list[float] = field(default_factory=list)
    speed_stderr: list[float] = field(default_factory=list)

    def position(self, i: int, t: float) -> float:
        """Position r_i(t) of front i (1-based), interpolated in time."""
        return float(np.interp(t, self.times, self.positions[i - 1]))

    def check_invariants(self) -> dict[str, object]:
        vals = [m.value for m in self.minima_chain]
        chain_ok = all(a > b for a, b in zip(vals[:-1], vals[1:]))
        speed_ok = all(c > 0 for c in self.speeds) and all(
            self.speeds[i] >= self.speeds[i + 1] - 2.0 * math.hypot(
                self.speed_stderr[i], self.speed_stderr[i + 1])
            for i in range(len(self.speeds) - 1))
        return {"v_chain_decreasing": chain_ok, "speeds_ordered": speed_ok,
                "separation": self.separation_status()}

    def separation_status(self) -> str:
        """'increasing', 'indeterminate' or 'not increasing' over the last half window."""
        if self.q < 2 or self.times.size < 4:
            return "increasing"
        half = self.times >= self.times[0] + 0.5 * (self.times[-1] - self.times[0])
        status = "increasing"
        for i in range(self.q - 1):
            gap = self.positions[i][half] - self.positions[i + 1][half]
            if np.all(np.diff(gap) > 0):
                continue
            close = abs(self.speeds[i] - self.speeds[i + 1]) <= 2.0 * math.hypot(
                self.speed_stderr[i], self.speed_stderr[i + 1])
            status = "indeterminate" if close and status == "increasing" else "not increasing"
        return status


def reconstruct(terrace: Terrace, grid: RadialGrid, t: float,
                positions: Sequence[float] | None = None) -> RadialField:
    """m_0 + sum_i [phi_i(r - r_i(t)) - m_{i-1}]."""
    r = grid.r
    m0 = np.asarray(terrace.minima_chain[0].location, dtype=float)
    out = np.repeat(m0[:, None], grid.n_nodes, axis=1)
    for i in range(1, terrace.q + 1):
        ri = positions[i - 1] if positions is not None else terrace.position(i, t)
        prev = np.asarray(terrace.minima_chain[i - 1].location, dtype=float)
        out = out + terrace.fronts[i - 1](r - ri) - prev[:, None]
    return RadialField(grid, out, t)


def sup_error(field: RadialField, terrace: Terrace, epsilon: float, t: float | None = None,
              positions: Sequence[float] | None = None) -> float:
    """max over nodes r >= epsilon t of |u(r) - T(r, t)|."""
    return sup_errors(field, terrace, [epsilon], t, positions)[0]


def sup_errors(field: RadialField, terrace: Terrace, epsilons: Sequence[float],
               t: float | None = None, positions: Sequence[float] | None = None) -> list[float]:
    """sup_error for several epsilons sharing one reconstruction."""
    t = field.time if t is None else t
    g = field.grid
    rec = reconstruct(terrace, g, t, positions)
    err = np.sqrt(np.sum((field.values - rec.values) ** 2, axis=0))
    out = []
    for eps in epsilons:
        sel = g.r >= eps * t - 1e-12
        if not sel.any():
            raise ValueError("sup_error window is empty")
        out.append(float(err[sel].max()))
    return out


# ---------------------------------------------------------------------------
# detection


def _labels(field: RadialField, minima: Sequence[MinimumPoint], d_esc: float) -> np.ndarray:
    lab = np.full(field.grid.n_nodes, -1)
    for j, m in enumerate(minima):
        lab[deviation(field, m) <= 0.5 * d_esc] = j
    return lab


def _plateaus(lab: np.ndarray, min_nodes: int) -> list[tuple[int, int, int]]:
    """Runs (start, end, label) of a single minimum label at least min_nodes long."""
    runs = []
    start = 0
    for k in range(1, lab.size + 1):
        if k == lab.size or lab[k] != lab[start]:
            if lab[start] >= 0 and k - start >= min_nodes:
                runs.append((start, k - 1, int(lab[start])))
            start = k
    merged: list[tuple[int, int, int]] = []
    for run in runs:
        if merged and merged[-1][2] == run[2]:
            merged[-1] = (merged[-1][0], run[1], run[2])
        else:
            merged.append(run)
    return merged


def detect_interfaces(field: RadialField, minima: Sequence[MinimumPoint],
                      d_esc: float) -> list[tuple[float, MinimumPoint, MinimumPoint]]:
    """Interfaces between consecutive plateaus, ordered from the outermost inward.

    Each entry is (position, inner minimum, outer minimum); the position is
    the last d_esc-crossing toward the outer plateau's minimum.
    """
    lab = _labels(field, minima, d_esc)
    runs = _plateaus(lab, PLATEAU_NODES + 1)
    if not runs or runs[-1][1] != field.grid.n_nodes - 1:
        raise NotStableAtInfinityError("solution not stable at infinity on the grid")
    r = field.grid.r
    out = []
    for inner, outer in zip(runs[-2::-1], runs[:0:-1]):
        m_in, m_out = minima[inner[2]], minima[outer[2]]
        dist = deviation(field, m_out)
        lo, hi = inner[1], outer[0]
        seg = dist[lo:hi + 1] - d_esc
        idx = np.nonzero(seg[:-1] * seg[1:] <= 0)[0]
        k = lo + (idx[-1] if idx.size else 0)
        out.append((_crossing(r, dist, k, d_esc), m_in, m_out))
    return out


def _crossing(r: np.ndarray, y: np.ndarray, k: int, level: float) -> float:
    """Root of y = level in [r_k, r_{k+1}] from a local cubic through four nodes."""
    d0, d1 = y[k] - level, y[k + 1] - level
    if d0 == d1:
        return float(r[k + 1])
    lin = float(r[k] + d0 / (d0 - d1) * (r[k + 1] - r[k]))
    j = min(max(k - 1, 0), r.size - 4)
    if r.size < 4:
        return lin
    h = r[1] - r[0]
    x = (r[j:j + 4] - r[k]) / h
    coef = np.polyfit(x, y[j:j + 4] - level, 3)
    roots = np.roots(coef)
    roots = roots[(np.abs(roots.imag) < 1e-9) & (roots.real >= -1e-9) & (roots.real <= 1 + 1e-9)].real
    if roots.size == 0:
        return lin
    x0 = (lin - r[k]) / h
    return float(r[k] + h * roots[np.argmin(np.abs(roots - x0))])


# ---------------------------------------------------------------------------
# fitting


@dataclass
class FitReport:
    times: np.ndarray
    epsilons: tuple[float, ...]
    sup_errors: np.ndarray            # (n_times, len(epsilons))
    speed_stderr: list[float]
    checks: dict

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"sup_err_eps{k + 1}" for k in range(len(self.epsilons))])
            for t, row in zip(self.times, self.sup_errors):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    def to_json(self) -> dict:
        return {"epsilons": list(self.epsilons), "speed_stderr": self.speed_stderr,
                "checks": self.checks, "final_sup_errors": self.sup_errors[-1].tolist()}


def _same(a: MinimumPoint, b: MinimumPoint) -> bool:
    return bool(np.allclose(a.location, b.location, atol=1e-6))


def find_front(library: Sequence[FrontProfile], m_minus: MinimumPoint,
               m_plus: MinimumPoint) -> FrontProfile | None:
    for prof in library:
        if _same(prof.m_minus, m_minus) and _same(prof.m_plus, m_plus):
            return prof
    return None


def fit_terrace(fields: Sequence[RadialField], analysis: PotentialAnalysis,
                front_library: list[FrontProfile], spec: PotentialSpec | None = None,
                window: tuple[float, float] | None = None,
                c_bracket: tuple[float, float] = (0.0, 5.0),
                max_speed: float | None = None) -> tuple[Terrace, FitReport]:
    """Fit a terrace to snapshots in ``window`` (default: all of them).

    Interfaces are associated across snapshots in detection order; a jump larger
    than ``max_speed`` times the snapshot spacing means the association failed.
    Missing fronts are solved on demand (needs ``spec``) and appended to the library.
    """
    snaps = [f for f in fields if window is None or window[0] - 1e-9 <= f.time <= window[1] + 1e-9]
    if len(snaps) < 20:
        raise ValueError(f"fit_terrace needs at least 20 snapshots, got {len(snaps)}")
    detected = [detect_interfaces(f, analysis.minima, analysis.d_esc) for f in snaps]
    q = len(detected[0])
    if any(len(d) != q for d in detected):
        raise TerraceNotFormedError("terrace not yet formed; extend t_b")
    chain_key = [tuple(id(x[1]) for x in d) for d in detected]
    if any(k != chain_key[0] for k in chain_key):
        raise TerraceNotFormedError("terrace not yet formed; extend t_b")
    times = np.array([f.time for f in snaps])
    outer_min = analysis.nearest_minimum(snaps[-1].values[:, -1])
    chain = [outer_min] + [d[1] for d in detected[0]]
    fronts = []
    for i in range(1, q + 1):
        prof = find_front(front_library, chain[i], chain[i - 1])
        if prof is None:
            if spec is None:
                raise ValueError("front library lacks a pair and no potential was given")
            prof = normalize_front(solve_bistable_front(spec, analysis, chain[i], chain[i - 1],
                                                        c_bracket), analysis.d_esc)
            front_library.append(prof)
        elif not prof.normalized:
            prof = normalize_front(prof, analysis.d_esc)
        fronts.append(prof)
    positions = [np.array([d[i][0] for d in detected]) for i in range(q)]
    if max_speed is not None:
        for p in positions:
            if np.any(np.abs(np.diff(p)) > max_speed * np.diff(times) + 1e-12):
                raise TerraceNotFormedError("terrace not yet formed; extend t_b")
    half = (times[0] + 0.5 * (times[-1] - times[0]), times[-1])
    speeds, errs = [], []
    for i in range(q):
        c, e = speed_estimate(times, positions[i], half)
        speeds.append(c)
        errs.append(e)
    terrace = Terrace(q, chain, fronts, times, positions, speeds, errs)
    checks = terrace.check_invariants()
    if not checks["v_chain_decreasing"] or not checks["speeds_ordered"]:
        raise TerraceNotFormedError(f"fitted terrace violates its invariants: {checks}")
    if checks["separation"] == "not increasing":
        raise TerraceNotFormedError("front separations do not increase; extend t_b")
    c_min = min(speeds) if speeds else 0.0
    eps = tuple(f * c_min for f in EPS_FACTORS)
    errs_arr = np.array([sup_errors(f, terrace, eps, f.time, [p[k] for p in positions])
                         for k, f in enumerate(snaps)])
    return terrace, FitReport(times, eps, errs_arr, errs, checks)


def export_terrace(terrace: Terrace, report: FitReport, outdir: str | Path) -> Path:
    """Terrace JSON plus per-front position CSVs and the fit-report CSV."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    refs = []
    for i in range(terrace.q):
        p = outdir / f"front_{i + 1}_positions.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "r"])
            for t, x in zip(terrace.times, terrace.positions[i]):
                w.writerow([repr(float(t)), repr(float(x))])
        refs.append(p.name)
    report.write_csv(outdir / "fit_report.csv")
    doc = {
        "q": terrace.q,
        "minima_chain": [m.to_json() for m in terrace.minima_chain],
        "speeds": terrace.speeds,
        "position_series": refs,
        "fit_report": dict(report.to_json(), csv="fit_report.csv"),
    }
    path = outdir / "terrace.json"
    path.write_text(json.dumps(doc, indent=2))
    return path
