"""Laboratory-frame firewall F0, escape sets and escape points.

All quantities are measured relative to a reference minimum m: the state is
shifted to u - m and the potential to V - V(m) internally.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..potential import MinimumPoint, PotentialAnalysis, PotentialSpec
from ..radial import RadialField, radial_derivative

NEG_INF = -math.inf


@dataclass(frozen=True)
class FirewallConfig:
    d: int
    kappa0: float
    r_sc: float
    nu_f0: float
    k_f0: float
    delta_esc: float
    hull_L: float
    c_noesc: float
    w_en0: float
    d_esc: float
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("firewall weights need d >= 2")
        for name in ("kappa0", "r_sc", "nu_f0", "k_f0", "delta_esc", "hull_L", "c_noesc"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        failed = [k for k, ok in self.inequalities().items() if not ok]
        if failed:
            raise ValueError(f"firewall constants violate: {', '.join(failed)}")

    @classmethod
    def from_analysis(cls, an: PotentialAnalysis, d: int) -> "FirewallConfig":
        lmin = an.lambda_min
        kappa0 = min(0.5, lmin / 8.0)
        r_sc = max(2.0 * (d - 1), 8.0 * (d - 1) / lmin)
        delta = an.d_esc * math.sqrt(min(an.w_en0 / 2.0, 0.25) / (kappa0 + 1.0))
        L = math.log(16.0 * an.k_f0 / (an.nu_f0 * delta ** 2 * kappa0)) / kappa0
        c_noesc = 8.0 * an.k_f0 * L / (kappa0 * delta ** 2)
        return cls(d, kappa0, r_sc, an.nu_f0, an.k_f0, delta, L, c_noesc, an.w_en0, an.d_esc,
                   lmin, an.lambda_max)

    def inequalities(self) -> dict[str, bool]:
        a = (self.d - 1) / self.r_sc + self.kappa0
        tol = 1e-12
        return {
            "energy_curvature": self.w_en0 / 4.0 * a * a <= 0.25 + tol,
            "l2_curvature": 0.25 * a <= 0.25 + tol,
            "spectral_curvature": a <= self.lambda_min / 4.0 + tol,
        }

    @property
    def coercivity(self) -> float:
        return min(self.w_en0 / 2.0, 0.25)


def weight_T_rho_psi0(rho: float, r, cfg: FirewallConfig, d: int | None = None):
    """exp(-kappa0 |r - rho|), damped by (r / r_sc)^{d-1} below r_sc."""
    if rho < cfg.r_sc:
        raise ValueError(f"rho = {rho} is below r_sc = {cfg.r_sc}")
    d = cfg.d if d is None else d
    r = np.asarray(r, dtype=float)
    w = np.exp(-cfg.kappa0 * np.abs(r - rho))
    return np.where(r < cfg.r_sc, w * (np.clip(r, 0.0, None) / cfg.r_sc) ** (d - 1), w)


def _shifted(field: RadialField, m: MinimumPoint) -> np.ndarray:
    return field.values - np.asarray(m.location, dtype=float)[:, None]


def firewall_density(field: RadialField, spec: PotentialSpec, m: MinimumPoint, w_en: float,
                     outer_bc: str = "neumann_zero") -> np.ndarray:
    """w (u_r^2/2 + V(u) - V(m)) + |u - m|^2/2 at every node."""
    ur = radial_derivative(field, outer_bc)
    dv = _shifted(field, m)
    return (w_en * (0.5 * np.sum(ur * ur, axis=0) + spec.values(field.values) - m.value)
            + 0.5 * np.sum(dv * dv, axis=0))


def _trapezoid_weights(n: int, dr: float) -> np.ndarray:
    a = np.full(n, dr)
    a[0] = a[-1] = 0.5 * dr
    return a


def firewall_F0(field: RadialField, rho: float, cfg: FirewallConfig, spec: PotentialSpec,
                m: MinimumPoint) -> float:
    """Direct trapezoid quadrature of T_rho psi0 times the firewall density."""
    g = field.grid
    T = weight_T_rho_psi0(rho, g.r, cfg)
    return float(np.trapezoid(T * firewall_density(field, spec, m, cfg.w_en0), dx=g.dr))


def firewall_profile(field: RadialField, cfg: FirewallConfig, spec: PotentialSpec,
                     m: MinimumPoint) -> np.ndarray:
    """F0(rho_j) at every grid node rho_j (meaningful for rho_j >= r_sc).

    Same quadrature as firewall_F0, evaluated in O(N) as a two-sided
    exponential recursion.
    """
    from scipy.signal import lfilter  # heavy import, only needed here

    g = field.grid
    r = g.r
    damp = np.where(r < cfg.r_sc, (r / cfg.r_sc) ** (cfg.d - 1), 1.0)
    x = _trapezoid_weights(g.n_nodes, g.dr) * damp * firewall_density(field, spec, m, cfg.w_en0)
    q = math.exp(-cfg.kappa0 * g.dr)
    fwd = lfilter([1.0], [1.0, -q], x)
    bwd = lfilter([1.0], [1.0, -q], x[::-1])[::-1]
    return fwd + bwd - x


def deviation(field: RadialField, m: MinimumPoint) -> np.ndarray:
    dv = _shifted(field, m)
    return np.sqrt(np.sum(dv * dv, axis=0))


def _crossing(r0: float, r1: float, d0: float, d1: float, level: float) -> float:
    if d1 == d0:
        return r1
    return r0 + (level - d0) / (d1 - d0) * (r1 - r0)


def escape_set(field: RadialField, m: MinimumPoint, d_esc: float) -> list[tuple[float, float]]:
    """Maximal intervals where |u - m| > d_esc, ends refined by linear interpolation."""
    r = field.grid.r
    dist = deviation(field, m)
    above = dist > d_esc
    if not above.any():
        return []
    edges = np.diff(above.astype(np.int8))
    starts = list(np.nonzero(edges == 1)[0] + 1)
    ends = list(np.nonzero(edges == -1)[0])
    if above[0]:
        starts.insert(0, 0)
    if above[-1]:
        ends.append(len(r) - 1)
    out = []
    for s, e in zip(starts, ends):
        a = r[0] if s == 0 else _crossing(r[s - 1], r[s], dist[s - 1], dist[s], d_esc)
        b = r[-1] if e == len(r) - 1 else _crossing(r[e], r[e + 1], dist[e], dist[e + 1], d_esc)
        out.append((float(a), float(b)))
    return out


def escape_measure(field: RadialField, m: MinimumPoint, cfg: FirewallConfig,
                   rhos: Sequence[float], intervals=None) -> np.ndarray:
    """Integral of T_rho psi0 over the escape set, for each rho."""
    rhos = np.atleast_1d(np.asarray(rhos, dtype=float))
    if intervals is None:
        intervals = escape_set(field, m, cfg.d_esc)
    out = np.zeros(rhos.size)
    dr = field.grid.dr
    for a, b in intervals:
        if b <= a:
            continue
        n = max(int(math.ceil((b - a) / dr * 4)), 4) + 1
        s = np.linspace(a, b, n)
        T = np.stack([weight_T_rho_psi0(rho, s, cfg) for rho in rhos])
        out += np.trapezoid(T, s, axis=1)
    return out


def r_hom_edge(field: RadialField, m: MinimumPoint, d_esc: float, margin_nodes: int = 10) -> float:
    """Inner edge of the outer plateau at d_esc/2 deviation, plus a margin of 10 dr."""
    g = field.grid
    dist = deviation(field, m)
    idx = np.nonzero(dist > 0.5 * d_esc)[0]
    base = 0.0 if idx.size == 0 else g.r[idx[-1]]
    return float(min(base + margin_nodes * g.dr, g.r_max))


def escape_point(field: RadialField, m: MinimumPoint, d_esc: float, r_hom: float) -> float:
    """sup{r <= r_hom : |u(r) - m| = d_esc}, or -inf when the set is empty."""
    r = field.grid.r
    dist = deviation(field, m)
    k_max = int(np.searchsorted(r, r_hom, side="right")) - 1
    best = NEG_INF
    s = dist[:k_max + 1] - d_esc
    hits = np.nonzero(s == 0.0)[0]
    if hits.size:
        best = float(r[hits[-1]])
    sign_change = np.nonzero(s[:-1] * s[1:] < 0)[0]
    if sign_change.size:
        k = sign_change[-1]
        best = max(best, _crossing(r[k], r[k + 1], dist[k], dist[k + 1], d_esc))
    # a crossing between the last node and r_hom itself
    if k_max + 1 < r.size and r[k_max] < r_hom and s[-1] * (dist[k_max + 1] - d_esc) < 0:
        x = _crossing(r[k_max], r[k_max + 1], dist[k_max], dist[k_max + 1], d_esc)
        if x <= r_hom:
            best = max(best, x)
    return best


def hull_noesc(x, cfg: FirewallConfig):
    """No-escape hull: +inf for x<0, linear from delta^2/2 to delta^2/4 on [0, L], flat beyond."""
    x = np.asarray(x, dtype=float)
    d2 = cfg.delta_esc ** 2
    out = np.where(x >= cfg.hull_L, 0.25 * d2, 0.5 * d2 * (1.0 - x / (2.0 * cfg.hull_L)))
    out = np.where(x < 0, np.inf, out)
    return float(out) if out.ndim == 0 else out


def r_esc_hull(f0: np.ndarray, r: np.ndarray, cfg: FirewallConfig, r_hom: float) -> float:
    """Hull-based escape point: smallest grid r_l in [r_sc, r_hom] below both hulls.

    Returns nan when even r_l = r_hom fails (the hull hypothesis does not hold).
    """
    sel = r >= cfg.r_sc - 1e-12
    rr, ff = r[sel], f0[sel]
    cand = np.nonzero(rr <= r_hom + 1e-12)[0]
    if cand.size == 0:
        return math.nan
    right = hull_noesc(r_hom - rr, cfg)

    def ok(i: int) -> bool:
        return bool(np.all(ff <= np.maximum(hull_noesc(rr - rr[i], cfg), right)))

    lo, hi = 0, cand[-1]
    if not ok(hi):
        return math.nan
    if ok(lo):
        return float(rr[lo])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return float(rr[hi])


# ---------------------------------------------------------------------------
# tracking


def speed_estimate(times, positions, window: tuple[float, float] | None = None) -> tuple[float, float]:
    """Least-squares slope and its standard error over a time window."""
    t = np.asarray(times, dtype=float)
    x = np.asarray(positions, dtype=float)
    sel = np.isfinite(x)
    if window is not None:
        sel &= (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
    t, x = t[sel], x[sel]
    if t.size < 10:
        raise ValueError(f"speed_estimate needs at least 10 samples, got {t.size}")
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, x, rcond=None)
    resid = x - A @ coef
    dof = t.size - 2
    s2 = float(resid @ resid) / dof
    tc = t - t.mean()
    stderr = math.sqrt(s2 / float(tc @ tc)) if s2 > 0 else 0.0
    return float(coef[0]), stderr


@dataclass
class EscapeTracker:
    m_outer: MinimumPoint
    d_esc: float
    spec: PotentialSpec
    cfg: FirewallConfig | None = None
    t: list = field(default_factory=list)
    r_hom: list = field(default_factory=list)
    r_Esc: list = field(default_factory=list)
    r_esc_hull: list = field(default_factory=list)
    name: str = "tracker"

    def __call__(self, fld: RadialField) -> None:
        rh = r_hom_edge(fld, self.m_outer, self.d_esc)
        self.t.append(fld.time)
        self.r_hom.append(rh)
        self.r_Esc.append(escape_point(fld, self.m_outer, self.d_esc, rh))
        if self.cfg is not None:
            f0 = firewall_profile(fld, self.cfg, self.spec, self.m_outer)
            self.r_esc_hull.append(r_esc_hull(f0, fld.grid.r, self.cfg, rh))
        else:
            self.r_esc_hull.append(math.nan)

    def speed(self, window: tuple[float, float]) -> tuple[float, float]:
        return speed_estimate(self.t, self.r_Esc, window)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "r_hom", "r_Esc", "r_esc_hull"])
            for row in zip(self.t, self.r_hom, self.r_Esc, self.r_esc_hull):
                w.writerow([repr(float(x)) for x in row])


# ---------------------------------------------------------------------------
# audits


@dataclass
class FirewallSamples:
    """F0, escape measure and |u - m| on a (time x rho) lattice."""
    times: np.ndarray
    rhos: np.ndarray
    f0: np.ndarray
    escape: np.ndarray
    dist: np.ndarray
    dr: float


def sample_firewall(fields: Sequence[RadialField], rhos, cfg: FirewallConfig,
                    spec: PotentialSpec, m: MinimumPoint) -> FirewallSamples:
    rhos = np.asarray(rhos, dtype=float)
    if np.any(rhos < cfg.r_sc):
        raise ValueError("all rho samples must be >= r_sc")
    g = fields[0].grid
    f0 = np.empty((len(fields), rhos.size))
    esc = np.empty_like(f0)
    dist = np.empty_like(f0)
    for i, fl in enumerate(fields):
        prof = firewall_profile(fl, cfg, spec, m)
        f0[i] = np.interp(rhos, g.r, prof)
        esc[i] = escape_measure(fl, m, cfg, rhos)
        dist[i] = np.interp(rhos, g.r, deviation(fl, m))
    return FirewallSamples(np.array([f.time for f in fields]), rhos, f0, esc, dist, g.dr)


@dataclass
class FirewallAuditReport:
    times: np.ndarray
    rhos: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    slack: float = 0.0

    @property
    def n_samples(self) -> int:
        return int(self.margin.size)

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    @property
    def n_violations(self) -> int:
        return int(np.sum(self.margin < -self.slack))

    def with_slack(self, slack: float) -> "FirewallAuditReport":
        return FirewallAuditReport(self.times, self.rhos, self.lhs, self.rhs, self.margin, slack)

    def write_csv(self, path: str | Path, f0: np.ndarray | None = None,
                  escape: np.ndarray | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "rho", "F0", "escape_measure", "margin"])
            for i, t in enumerate(self.times):
                for j, rho in enumerate(self.rhos):
                    w.writerow([repr(float(t)), repr(float(rho)),
                                repr(float(f0[i, j])) if f0 is not None else "",
                                repr(float(escape[i, j])) if escape is not None else "",
                                repr(float(self.margin[i, j]))])


def audit_firewall_decay(samples: FirewallSamples, cfg: FirewallConfig,
                         slack: float = 0.0) -> FirewallAuditReport:
    """Margin rhs - lhs of dF0/dt <= -nu F0 + K int_Sigma T at interior sample times.

    The time derivative is a centred difference over neighbouring snapshots.
    """
    t = samples.times
    if t.size < 3:
        raise ValueError("need at least three snapshots")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, dt[0]):
        raise ValueError("snapshots must be uniformly spaced in time")
    lhs = (samples.f0[2:] - samples.f0[:-2]) / (2.0 * dt[0])
    rhs = -cfg.nu_f0 * samples.f0[1:-1] + cfg.k_f0 * samples.escape[1:-1]
    return FirewallAuditReport(t[1:-1], samples.rhos, lhs, rhs, rhs - lhs, slack)


@dataclass
class SlackCalibration:
    errors: list[float]
    ratios: list[float]
    slacks: list[float]
    safety: float


def _common(a: FirewallAuditReport, b: FirewallAuditReport) -> np.ndarray:
    """Margins of ``a`` at the sample times shared with ``b``."""
    if a.rhos.shape != b.rhos.shape or not np.allclose(a.rhos, b.rhos):
        raise ValueError("reports must share the rho lattice")
    keep = np.array([np.any(np.abs(b.times - t) <= 1e-9 * max(1.0, abs(t))) for t in a.times])
    if not keep.any():
        raise ValueError("reports share no sample times")
    return a.margin[keep]


def calibrate_slack(reports: Sequence[FirewallAuditReport], safety: float = 2.0) -> SlackCalibration:
    """Richardson estimate of the discretization error of the audit margins.

    reports are the same audit at successively halved dr, dt and observation
    spacing; margins are compared on the shared (t, rho) samples. The error of
    level k is estimated as 4/3 of the largest margin change to level k+1; its
    slack is ``safety`` times that estimate.
    """
    if len(reports) < 2:
        raise ValueError("need at least two resolutions")
    errs = [4.0 / 3.0 * float(np.max(np.abs(_common(a, b) - _common(b, a))))
            for a, b in zip(reports[:-1], reports[1:])]
    ratios = [errs[k] / errs[k + 1] if errs[k + 1] > 0 else math.inf for k in range(len(errs) - 1)]
    return SlackCalibration(errs, ratios, [safety * e for e in errs], safety)


@dataclass
class EscapeImplicationReport:
    n_checked: int
    n_triggered: int
    n_counterexamples: int
    worst_excess: float


def audit_escape_implication(samples: FirewallSamples, cfg: FirewallConfig,
                             slack: float = 0.0) -> EscapeImplicationReport:
    """Counterexamples to F0(rho) <= delta_esc^2 => |u(rho) - m| <= d_esc."""
    trig = samples.f0 <= cfg.delta_esc ** 2
    excess = np.where(trig, samples.dist - cfg.d_esc, -np.inf)
    bad = int(np.sum(excess > slack))
    worst = float(np.max(excess)) if trig.any() else -math.inf
    return EscapeImplicationReport(int(samples.f0.size), int(trig.sum()), bad, worst)


@dataclass
class InvasionBoundReport:
    n_pairs: int
    n_skipped: int
    n_violations: int
    max_excess: float


def audit_invasion_bound(times, positions, c_noesc: float) -> InvasionBoundReport:
    """Check x(t+s) - x(t) <= c_noesc s over all ordered sample pairs.

    Pairs where either position is the -inf sentinel (or nan) are skipped:
    the increment is undefined there.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(positions, dtype=float)
    i, j = np.triu_indices(t.size, k=1)
    valid = np.isfinite(x[i]) & np.isfinite(x[j])
    i, j = i[valid], j[valid]
    excess = x[j] - x[i] - c_noesc * (t[j] - t[i])
    return InvasionBoundReport(int(valid.sum()), int((~valid).sum()), int(np.sum(excess > 0)),
                               float(np.max(excess)) if excess.size else -math.inf)
