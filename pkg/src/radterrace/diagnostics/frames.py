"""Localized energy, dissipation and firewall in travelling and standing frames."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from ..potential import MinimumPoint, PotentialAnalysis, PotentialSpec, _ball_samples
from ..radial import RadialField, radial_derivative, semi_discrete_rhs
from .firewall import FirewallConfig, escape_set


class FrameTruncationWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# travelling frame


@dataclass(frozen=True)
class TravelingFrameConfig:
    c: float
    t_init: float
    r_init: float
    xi_cut: float
    kappa: float
    c_cut: float
    w_en: float
    d: int
    r_sc: float
    c_noesc: float
    w_en0: float
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        failed = [k for k, ok in self.inequalities().items() if not ok]
        if failed:
            raise ValueError(f"travelling-frame parameters violate: {', '.join(failed)}")

    @classmethod
    def from_firewall(cls, cfg: FirewallConfig, c: float, t_init: float = 0.0,
                      r_init: float | None = None, xi_cut: float = 0.0) -> "TravelingFrameConfig":
        cn, lmin, lmax = cfg.c_noesc, cfg.lambda_min, cfg.lambda_max
        kappa = min(0.25, lmin / (16.0 * (cn + 1.0)))
        c_cut = min(lmin / (8.0 * lmax), lmin / (8.0 * (cn + 1.0)))
        w_en = min(cfg.w_en0, 1.0 / (cn + 1.0) ** 2)
        r_init = 2.0 * cfg.r_sc if r_init is None else r_init
        return cls(c, t_init, r_init, xi_cut, kappa, c_cut, w_en, cfg.d, cfg.r_sc, cn,
                   cfg.w_en0, lmin, lmax)

    def inequalities(self) -> dict[str, bool]:
        c, k, cc, w = self.c, self.kappa, self.c_cut, self.w_en
        tol = 1e-12
        return {
            "speed_range": 0 < c <= self.c_noesc,
            "cut_energy": cc * (c + k) * w / 2.0 <= 0.125 + tol,
            "gradient_energy": w * (c + k + 0.5) ** 2 / 4.0 <= 0.125 + tol,
            "cut_spectral": w * cc * (c + k) <= self.lambda_min / (8.0 * self.lambda_max) + tol,
            "cut_rate": (cc + k) * (c + k) / 2.0 <= self.lambda_min / 16.0 + tol,
            "weight_below_w_en0": w <= self.w_en0 + tol,
            "r_init_large": self.r_init >= 2.0 * self.r_sc,
            "xi_cut_nonneg": self.xi_cut >= 0,
        }

    def junctions(self, s: float) -> tuple[float, float, float]:
        """(left end, left/main junction, main/right junction) at frame time s."""
        left = -self.r_init - self.c * s
        return left, left + self.r_sc, self.xi_cut + self.c_cut * s


def _radius(rho, s: float, tf: TravelingFrameConfig):
    return tf.r_init + tf.c * s + np.asarray(rho, dtype=float)


def chi_tf(rho, s: float, tf: TravelingFrameConfig):
    rho = np.asarray(rho, dtype=float)
    _, a, b = tf.junctions(s)
    c, k = tf.c, tf.kappa
    main = np.exp(c * np.minimum(rho, b))
    right = np.exp((c + k) * b - k * np.maximum(rho, b))
    out = np.where(rho >= b, right, main)
    factor = (np.clip(_radius(rho, s, tf), 0.0, None) / tf.r_sc) ** (tf.d - 1)
    return np.where(rho < a, out * factor, out)


def psi_tf(rho, s: float, tf: TravelingFrameConfig):
    rho = np.asarray(rho, dtype=float)
    _, a, b = tf.junctions(s)
    c, k = tf.c, tf.kappa
    inner = np.exp((c + k) * np.minimum(rho, b) - k * b)
    out = np.where(rho >= b, chi_tf(np.maximum(rho, b), s, tf), inner)
    factor = (np.clip(_radius(rho, s, tf), 0.0, None) / tf.r_sc) ** (tf.d - 1)
    return np.where(rho < a, out * factor, out)


def chi_pollution_factor(rho, s: float, tf: TravelingFrameConfig):
    """Closed form of (d-1)/r chi + c chi - chi_rho on the three intervals."""
    rho = np.asarray(rho, dtype=float)
    _, a, b = tf.junctions(s)
    chi = chi_tf(rho, s, tf)
    curv = (tf.d - 1) / _radius(rho, s, tf)
    return np.where(rho < a, 0.0,
                    np.where(rho < b, curv * chi, (tf.c + tf.kappa + curv) * chi))


@dataclass
class FrameSeries:
    s: np.ndarray
    E: np.ndarray
    D: np.ndarray
    F: np.ndarray

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "E", "D", "F"])
            for row in zip(self.s, self.E, self.D, self.F):
                w.writerow([repr(float(x)) for x in row])


def _frame_lattice(r_max: float, dr: float, X: float, s: float,
                   tf: TravelingFrameConfig) -> np.ndarray:
    """rho lattice anchored at 0 with spacing dr, plus ends and weight junctions."""
    lo, hi = -X, r_max - X
    k0, k1 = math.ceil(lo / dr), math.floor(hi / dr)
    pts = [np.arange(k0, k1 + 1) * dr, [lo, hi]]
    pts.append([x for x in tf.junctions(s)[1:] if lo < x < hi])
    return np.unique(np.concatenate([np.asarray(p, dtype=float) for p in pts]))


def frame_quantities(field: RadialField, ut: np.ndarray, tf: TravelingFrameConfig,
                     spec: PotentialSpec, m: MinimumPoint) -> tuple[float, float, float]:
    """(E, D, F) at one snapshot; v and its derivatives come from cubic splines in r."""
    g = field.grid
    s = field.time - tf.t_init
    X = tf.r_init + tf.c * s
    if X >= g.r_max:
        raise ValueError("frame origin beyond the grid")
    rho = _frame_lattice(g.r_max, g.dr, X, s, tf)
    r = np.clip(X + rho, 0.0, g.r_max)
    su = CubicSpline(g.r, field.values, axis=1)
    v = su(r)
    v_rho = su(r, 1)
    v_s = CubicSpline(g.r, ut, axis=1)(r) + tf.c * v_rho
    en = 0.5 * np.sum(v_rho ** 2, axis=0) + spec.values(v) - m.value
    dv = v - np.asarray(m.location)[:, None]
    chi, psi = chi_tf(rho, s, tf), psi_tf(rho, s, tf)
    E = np.trapezoid(chi * en, rho)
    D = np.trapezoid(chi * np.sum(v_s ** 2, axis=0), rho)
    F = np.trapezoid(psi * (tf.w_en * en + 0.5 * np.sum(dv * dv, axis=0)), rho)
    return float(E), float(D), float(F)


def traveling_frame_series(fields: Sequence[RadialField], tf: TravelingFrameConfig,
                           spec: PotentialSpec, m: MinimumPoint, rates: Sequence[np.ndarray] | None = None,
                           outer_bc: str = "neumann_zero") -> FrameSeries:
    """E(s), D(s), F(s) for snapshots at t >= t_init.

    u_t is taken from the semi-discrete right-hand side unless ``rates`` is given.
    The frame is cut at r_max; snapshots whose frame origin left the grid are
    dropped with a warning.
    """
    out = {"s": [], "E": [], "D": [], "F": []}
    warned = False
    for i, fl in enumerate(fields):
        if fl.time < tf.t_init - 1e-12:
            continue
        if tf.r_init + tf.c * (fl.time - tf.t_init) >= fl.grid.r_max:
            if not warned:
                warnings.warn("travelling frame left the grid; series truncated",
                              FrameTruncationWarning, stacklevel=2)
                warned = True
            continue
        ut = rates[i] if rates is not None else semi_discrete_rhs(fl, spec, outer_bc)
        E, D, F = frame_quantities(fl, ut, tf, spec, m)
        out["s"].append(fl.time - tf.t_init)
        out["E"].append(E)
        out["D"].append(D)
        out["F"].append(F)
    return FrameSeries(*(np.array(out[k]) for k in ("s", "E", "D", "F")))


# ---------------------------------------------------------------------------
# standing frame


def standing_firewall_constant(spec: PotentialSpec, an: PotentialAnalysis) -> float:
    """K~_F: max over the attracting ball of the standing-frame pollution integrand."""
    pts = _ball_samples(spec.n, an.r_att)
    vals, grads = spec.values(pts), spec.gradients(pts)
    best = -math.inf
    for m in an.minima:
        w = pts - np.asarray(m.location)[:, None]
        w2 = np.sum(w * w, axis=0)
        dV = vals - m.value
        expr = (an.nu_f0 * (an.w_en0 * dV + 0.5 * w2) - np.sum(w * grads, axis=0)
                + an.lambda_min / (8.0 * an.lambda_max) * np.abs(dV) + an.lambda_min / 8.0 * w2)
        best = max(best, float(np.max(expr)))
    return max(best, 0.0)


@dataclass(frozen=True)
class StandingFrameConfig:
    c_hom: float
    c_cut: float
    c_left: float
    c_right: float
    kappa: float
    w_en0: float
    nu: float
    k_f: float
    d: int
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        failed = [k for k, ok in self.inequalities().items() if not ok]
        if failed:
            raise ValueError(f"standing-frame parameters violate: {', '.join(failed)}")

    @classmethod
    def from_analysis(cls, spec: PotentialSpec, an: PotentialAnalysis, d: int, c_hom: float,
                      c_cut: float | None = None, c_left: float | None = None,
                      c_right: float | None = None) -> "StandingFrameConfig":
        lmin, lmax = an.lambda_min, an.lambda_max
        kappa = min(0.5, lmin / (8.0 * lmax * c_hom), lmin / (4.0 * (1.0 + c_hom)))
        c_cut = 0.5 * c_hom if c_cut is None else c_cut
        c_left = 0.5 * c_cut if c_left is None else c_left
        c_right = 0.5 * (c_cut + c_hom) if c_right is None else c_right
        return cls(c_hom, c_cut, c_left, c_right, kappa, an.w_en0, an.nu_f0,
                   standing_firewall_constant(spec, an), d, lmin, lmax)

    def inequalities(self) -> dict[str, bool]:
        k, cc, w = self.kappa, self.c_cut, self.w_en0
        tol = 1e-12
        return {
            "gradient_budget": k * cc * w + w * k * k + k <= 1.0 + tol,
            "cut_spectral": k * cc * w <= self.lambda_min / (8.0 * self.lambda_max) + tol,
            "cut_rate": k * cc + k <= self.lambda_min / 4.0 + tol,
            "cut_below_hom": 0 < cc < self.c_hom,
            "cut_ordering": 0 < self.c_left <= cc <= self.c_right,
        }


def chi_sf(r, t: float, sf: StandingFrameConfig):
    r = np.asarray(r, dtype=float)
    b = sf.c_cut * t
    return r ** (sf.d - 1) * np.exp(-sf.kappa * np.maximum(r - b, 0.0))


def psi_sf(r, t: float, sf: StandingFrameConfig):
    r = np.asarray(r, dtype=float)
    a, b = sf.c_left * t, sf.c_right * t
    expo = np.where(r < a, -sf.kappa * (a - r), np.where(r > b, -sf.kappa * (r - b), 0.0))
    return r ** (sf.d - 1) * np.exp(expo)


def psi_sf_curvature_factor(r, t: float, sf: StandingFrameConfig):
    """Closed form of (d-1)/r psi - psi_r: -kappa psi, 0, kappa psi."""
    r = np.asarray(r, dtype=float)
    a, b = sf.c_left * t, sf.c_right * t
    psi = psi_sf(r, t, sf)
    return np.where(r < a, -sf.kappa * psi, np.where(r > b, sf.kappa * psi, 0.0))


@dataclass
class StandingSeries:
    t: np.ndarray
    E: np.ndarray
    D: np.ndarray
    F: np.ndarray
    G: np.ndarray


def standing_frame_series(fields: Sequence[RadialField], sf: StandingFrameConfig,
                          spec: PotentialSpec, m: MinimumPoint, d_esc: float,
                          outer_bc: str = "neumann_zero") -> StandingSeries:
    """E, D, F and the pollution integral G = int over the escape set of psi."""
    out = {k: [] for k in "tEDFG"}
    for fl in fields:
        g = fl.grid
        r, t = g.r, fl.time
        ur = radial_derivative(fl, outer_bc)
        ut = semi_discrete_rhs(fl, spec, outer_bc)
        en = 0.5 * np.sum(ur * ur, axis=0) + spec.values(fl.values) - m.value
        dv = fl.values - np.asarray(m.location)[:, None]
        chi, psi = chi_sf(r, t, sf), psi_sf(r, t, sf)
        G = 0.0
        for a, b in escape_set(fl, m, d_esc):
            n = max(int(math.ceil((b - a) / g.dr * 4)), 4) + 1
            x = np.linspace(a, b, n)
            G += float(np.trapezoid(psi_sf(x, t, sf), x))
        out["t"].append(t)
        out["E"].append(float(np.trapezoid(chi * en, dx=g.dr)))
        out["D"].append(float(np.trapezoid(chi * np.sum(ut * ut, axis=0), dx=g.dr)))
        out["F"].append(float(np.trapezoid(
            psi * (sf.w_en0 * en + 0.5 * np.sum(dv * dv, axis=0)), dx=g.dr)))
        out["G"].append(G)
    return StandingSeries(*(np.array(out[k]) for k in "tEDFG"))


def audit_standing_firewall(series: StandingSeries, sf: StandingFrameConfig) -> np.ndarray:
    """Margins -nu F + K~_F G - F' at interior times (centred differences)."""
    t = series.t
    if t.size < 3:
        raise ValueError("need at least three snapshots")
    dt = t[1] - t[0]
    lhs = (series.F[2:] - series.F[:-2]) / (2.0 * dt)
    return -sf.nu * series.F[1:-1] + sf.k_f * series.G[1:-1] - lhs


__all__ = [
    "TravelingFrameConfig", "chi_tf", "psi_tf", "chi_pollution_factor", "FrameSeries",
    "frame_quantities", "traveling_frame_series", "StandingFrameConfig", "chi_sf", "psi_sf",
    "psi_sf_curvature_factor", "StandingSeries", "standing_frame_series",
    "audit_standing_firewall", "standing_firewall_constant", "FrameTruncationWarning",
]
