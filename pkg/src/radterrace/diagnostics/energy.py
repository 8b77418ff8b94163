"""Energy integrals, the dissipation identity and the co-moving dissipation delta."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..potential import MinimumPoint, PotentialSpec
from ..radial import (RadialField, boundary_flux, dissipation, radial_derivative,
                      radial_energy, semi_discrete_rhs)


def _trapezoid_upto(f: np.ndarray, dr: float, b: float) -> float:
    """Trapezoid of nodal values f on [0, b], partial last cell by linear interpolation."""
    k = int(math.floor(b / dr + 1e-12))
    total = float(np.trapezoid(f[:k + 1], dx=dr)) if k > 0 else 0.0
    frac = b - k * dr
    if frac > 1e-14 * dr and k + 1 < f.size:
        fb = f[k] + (f[k + 1] - f[k]) * frac / dr
        total += 0.5 * (f[k] + fb) * frac
    return total


def energy_density(field: RadialField, spec: PotentialSpec, v_ref: float,
                   outer_bc: str = "neumann_zero") -> np.ndarray:
    ur = radial_derivative(field, outer_bc)
    return 0.5 * np.sum(ur * ur, axis=0) + spec.values(field.values) - v_ref


def weighted_energy(field: RadialField, spec: PotentialSpec, weight: np.ndarray, upto: float,
                    v_ref: float = 0.0) -> float:
    """Trapezoid of weight (u_r^2/2 + V(u) - v_ref) over [0, upto]."""
    return _trapezoid_upto(weight * energy_density(field, spec, v_ref), field.grid.dr, upto)


def residual_energy(field: RadialField, c: float, m: MinimumPoint, d: int | None = None,
                    spec: PotentialSpec | None = None) -> float:
    """int_0^{c t} r^{d-1}(u_r^2/2 + V(u) - V(m)) dr."""
    if spec is None:
        raise ValueError("residual_energy needs the potential")
    g = field.grid
    d = g.d if d is None else d
    b = c * field.time
    if b > g.r_max + 1e-12:
        raise ValueError("window exceeds domain")
    return weighted_energy(field, spec, g.r ** (d - 1), b, m.value)


@dataclass
class ResidualEnergyObserver:
    spec: PotentialSpec
    m: MinimumPoint
    c: float
    name: str = "residual"

    def __post_init__(self):
        self.t: list[float] = []
        self.values: list[float] = []

    def __call__(self, field: RadialField) -> None:
        if self.c * field.time > field.grid.r_max:
            return
        self.t.append(field.time)
        self.values.append(residual_energy(field, self.c, self.m, spec=self.spec))


def cauchy_time(times, values, tol: float = 1e-3) -> float:
    """Smallest sampled t with |E(2t') - E(t')| <= tol for every sampled t' >= t.

    Returns nan when the condition never holds on the available samples.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(values, dtype=float)
    ok = []
    for i, ti in enumerate(t):
        j = int(np.argmin(np.abs(t - 2.0 * ti)))
        if ti <= 0 or abs(t[j] - 2.0 * ti) > 1e-9 * max(1.0, ti):
            continue
        ok.append((ti, abs(e[j] - e[i]) <= tol))
    t_star = math.nan
    for ti, good in reversed(ok):
        if not good:
            break
        t_star = ti
    return t_star


# ---------------------------------------------------------------------------
# energy dissipation identity


def energy_rate(field: RadialField, spec: PotentialSpec, outer_bc: str = "neumann_zero") -> float:
    """Derivative of the discrete energy along the semi-discrete right-hand side."""
    g = field.grid
    ut = semi_discrete_rhs(field, spec, outer_bc)
    ur = radial_derivative(field, outer_bc)
    urt = radial_derivative(RadialField(g, ut, field.time), outer_bc)
    dens = np.sum(ur * urt, axis=0) + np.sum(spec.gradients(field.values) * ut, axis=0)
    return float(np.trapezoid(g.r ** (g.d - 1) * dens, dx=g.dr))


@dataclass
class EnergyIdentityObserver:
    """Records E, the dissipation integral and the boundary flux at each observation."""
    spec: PotentialSpec
    v_ref: float
    outer_bc: str = "neumann_zero"
    name: str = "energy"

    def __post_init__(self):
        self.t: list[float] = []
        self.E: list[float] = []
        self.D: list[float] = []
        self.flux: list[float] = []
        self.dEdt: list[float] = []

    def __call__(self, field: RadialField) -> None:
        self.t.append(field.time)
        self.dEdt.append(energy_rate(field, self.spec, self.outer_bc))
        self.E.append(radial_energy(field, self.spec, self.v_ref, self.outer_bc))
        self.D.append(dissipation(field, self.spec, self.outer_bc))
        self.flux.append(boundary_flux(field, self.spec, self.outer_bc))

    def mismatch(self, method: str = "centred") -> tuple[np.ndarray, np.ndarray]:
        """(times, |dE/dt + D - flux| / (1 + |dE/dt|)).

        ``centred`` differences E across neighbouring observations (interior
        times only); ``tangent`` uses the exact derivative of the discrete
        energy along the semi-discrete flow.
        """
        t = np.asarray(self.t)
        if method == "tangent":
            dEdt = np.asarray(self.dEdt)
            D, flux = np.asarray(self.D), np.asarray(self.flux)
        elif method == "centred":
            E = np.asarray(self.E)
            dEdt = (E[2:] - E[:-2]) / (t[2:] - t[:-2])
            D = np.asarray(self.D)[1:-1]
            flux = np.asarray(self.flux)[1:-1]
            t = t[1:-1]
        else:
            raise ValueError(f"unknown method {method!r}")
        return t, np.abs(dEdt + D - flux) / (1.0 + np.abs(dEdt))


# ---------------------------------------------------------------------------
# dissipation in a co-moving window


def _comoving_rate(field: RadialField, spec: PotentialSpec, c: float,
                   ut: np.ndarray | None, outer_bc: str) -> np.ndarray:
    if ut is None:
        ut = semi_discrete_rhs(field, spec, outer_bc)
    w = ut + c * radial_derivative(field, outer_bc)
    return np.sum(w * w, axis=0)


def delta_dissip(fields: Sequence[RadialField], spec: PotentialSpec, r_center: float,
                 c_esc: float, t: float, rates: Sequence[np.ndarray] | None = None,
                 outer_bc: str = "neumann_zero", rel_tol: float = 1e-10) -> float:
    """Root of g(eps) = int_{-1}^{1} int_{-1/eps}^{1/eps} (u_t + c u_r)^2 - eps.

    The inner integral is centred at r_center and clipped to the grid; the outer
    one runs over the snapshots with |time - t| <= 1. g is nonincreasing, so the
    infimum of {eps : g(eps) <= 0} is found by bisection in log(eps). If the
    integrand vanishes the result is 0.
    """
    sel = [i for i, f in enumerate(fields) if abs(f.time - t) <= 1.0 + 1e-9]
    if len(sel) < 2:
        raise ValueError("window must cover [t-1, t+1] with at least two snapshots")
    taus = np.array([fields[i].time - t for i in sel])
    g0 = fields[sel[0]].grid
    r = g0.r
    cums = []
    for i in sel:
        q = _comoving_rate(fields[i], spec, c_esc, None if rates is None else rates[i], outer_bc)
        cums.append(np.concatenate([[0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * g0.dr)]))
    cums = np.array(cums)

    def inner(eps: float) -> np.ndarray:
        a = max(r_center - 1.0 / eps, 0.0)
        b = min(r_center + 1.0 / eps, g0.r_max)
        if b <= a:
            return np.zeros(len(sel))
        return np.array([np.interp(b, r, c) - np.interp(a, r, c) for c in cums])

    def g(eps: float) -> float:
        return float(np.trapezoid(inner(eps), taus)) - eps

    total = float(np.trapezoid(cums[:, -1], taus))
    if total <= 0.0:
        return 0.0
    # tiny eps covers the whole grid: g = total - eps > 0; large eps: g < 0
    lo, hi = total * 1e-12, max(2.0 * total, 1.0)
    llo, lhi = math.log(lo), math.log(hi)
    while lhi - llo > rel_tol:
        mid = 0.5 * (llo + lhi)
        if g(math.exp(mid)) > 0:
            llo = mid
        else:
            lhi = mid
    return math.exp(lhi)


@dataclass
class DissipationObserver:
    """delta_Dissip(t) around a tracked position, evaluated once t+1 has been observed."""
    spec: PotentialSpec
    position: Callable[[float], float]
    c_esc: float
    name: str = "dissipation"

    def __post_init__(self):
        self._buffer: list[RadialField] = []
        self.t: list[float] = []
        self.values: list[float] = []

    def __call__(self, field: RadialField) -> None:
        self._buffer.append(field.copy())
        while self._buffer and self._buffer[-1].time - self._buffer[0].time > 2.0 + 1e-9:
            self._buffer.pop(0)
        if len(self._buffer) < 3:
            return
        span = self._buffer[-1].time - self._buffer[0].time
        if abs(span - 2.0) > 1e-9:
            return
        tc = self._buffer[0].time + 1.0
        x = self.position(tc)
        if not math.isfinite(x):
            return
        self.t.append(tc)
        self.values.append(delta_dissip(self._buffer, self.spec, x, self.c_esc, tc))
