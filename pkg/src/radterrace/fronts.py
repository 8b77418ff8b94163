"""Travelling-front profiles phi'' = -c phi' + grad V(phi).

Scalar fronts are computed by shooting in the speed: launch on the unstable
manifold of ``m_minus``, integrate, and classify the orbit as overshooting
(crossing ``m_plus``) or undershooting (turning back first). The
classification is monotone in c; the signed miss distance is continuous, so
Brent's method isolates the front speed.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .potential import MinimumPoint, PotentialAnalysis, PotentialSpec

LAUNCH_OFFSET = 1e-6
TAIL_TOL = 1e-6
SPEED_TOL = 1e-10
ZERO_SPEED = 1e-8
DEFAULT_DXI = 0.01
SEARCH_RTOL = 1e-10


class BracketError(ValueError):
    """The speed bracket does not contain a sign change of the shooting map."""


@dataclass(frozen=True)
class FrontProfile:
    xi_grid: np.ndarray
    values: np.ndarray          # (N, n)
    derivative: np.ndarray      # (N, n)
    speed: float
    m_minus: MinimumPoint
    m_plus: MinimumPoint
    normalized: bool = False
    d_esc: float | None = None

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def dxi(self) -> float:
        return float(self.xi_grid[1] - self.xi_grid[0])

    def __call__(self, xi) -> np.ndarray:
        """phi(xi) with constant extension by the end states; shape (n, len(xi))."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        out = np.empty((self.n, xi.size))
        for j in range(self.n):
            out[j] = np.interp(xi, self.xi_grid, self.values[:, j],
                               left=self.m_minus.location[j], right=self.m_plus.location[j])
        return out

    def translated(self, shift: float) -> "FrontProfile":
        return replace(self, xi_grid=self.xi_grid + shift, normalized=False)


def front_ode_rhs(phi, dphi, c: float, spec: PotentialSpec) -> tuple[np.ndarray, np.ndarray]:
    dphi = np.atleast_1d(np.asarray(dphi, dtype=float))
    return dphi, -c * dphi + np.atleast_1d(spec.grad(np.atleast_1d(phi)))


def _second_derivative(spec: PotentialSpec, m: MinimumPoint) -> float:
    return float(np.atleast_2d(spec.hess(m.location))[0, 0])


def _shoot(spec: PotentialSpec, m_minus: MinimumPoint, m_plus: MinimumPoint, c: float,
           dense: bool = False, span: float = 2000.0, rtol: float = 1e-12):
    """Integrate the launch orbit at speed c.

    Returns (label, sol) with label +1 for overshoot, -1 for undershoot and 0
    when the orbit reached the TAIL_TOL neighbourhood of m_plus first (only
    checked when ``dense``).
    """
    a, b = float(m_minus.location[0]), float(m_plus.location[0])
    s = math.copysign(1.0, b - a)
    vpp = _second_derivative(spec, m_minus)
    mu = 0.5 * (-c + math.sqrt(c * c + 4.0 * vpp))
    y0 = [a + s * LAUNCH_OFFSET, s * mu * LAUNCH_OFFSET]
    dV = spec.grad_many

    def rhs(_, y):
        return [y[1], -c * y[1] + float(dV(np.array([[y[0]]]))[0, 0])]

    def cross(_, y):
        return y[0] - b
    cross.terminal = True
    cross.direction = s

    def turn(_, y):
        return y[1]
    turn.terminal = True
    turn.direction = -s

    events = [cross, turn]
    if dense:
        def arrive(_, y):
            return abs(y[0] - b) - TAIL_TOL
        arrive.terminal = True
        arrive.direction = -1
        events.append(arrive)
    sol = solve_ivp(rhs, (0.0, span), y0, method="DOP853", rtol=rtol, atol=1e-2 * rtol,
                    events=events, dense_output=dense)
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    return 0, sol


def _miss(spec: PotentialSpec, m_minus: MinimumPoint, m_plus: MinimumPoint, c: float) -> float:
    """Signed miss of the launch orbit: speed at the crossing of m_plus (> 0) or
    minus the remaining gap at the turning point (< 0)."""
    label, sol = _shoot(spec, m_minus, m_plus, c, rtol=SEARCH_RTOL)
    if label == 1:
        miss = abs(float(sol.y_events[0][0][1]))
    elif label == -1:
        miss = -abs(float(sol.y_events[1][0][0]) - float(m_plus.location[0]))
    else:
        return 0.0
    # near the root the miss behaves like |c - c*|^(2/3)
    return math.copysign(abs(miss) ** 1.5, miss)


def solve_bistable_front(spec: PotentialSpec, analysis: PotentialAnalysis | None,
                         m_minus: MinimumPoint, m_plus: MinimumPoint,
                         c_bracket: tuple[float, float] = (0.0, 2.0),
                         dxi: float = DEFAULT_DXI) -> FrontProfile:
    """Front connecting m_minus (xi -> -inf) to m_plus (xi -> +inf).

    c > 0 means the front moves right, i.e. m_minus invades m_plus.
    """
    if spec.n != 1:
        raise NotImplementedError(
            "vector shooting unsupported; use front_residual on externally supplied profiles")
    if m_minus.value > m_plus.value + 1e-14:
        raise ValueError("need V(m_minus) <= V(m_plus)")
    lo, hi = float(c_bracket[0]), float(c_bracket[1])
    f_lo, f_hi = _miss(spec, m_minus, m_plus, lo), _miss(spec, m_minus, m_plus, hi)
    if f_lo == 0.0:
        hi = lo
    elif f_hi == 0.0:
        lo = hi
    elif math.copysign(1.0, f_lo) == math.copysign(1.0, f_hi):
        raise BracketError("bracket does not isolate a bistable speed")
    else:
        # the miss distance is continuous and monotone in c
        lo = hi = brentq(lambda cc: _miss(spec, m_minus, m_plus, cc), lo, hi,
                         xtol=SPEED_TOL, rtol=4 * np.finfo(float).eps)
    c = 0.5 * (lo + hi)
    if abs(c) < ZERO_SPEED:
        c = 0.0
    if c > 0:
        assert m_minus.value < m_plus.value, "positive speed requires V(m_minus) < V(m_plus)"

    # take the orbit that gets closest to m_plus among the bracket ends
    best, best_dist = None, math.inf
    for cc in dict.fromkeys((c, lo, hi)):
        label, sol = _shoot(spec, m_minus, m_plus, cc, dense=True)
        if label == 0:
            best = sol
            break
        dist = np.min(np.abs(sol.y[0] - float(m_plus.location[0])))
        if dist < best_dist:
            best, best_dist = sol, dist
    sol = best
    xi_end = float(sol.t[-1])
    n_nodes = int(math.floor(xi_end / dxi)) + 1
    xi = np.arange(n_nodes) * dxi
    y = sol.sol(xi)
    half = 0.5 * xi[-1]
    return FrontProfile(xi - half, y[0][:, None].copy(), y[1][:, None].copy(), c,
                        m_minus, m_plus, False, None)


def _last_crossing(profile: FrontProfile, d_esc: float) -> float:
    dist = np.linalg.norm(profile.values - profile.m_plus.location[None, :], axis=1)
    above = np.nonzero(dist >= d_esc)[0]
    if above.size == 0 or above[-1] == dist.size - 1:
        raise ValueError("profile never escapes d_esc")
    k = above[-1]
    d0, d1 = dist[k], dist[k + 1]
    x0, x1 = profile.xi_grid[k], profile.xi_grid[k + 1]
    return float(x0 + (d0 - d_esc) / (d0 - d1) * (x1 - x0))


def normalize_front(profile: FrontProfile, d_esc: float) -> FrontProfile:
    """Translate so the last d_esc-crossing toward m_plus sits at xi = 0."""
    x_star = _last_crossing(profile, d_esc)
    return replace(profile, xi_grid=profile.xi_grid - x_star, normalized=True, d_esc=d_esc)


def front_residual(profile: FrontProfile, spec: PotentialSpec) -> float:
    """Sup over interior nodes of |D^2 phi + c D phi - grad V(phi)|."""
    phi = profile.values
    if phi.shape[0] < 5:
        raise ValueError("need at least 5 nodes")
    h = profile.dxi
    d1 = (phi[2:] - phi[:-2]) / (2 * h)
    d2 = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / (h * h)
    g = spec.gradients(phi[1:-1].T).T
    res = d2 + profile.speed * d1 - g
    return float(np.max(np.linalg.norm(res, axis=1)))


def front_at(profile: FrontProfile, xi: float) -> np.ndarray:
    return profile(np.array([xi]))[:, 0]


# ---------------------------------------------------------------------------
# I/O


def save_front(profile: FrontProfile, csv_path: str | Path) -> Path:
    """Write the profile CSV and a JSON sidecar next to it; returns the sidecar path."""
    csv_path = Path(csv_path)
    n = profile.n
    header = ["xi"] + [f"phi_{j + 1}" for j in range(n)] + [f"dphi_{j + 1}" for j in range(n)]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(profile.xi_grid.size):
            w.writerow([repr(float(profile.xi_grid[k]))]
                       + [repr(float(x)) for x in profile.values[k]]
                       + [repr(float(x)) for x in profile.derivative[k]])
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "speed": profile.speed,
        "m_minus": profile.m_minus.to_json(),
        "m_plus": profile.m_plus.to_json(),
        "normalized": profile.normalized,
        "d_esc": profile.d_esc,
    }, indent=2))
    return sidecar


def load_front(csv_path: str | Path) -> FrontProfile:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    n = (data.shape[1] - 1) // 2
    return FrontProfile(data[:, 0].copy(), data[:, 1:1 + n].copy(), data[:, 1 + n:].copy(),
                        float(meta["speed"]), MinimumPoint.from_json(meta["m_minus"]),
                        MinimumPoint.from_json(meta["m_plus"]), bool(meta["normalized"]),
                        meta.get("d_esc"))
