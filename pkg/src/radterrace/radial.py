"""Radially symmetric solver for u_t = -grad V(u) + (d-1)/r u_r + u_rr.

Second-order finite differences on a uniform grid r_k = k dr. At the origin
u_r = 0 and (d-1) u_r / r -> (d-1) u_rr, giving the stencil d*2(u_1-u_0)/dr^2.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .potential import PotentialSpec

SCHEMES = ("imex_cn", "explicit_rk4")
OUTER_BCS = ("neumann_zero", "dirichlet_to_minimum")
INITIAL_KINDS = ("plateau", "front_seed", "bump", "homogeneous")


class InstabilityError(RuntimeError):
    pass


class ObserverError(RuntimeError):
    pass


class BoundaryProximityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n_nodes: int
    d: int = 3

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if self.n_nodes < 16:
            raise ValueError("n_nodes must be at least 16")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")

    @classmethod
    def from_spacing(cls, r_max: float, dr: float, d: int = 3) -> "RadialGrid":
        return cls(float(r_max), int(round(r_max / dr)) + 1, int(d))

    @property
    def dr(self) -> float:
        return self.r_max / (self.n_nodes - 1)

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.dr

    def index_at(self, r: float) -> int:
        return int(min(max(round(r / self.dr), 0), self.n_nodes - 1))


@dataclass
class RadialField:
    grid: RadialGrid
    values: np.ndarray      # (n, n_nodes)
    time: float = 0.0

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != self.grid.n_nodes:
            raise ValueError("values do not match the grid")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "RadialField":
        return RadialField(self.grid, self.values.copy(), self.time)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    scheme: str = "imex_cn"
    outer_bc: str = "neumann_zero"
    outer_value: tuple | None = None
    observe_every: int = 50

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.outer_bc not in OUTER_BCS:
            raise ValueError(f"unknown outer_bc {self.outer_bc!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.observe_every < 1:
            raise ValueError("observe_every must be >= 1")
        if self.outer_bc == "dirichlet_to_minimum" and self.outer_value is None:
            raise ValueError("dirichlet_to_minimum needs outer_value")

    def validate(self, grid: RadialGrid) -> None:
        dr = grid.dr
        if self.scheme == "explicit_rk4" and self.dt > 0.2 * dr * dr * (1 + 1e-12):
            raise ValueError(f"explicit_rk4 needs dt <= 0.2 dr^2 = {0.2 * dr * dr:g}")
        if self.scheme == "imex_cn" and self.dt > 0.5 * dr * (1 + 1e-12):
            raise ValueError(f"imex_cn needs dt <= 0.5 dr = {0.5 * dr:g}")


# ---------------------------------------------------------------------------
# spatial operator


def laplacian_matrix(grid: RadialGrid, outer_bc: str = "neumann_zero") -> sp.csr_matrix:
    """Sparse radial Laplacian (d-1)/r d_r + d_rr including boundary rows."""
    N, dr, d = grid.n_nodes, grid.dr, grid.d
    h2 = dr * dr
    k = np.arange(1, N - 1)
    curv = (d - 1) / (2.0 * k * dr * dr)   # (d-1)/r_k / (2 dr)
    lower = np.zeros(N - 1)
    upper = np.zeros(N - 1)
    diag = np.zeros(N)
    lower[k - 1] = 1.0 / h2 - curv
    upper[k] = 1.0 / h2 + curv
    diag[k] = -2.0 / h2
    diag[0] = -2.0 * d / h2
    upper[0] = 2.0 * d / h2
    if outer_bc == "neumann_zero":
        diag[-1] = -2.0 / h2
        lower[-1] = 2.0 / h2
    return sp.diags([lower, diag, upper], [-1, 0, 1], format="csr")


def _apply_laplacian(u: np.ndarray, grid: RadialGrid, outer_bc: str) -> np.ndarray:
    dr, d = grid.dr, grid.d
    h2 = dr * dr
    out = np.empty_like(u)
    r = grid.r[1:-1]
    out[:, 1:-1] = ((u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / h2
                    + (d - 1) / r * (u[:, 2:] - u[:, :-2]) / (2.0 * dr))
    out[:, 0] = d * 2.0 * (u[:, 1] - u[:, 0]) / h2
    if outer_bc == "neumann_zero":
        out[:, -1] = 2.0 * (u[:, -2] - u[:, -1]) / h2
    else:
        out[:, -1] = 0.0
    return out


def _reaction(u: np.ndarray, spec: PotentialSpec) -> np.ndarray:
    return -spec.gradients(u)


def semi_discrete_rhs(field: RadialField, spec: PotentialSpec,
                      outer_bc: str = "neumann_zero") -> np.ndarray:
    """du/dt of the method-of-lines system; clamped outer node gets 0 in dirichlet mode."""
    u = field.values
    out = _apply_laplacian(u, field.grid, outer_bc) + _reaction(u, spec)
    if outer_bc != "neumann_zero":
        out[:, -1] = 0.0
    return out


# ---------------------------------------------------------------------------
# time stepping


class Stepper:
    """Holds the factorized implicit operator so repeated steps reuse it."""

    def __init__(self, grid: RadialGrid, spec: PotentialSpec, config: IntegratorConfig):
        config.validate(grid)
        self.grid, self.spec, self.config = grid, spec, config
        self.dirichlet = config.outer_bc != "neumann_zero"
        if config.scheme == "imex_cn":
            L = laplacian_matrix(grid, config.outer_bc).tocsc()
            half = 0.5 * config.dt
            eye = sp.identity(grid.n_nodes, format="csc")
            self._lu = splu((eye - half * L).tocsc())
            self._explicit = (eye + half * L).tocsr()

    def _clamp(self, u: np.ndarray) -> np.ndarray:
        if self.dirichlet:
            u[:, -1] = np.asarray(self.config.outer_value, dtype=float)
        return u

    def _reaction(self, u: np.ndarray) -> np.ndarray:
        g = _reaction(u, self.spec)
        if self.dirichlet:
            g[:, -1] = 0.0
        return g

    def advance(self, u: np.ndarray) -> np.ndarray:
        dt = self.config.dt
        if self.config.scheme == "imex_cn":
            # implicit half step for the midpoint reaction, then Crank-Nicolson
            r0 = self._reaction(u)
            u_half = self._lu.solve((u + 0.5 * dt * r0).T).T
            rhs = (self._explicit @ u.T).T + dt * self._reaction(u_half)
            return self._clamp(self._lu.solve(rhs.T).T)
        bc = self.config.outer_bc

        def f(v):
            out = _apply_laplacian(v, self.grid, bc) + self._reaction(v)
            if self.dirichlet:
                out[:, -1] = 0.0
            return out
        k1 = f(u)
        k2 = f(u + 0.5 * dt * k1)
        k3 = f(u + 0.5 * dt * k2)
        k4 = f(u + dt * k3)
        return self._clamp(u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))

    def step(self, field: RadialField) -> RadialField:
        new = self.advance(field.values)
        t = field.time + self.config.dt
        if not np.all(np.isfinite(new)):
            bad = int(np.nonzero(~np.isfinite(new))[1][0])
            raise InstabilityError(f"blow-up or instability detected at t={t:.6g}, node {bad}")
        return RadialField(field.grid, new, t)


def step(field: RadialField, spec: PotentialSpec, config: IntegratorConfig) -> RadialField:
    return Stepper(field.grid, spec, config).step(field)


Observer = Callable[[RadialField], None]


def _front_near_boundary(field: RadialField, tol: float) -> bool:
    k = int(0.8 * (field.grid.n_nodes - 1))
    dev = np.abs(field.values[:, k:] - field.values[:, -1:])
    return bool(np.max(dev) > tol)


def integrate(field: RadialField, spec: PotentialSpec, config: IntegratorConfig,
              observers: Sequence[Observer] = (), boundary_tol: float = 1e-2) -> RadialField:
    """Advance to config.t_end calling each observer at t0 and every observe_every steps."""
    if config.t_end < field.time - 1e-12:
        raise ValueError("t_end precedes the field time")
    n_steps = int(round((config.t_end - field.time) / config.dt))
    cur = field
    if config.outer_bc != "neumann_zero":
        cur = RadialField(field.grid, field.values.copy(), field.time)
        cur.values[:, -1] = np.asarray(config.outer_value, dtype=float)
    if n_steps == 0:
        _notify(observers, cur)
        return cur
    stepper = Stepper(field.grid, spec, config)
    t0 = field.time
    warned = False
    _notify(observers, cur)
    for i in range(1, n_steps + 1):
        cur = stepper.step(cur)
        cur.time = t0 + i * config.dt
        if i % config.observe_every == 0:
            _notify(observers, cur)
            if not warned and _front_near_boundary(cur, boundary_tol):
                warnings.warn(f"solution departs from the outer state beyond 0.8 r_max at "
                              f"t={cur.time:.6g}", BoundaryProximityWarning, stacklevel=2)
                warned = True
    return cur


def _notify(observers: Sequence[Observer], field: RadialField) -> None:
    for obs in observers:
        try:
            obs(field)
        except Exception as exc:
            name = getattr(obs, "name", type(obs).__name__)
            raise ObserverError(f"observer {name} failed at t={field.time:.6g}: {exc}") from exc


# ---------------------------------------------------------------------------
# initial data


def _state(x, n: int) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.size == 1 and n > 1:
        v = np.full(n, float(v[0]))
    return v


def make_initial_data(kind: str, grid: RadialGrid, *, m_outer=None, m_inner=None,
                      r0: float = 0.0, w: float = 1.0, amplitude=0.0, profile=None,
                      n: int | None = None) -> RadialField:
    """Preset initial data; every preset is flat near the origin."""
    if kind not in INITIAL_KINDS:
        raise ValueError(f"unknown initial kind {kind!r}")
    if kind == "front_seed":
        if profile is None:
            raise ValueError("front_seed needs a profile")
        if r0 >= grid.r_max or r0 + profile.xi_grid[-1] >= grid.r_max:
            raise ValueError("initial data exceeds domain")
        if r0 + profile.xi_grid[0] < 0:
            raise ValueError("front_seed profile reaches the origin; increase r0")
        return RadialField(grid, profile(grid.r - r0), 0.0)
    if m_outer is None:
        raise ValueError(f"{kind} needs m_outer")
    n = n or np.atleast_1d(np.asarray(m_outer, dtype=float)).size
    mo = _state(m_outer, n)
    r = grid.r
    if kind == "homogeneous":
        return RadialField(grid, np.repeat(mo[:, None], grid.n_nodes, axis=1), 0.0)
    if r0 + w >= grid.r_max:
        raise ValueError("initial data exceeds domain")
    if kind == "plateau":
        mi = _state(m_inner, n)
        s = np.clip((r - r0) / w, 0.0, 1.0)
        ramp = 0.5 * (1.0 - np.cos(math.pi * s))
        return RadialField(grid, mi[:, None] + (mo - mi)[:, None] * ramp[None, :], 0.0)
    amp = _state(amplitude, n)
    g = np.exp(-((r - r0) / w) ** 2)
    return RadialField(grid, mo[:, None] + amp[:, None] * g[None, :], 0.0)


# ---------------------------------------------------------------------------
# snapshot I/O


def save_snapshot(field: RadialField, path: str | Path) -> Path:
    path = Path(path)
    g = field.grid
    with open(path, "w", newline="") as fh:
        fh.write(f"# t={field.time!r} d={g.d} dr={g.dr!r}\n")
        w = csv.writer(fh)
        w.writerow(["r"] + [f"u_{j + 1}" for j in range(field.n)])
        for k, rk in enumerate(g.r):
            w.writerow([repr(float(rk))] + [repr(float(x)) for x in field.values[:, k]])
    return path


def load_snapshot(path: str | Path) -> RadialField:
    path = Path(path)
    with open(path) as fh:
        meta = dict(item.split("=") for item in fh.readline().lstrip("#").split())
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
    grid = RadialGrid(float(data[-1, 0]), data.shape[0], int(meta["d"]))
    return RadialField(grid, data[:, 1:].T.copy(), float(meta["t"]))


# ---------------------------------------------------------------------------
# energy bookkeeping


def radial_derivative(field: RadialField, outer_bc: str = "neumann_zero") -> np.ndarray:
    """Central differences, u_r(0) = 0 and one-sided at a clamped outer node."""
    u, dr = field.values, field.grid.dr
    ur = np.empty_like(u)
    ur[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2 * dr)
    ur[:, 0] = 0.0
    if outer_bc == "neumann_zero":
        ur[:, -1] = 0.0
    else:
        ur[:, -1] = (3 * u[:, -1] - 4 * u[:, -2] + u[:, -3]) / (2 * dr)
    return ur


def radial_energy(field: RadialField, spec: PotentialSpec, v_ref: float,
                  outer_bc: str = "neumann_zero") -> float:
    """Trapezoid of r^{d-1}(u_r^2/2 + V(u) - v_ref) over the whole grid."""
    g = field.grid
    ur = radial_derivative(field, outer_bc)
    dens = 0.5 * np.sum(ur * ur, axis=0) + spec.values(field.values) - v_ref
    return float(np.trapezoid(g.r ** (g.d - 1) * dens, dx=g.dr))


def dissipation(field: RadialField, spec: PotentialSpec, outer_bc: str = "neumann_zero") -> float:
    g = field.grid
    ut = semi_discrete_rhs(field, spec, outer_bc)
    return float(np.trapezoid(g.r ** (g.d - 1) * np.sum(ut * ut, axis=0), dx=g.dr))


def boundary_flux(field: RadialField, spec: PotentialSpec, outer_bc: str = "neumann_zero") -> float:
    """r_max^{d-1} u_r . u_t at the outer node (zero for both supported conditions)."""
    g = field.grid
    ur = radial_derivative(field, outer_bc)[:, -1]
    ut = semi_discrete_rhs(field, spec, outer_bc)[:, -1]
    return float(g.r_max ** (g.d - 1) * np.dot(ur, ut))


class TrajectoryRecorder:
    """Observer that stores copies of the observed snapshots in time order."""

    name = "recorder"

    def __init__(self):
        self.fields: list[RadialField] = []

    def __call__(self, field: RadialField) -> None:
        self.fields.append(field.copy())

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    @property
    def times(self) -> np.ndarray:
        return np.array([f.time for f in self.fields])

    @property
    def dt_obs(self) -> float:
        t = self.times
        if t.size < 2:
            raise ValueError("need at least two snapshots")
        return float(t[1] - t[0])

    def window(self, t_a: float, t_b: float) -> list[RadialField]:
        return [f for f in self.fields if t_a - 1e-9 <= f.time <= t_b + 1e-9]
