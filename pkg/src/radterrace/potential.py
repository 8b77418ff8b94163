"""Potentials V on R^n and the constants derived from them.

A potential is a bundle of three callables (value, gradient, Hessian). All
downstream formulas subtract V(m) explicitly; no minimum is assumed to sit
at the origin or at level zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Box = Sequence[tuple[float, float]]

NEWTON_TOL = 1e-12
DEDUP_DIST = 1e-6
DEGENERATE_EIG = 1e-8


class DegeneratePotentialError(ValueError):
    """A critical point with a (numerically) singular Hessian was found."""


class CoercivityError(ValueError):
    pass


@dataclass(frozen=True)
class PotentialSpec:
    n: int
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    params: dict = field(default_factory=dict)
    # Vectorised forms acting on arrays of shape (n, N); used by the PDE solver.
    eval_many: Callable[[np.ndarray], np.ndarray] | None = None
    grad_many: Callable[[np.ndarray], np.ndarray] | None = None
    hess_many: Callable[[np.ndarray], np.ndarray] | None = None

    def values(self, u: np.ndarray) -> np.ndarray:
        """V evaluated column-wise on an (n, N) array."""
        if self.eval_many is not None:
            return self.eval_many(u)
        return np.array([self.eval(u[:, k]) for k in range(u.shape[1])])

    def gradients(self, u: np.ndarray) -> np.ndarray:
        """grad V evaluated column-wise on an (n, N) array."""
        if self.grad_many is not None:
            return self.grad_many(u)
        return np.stack([self.grad(u[:, k]) for k in range(u.shape[1])], axis=1)

    def hessians(self, u: np.ndarray) -> np.ndarray:
        """D^2V evaluated column-wise, shape (N, n, n)."""
        if self.hess_many is not None:
            return self.hess_many(u)
        return np.stack([np.atleast_2d(self.hess(u[:, k])) for k in range(u.shape[1])])


@dataclass(frozen=True)
class MinimumPoint:
    location: np.ndarray
    value: float
    hess_eigenvalues: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "location": [float(x) for x in self.location],
            "value": float(self.value),
            "eigenvalues": [float(x) for x in self.hess_eigenvalues],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MinimumPoint":
        return cls(np.asarray(doc["location"], dtype=float), float(doc["value"]),
                   tuple(float(x) for x in doc["eigenvalues"]))


@dataclass(frozen=True)
class PotentialAnalysis:
    n: int
    minima: list[MinimumPoint]
    lambda_min: float
    lambda_max: float
    d_esc: float
    q_low_hull: float
    w_en0: float
    eps_v: float
    c_v: float
    r_att: float
    nu_f0: float
    k_f0: float

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "minima": [m.to_json() for m in self.minima],
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "d_esc": self.d_esc,
            "q_low_hull": self.q_low_hull,
            "w_en0": self.w_en0,
            "eps_v": self.eps_v,
            "c_v": self.c_v,
            "r_att": self.r_att,
            "nu_f0": self.nu_f0,
            "k_f0": self.k_f0,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PotentialAnalysis":
        kw = {k: float(doc[k]) for k in ("lambda_min", "lambda_max", "d_esc", "q_low_hull",
                                         "w_en0", "eps_v", "c_v", "r_att", "nu_f0", "k_f0")}
        return cls(n=int(doc["n"]), minima=[MinimumPoint.from_json(m) for m in doc["minima"]], **kw)

    def nearest_minimum(self, u: np.ndarray) -> MinimumPoint:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return min(self.minima, key=lambda m: float(np.linalg.norm(u - m.location)))


# ---------------------------------------------------------------------------
# sampling helpers


def _as_box(box: Box, n: int) -> list[tuple[float, float]]:
    box = [(float(lo), float(hi)) for lo, hi in box]
    if len(box) != n:
        raise ValueError(f"box has {len(box)} axes, potential has n={n}")
    for lo, hi in box:
        if not hi > lo:
            raise ValueError("empty search box")
    return box


def _grid_points(box: Box, per_axis: int) -> np.ndarray:
    """Tensor grid over the box as an (n, N) array."""
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=0)


def _hull_samples_per_axis(n: int) -> int:
    return {1: 10_000, 2: 256}.get(n, 32)


def _boundary_points(box: Box, per_edge: int) -> np.ndarray:
    n = len(box)
    if n == 1:
        return np.array([[box[0][0], box[0][1]]])
    pts = []
    for axis in range(n):
        for side in (0, 1):
            sub = [b for i, b in enumerate(box) if i != axis]
            face = _grid_points(sub, per_edge)
            full = np.insert(face, axis, box[axis][side], axis=0)
            pts.append(full)
    return np.concatenate(pts, axis=1)


def _directions(n: int, count: int = 64) -> np.ndarray:
    """Deterministic unit directions, shape (count, n)."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + 5 ** 0.5) * k
        s = np.sqrt(1 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(12345)
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# minima


def _damped_newton(spec: PotentialSpec, x0: np.ndarray, max_iter: int = 100) -> np.ndarray | None:
    x = x0.astype(float).copy()
    g = np.atleast_1d(spec.grad(x))
    for _ in range(max_iter):
        gn = np.linalg.norm(g)
        if gn <= NEWTON_TOL * (1.0 + np.linalg.norm(x)):
            return x
        H = np.atleast_2d(spec.hess(x))
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = g
        alpha = 1.0
        while alpha > 1e-8:
            x_new = x - alpha * step
            g_new = np.atleast_1d(spec.grad(x_new))
            if np.linalg.norm(g_new) < gn:
                break
            alpha *= 0.5
        else:
            return None
        x, g = x_new, g_new
    gn = np.linalg.norm(g)
    return x if gn <= NEWTON_TOL * (1.0 + np.linalg.norm(x)) else None


def find_minima(spec: PotentialSpec, box: Box, grid_per_axis: int = 21) -> list[MinimumPoint]:
    """All nondegenerate local minima reachable by Newton from a seed grid.

    Raises DegeneratePotentialError if any converged critical point has a
    Hessian eigenvalue of modulus below 1e-8.
    """
    box = _as_box(box, spec.n)
    if grid_per_axis < 3:
        raise ValueError("grid_per_axis must be >= 3")
    seeds = _grid_points(box, grid_per_axis)
    found: list[MinimumPoint] = []
    critical: list[np.ndarray] = []
    for k in range(seeds.shape[1]):
        x = _damped_newton(spec, seeds[:, k])
        if x is None:
            continue
        if any(lo - DEDUP_DIST > xi or xi > hi + DEDUP_DIST for xi, (lo, hi) in zip(x, box)):
            continue
        if any(np.linalg.norm(x - c) < DEDUP_DIST for c in critical):
            continue
        critical.append(x)
        eig = np.linalg.eigvalsh(np.atleast_2d(spec.hess(x)))
        if np.min(np.abs(eig)) < DEGENERATE_EIG:
            raise DegeneratePotentialError(
                f"degenerate critical point at {x.tolist()} (eigenvalues {eig.tolist()})")
        if np.all(eig > 0):
            found.append(MinimumPoint(x, float(spec.eval(x)), tuple(sorted(float(e) for e in eig))))
    found.sort(key=lambda m: m.value)
    return found


def eigen_bounds(minima: Sequence[MinimumPoint]) -> tuple[float, float]:
    if not minima:
        raise ValueError("no minima")
    return (min(m.hess_eigenvalues[0] for m in minima),
            max(m.hess_eigenvalues[-1] for m in minima))


# ---------------------------------------------------------------------------
# escape distance


def _ball_ok(spec: PotentialSpec, m: np.ndarray, d: float, lo: float, hi: float,
             dirs: np.ndarray, n_radii: int) -> bool:
    radii = d * np.arange(1, n_radii + 1) / n_radii
    pts = m[:, None] + (dirs[:, :, None] * radii[None, None, :]).transpose(1, 0, 2).reshape(spec.n, -1)
    eig = np.linalg.eigvalsh(spec.hessians(pts))
    return bool(np.all(eig[:, 0] >= lo) and np.all(eig[:, -1] <= hi))


def escape_distance(spec: PotentialSpec, minima: Sequence[MinimumPoint], lambda_min: float,
                    lambda_max: float, box: Box | None = None, rel_tol: float = 1e-6) -> float:
    """Largest radius around every minimum on which D^2V keeps its spectrum
    inside [lambda_min/2, 2*lambda_max].

    The search is capped at half the diameter of ``box`` (or 10 when no box
    is given), which matters only for potentials with bounded curvature.
    """
    lo_eig, hi_eig = lambda_min / 2.0, 2.0 * lambda_max
    if box is not None:
        box = _as_box(box, spec.n)
        cap = 0.5 * math.sqrt(sum((b - a) ** 2 for a, b in box))
    else:
        cap = 10.0
    dirs = _directions(spec.n)
    # n = 1: dense radial scan instead of 64 radii
    n_radii = 2000 if spec.n == 1 else 64
    best = cap
    for m in minima:
        loc = np.asarray(m.location, dtype=float)
        if _ball_ok(spec, loc, best, lo_eig, hi_eig, dirs, n_radii):
            continue
        lo, hi = 0.0, best
        while hi - lo > rel_tol * hi:
            mid = 0.5 * (lo + hi)
            if _ball_ok(spec, loc, mid, lo_eig, hi_eig, dirs, n_radii):
                lo = mid
            else:
                hi = mid
        best = lo
    if best < 1e-8:
        raise ValueError("no admissible escape distance >= 1e-8")
    return best


# ---------------------------------------------------------------------------
# lower quadratic hull, coercivity


def low_hull_coefficient(spec: PotentialSpec, minima: Sequence[MinimumPoint],
                         box: Box) -> tuple[float, float]:
    """(q_low_hull, w_en0) from a grid scan of (V(u)-V(m))/|u-m|^2."""
    box = _as_box(box, spec.n)
    pts = _grid_points(box, _hull_samples_per_axis(spec.n))
    vals = spec.values(pts)
    q = math.inf
    for m in minima:
        diff = pts - np.asarray(m.location)[:, None]
        dist2 = np.sum(diff * diff, axis=0)
        keep = dist2 > 1e-24
        q = min(q, float(np.min((vals[keep] - m.value) / dist2[keep])))
    w = 1.0 / max(1.0, -4.0 * q)
    return q, w


def coercivity_constants(spec: PotentialSpec, box: Box) -> tuple[float, float, float]:
    """(eps_v, c_v, r_att) with u.grad V(u) >= eps_v |u|^2 - c_v on the box."""
    box = _as_box(box, spec.n)
    bnd = _boundary_points(box, 256)
    ug = np.sum(bnd * spec.gradients(bnd), axis=0)
    if np.any(ug <= 0):
        raise CoercivityError("potential not coercive on given box")
    eps_v = 0.5 * float(np.min(ug / np.sum(bnd * bnd, axis=0)))
    pts = _grid_points(box, _hull_samples_per_axis(spec.n))
    ug_in = np.sum(pts * spec.gradients(pts), axis=0)
    c_v = max(0.0, float(np.max(eps_v * np.sum(pts * pts, axis=0) - ug_in)))
    return eps_v, c_v, math.sqrt(c_v / eps_v + 1.0)


def _ball_samples(n: int, radius: float) -> np.ndarray:
    per = _hull_samples_per_axis(n)
    pts = _grid_points([(-radius, radius)] * n, per)
    return pts[:, np.sum(pts * pts, axis=0) <= radius * radius * (1 + 1e-12)]


def firewall_rate_constants(spec: PotentialSpec, minima: Sequence[MinimumPoint],
                            lambda_min: float, lambda_max: float, w_en0: float,
                            r_att: float) -> tuple[float, float]:
    """(nu_F0, K_F0) for the laboratory-frame firewall decay estimate.

    K_F0 is maximised over the attracting ball and over every minimum taken as
    the reference state, so one constant serves whichever minimum is outer.
    """
    nu = min(1.0 / w_en0, lambda_min / (4.0 * (w_en0 * lambda_max + 0.5)))
    pts = _ball_samples(spec.n, r_att)
    vals = spec.values(pts)
    grads = spec.gradients(pts)
    k = -math.inf
    for m in minima:
        w = pts - np.asarray(m.location)[:, None]
        w2 = np.sum(w * w, axis=0)
        expr = nu * (w_en0 * (vals - m.value) + 0.5 * w2) - np.sum(w * grads, axis=0) \
            + 0.25 * lambda_min * w2
        k = max(k, float(np.max(expr)))
    return nu, k + 1.0


def analyze_potential(spec: PotentialSpec, box: Box, grid_per_axis: int = 21) -> PotentialAnalysis:
    minima = find_minima(spec, box, grid_per_axis)
    lmin, lmax = eigen_bounds(minima)
    d_esc = escape_distance(spec, minima, lmin, lmax, box)
    q, w = low_hull_coefficient(spec, minima, box)
    eps_v, c_v, r_att = coercivity_constants(spec, box)
    nu, k = firewall_rate_constants(spec, minima, lmin, lmax, w, r_att)
    return PotentialAnalysis(spec.n, minima, lmin, lmax, d_esc, q, w, eps_v, c_v, r_att, nu, k)


# ---------------------------------------------------------------------------
# catalogue


def _scalar_spec(name: str, coeffs: np.ndarray, params: dict) -> PotentialSpec:
    """Scalar polynomial potential from ascending coefficients of V."""
    p = np.polynomial.Polynomial(coeffs)
    dp, ddp = p.deriv(), p.deriv(2)
    return PotentialSpec(
        n=1,
        eval=lambda u: float(p(np.asarray(u).reshape(-1)[0])),
        grad=lambda u: np.array([dp(np.asarray(u).reshape(-1)[0])]),
        hess=lambda u: np.array([[ddp(np.asarray(u).reshape(-1)[0])]]),
        name=name,
        params=dict(params),
        eval_many=lambda U: p(U[0]),
        grad_many=lambda U: dp(U[0])[None, :],
        hess_many=lambda U: ddp(U[0])[:, None, None],
    )


def cubic_reaction(a: float = 0.25) -> PotentialSpec:
    """V' = u(u-a)(u-1): minima 0 and 1, V(1) = (2a-1)/12."""
    return _scalar_spec("cubic", np.array([0.0, 0.0, a / 2, -(1 + a) / 3, 0.25]), {"a": a})


def double_well(eps: float = 0.0) -> PotentialSpec:
    """(u^2-1)^2/4 - eps*u."""
    return _scalar_spec("double_well", np.array([0.25, -eps, -0.5, 0.0, 0.25]), {"eps": eps})


def quadratic(k: float = 1.0) -> PotentialSpec:
    return _scalar_spec("quadratic", np.array([0.0, 0.0, 0.5 * k]), {"k": k})


def triple_well(s1: float = -0.25, s2: float = -1.45, scale: float = 1.0) -> PotentialSpec:
    """Sextic well with minima m2=-2 < m1=-1 < m0=0.

    V' = scale * u (u-s1) (u+1) (u-s2) (u+2) with barriers s1 in (-1, 0) and
    s2 in (-2, -1). Moving s1 toward 0 deepens m1 relative to m0; moving s2
    toward -1 deepens m2 relative to m1.
    """
    if not (-1 < s1 < 0 and -2 < s2 < -1):
        raise ValueError("need -1 < s1 < 0 and -2 < s2 < -1")
    roots = [0.0, s1, -1.0, s2, -2.0]
    dv = scale * np.polynomial.Polynomial.fromroots(roots)
    v = dv.integ()
    return _scalar_spec("triple_well", v.coef, {"s1": s1, "s2": s2, "scale": scale})


def coupled_double_well(coupling: float = 0.0) -> PotentialSpec:
    """n = 2: W(u1) + W(u2) + coupling*u1*u2 with W the symmetric double well."""
    def ev(u):
        u = np.asarray(u, dtype=float)
        return float(0.25 * (u[0] ** 2 - 1) ** 2 + 0.25 * (u[1] ** 2 - 1) ** 2 + coupling * u[0] * u[1])

    def gr(u):
        u = np.asarray(u, dtype=float)
        return np.array([u[0] ** 3 - u[0] + coupling * u[1], u[1] ** 3 - u[1] + coupling * u[0]])

    def he(u):
        u = np.asarray(u, dtype=float)
        return np.array([[3 * u[0] ** 2 - 1, coupling], [coupling, 3 * u[1] ** 2 - 1]])

    def ev_many(U):
        return 0.25 * (U[0] ** 2 - 1) ** 2 + 0.25 * (U[1] ** 2 - 1) ** 2 + coupling * U[0] * U[1]

    def gr_many(U):
        return np.stack([U[0] ** 3 - U[0] + coupling * U[1], U[1] ** 3 - U[1] + coupling * U[0]])

    def he_many(U):
        H = np.empty((U.shape[1], 2, 2))
        H[:, 0, 0] = 3 * U[0] ** 2 - 1
        H[:, 1, 1] = 3 * U[1] ** 2 - 1
        H[:, 0, 1] = H[:, 1, 0] = coupling
        return H

    return PotentialSpec(2, ev, gr, he, "coupled_double_well", {"coupling": coupling},
                         ev_many, gr_many, he_many)


BUILTINS: dict[str, Callable[..., PotentialSpec]] = {
    "cubic": cubic_reaction,
    "double_well": double_well,
    "quadratic": quadratic,
    "triple_well": triple_well,
    "coupled_double_well": coupled_double_well,
}

DEFAULT_BOXES: dict[str, list[tuple[float, float]]] = {
    "cubic": [(-2.0, 3.0)],
    "double_well": [(-3.0, 3.0)],
    "quadratic": [(-2.0, 2.0)],
    "triple_well": [(-3.0, 1.0)],
    "coupled_double_well": [(-2.0, 2.0), (-2.0, 2.0)],
}


def builtin_potentials() -> dict[str, Callable[..., PotentialSpec]]:
    return dict(BUILTINS)


def make_potential(name: str, **params: float) -> PotentialSpec:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown potential {name!r}; known: {sorted(BUILTINS)}") from None
    return factory(**params)


def check_derivatives(spec: PotentialSpec, points: np.ndarray, h: float = 1e-5) -> tuple[float, float]:
    """Worst relative mismatch of grad vs FD(eval) and hess vs FD(grad)."""
    worst_g = worst_h = 0.0
    for x in np.atleast_2d(points):
        g = np.atleast_1d(spec.grad(x))
        H = np.atleast_2d(spec.hess(x))
        fd_g = np.empty(spec.n)
        fd_h = np.empty((spec.n, spec.n))
        for i in range(spec.n):
            e = np.zeros(spec.n)
            e[i] = h
            fd_g[i] = (spec.eval(x + e) - spec.eval(x - e)) / (2 * h)
            fd_h[:, i] = (np.atleast_1d(spec.grad(x + e)) - np.atleast_1d(spec.grad(x - e))) / (2 * h)
        worst_g = max(worst_g, np.linalg.norm(g - fd_g) / (1.0 + np.linalg.norm(g)))
        worst_h = max(worst_h, np.linalg.norm(H - fd_h) / (1.0 + np.linalg.norm(H)),
                      np.linalg.norm(H - H.T))
    return worst_g, worst_h
