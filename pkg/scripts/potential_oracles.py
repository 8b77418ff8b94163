"""Independent oracles for the potential constants frozen into tests/test_potential.py.

Each quantity is recomputed from closed forms or dense brute-force scans that
share no code with radterrace.potential.
"""
from __future__ import annotations

import numpy as np


def cubic(a):
    V = lambda u: u ** 4 / 4 - (1 + a) * u ** 3 / 3 + a * u ** 2 / 2
    dV = lambda u: u * (u - a) * (u - 1)
    d2V = lambda u: 3 * u ** 2 - 2 * (1 + a) * u + a
    return V, dV, d2V, [0.0, 1.0]


def double_well():
    V = lambda u: (u ** 2 - 1) ** 2 / 4
    dV = lambda u: u ** 3 - u
    d2V = lambda u: 3 * u ** 2 - 1
    return V, dV, d2V, [-1.0, 1.0]


def escape_scan(d2V, minima, lo, hi, step=1e-5, span=(-0.5, 1.5)):
    """Largest radius around every minimum with lo <= V'' <= hi, by dense scan."""
    u = np.arange(span[0], span[1] + step / 2, step)
    bad = (d2V(u) < lo) | (d2V(u) > hi)
    return min(np.min(np.abs(u[bad] - m)) for m in minima)


def hull_scan(V, minima, box, n=2_000_001):
    u = np.linspace(*box, n)
    q = np.inf
    for m in minima:
        keep = np.abs(u - m) > 1e-9
        q = min(q, np.min((V(u[keep]) - V(m)) / (u[keep] - m) ** 2))
    return q


def coercivity(V, dV, box, n=2_000_001):
    eps = 0.5 * min(b * dV(b) / b ** 2 for b in box)
    u = np.linspace(*box, n)
    c = max(0.0, np.max(eps * u ** 2 - u * dV(u)))
    return eps, c, np.sqrt(c / eps + 1)


def firewall_k(V, dV, minima, lmin, lmax, w, r_att, n=2_000_001):
    nu = min(1 / w, lmin / (4 * (w * lmax + 0.5)))
    u = np.linspace(-r_att, r_att, n)
    k = max(np.max(nu * (w * (V(u) - V(m)) + 0.5 * (u - m) ** 2) - (u - m) * dV(u)
                   + 0.25 * lmin * (u - m) ** 2) for m in minima)
    return nu, k + 1


def report(name, V, dV, d2V, minima, box, span):
    eig = [d2V(m) for m in minima]
    lmin, lmax = min(eig), max(eig)
    d_esc = escape_scan(d2V, minima, lmin / 2, 2 * lmax, span=span)
    q = hull_scan(V, minima, box)
    w = 1 / max(1, -4 * q)
    eps, c, r_att = coercivity(V, dV, box)
    nu, k = firewall_k(V, dV, minima, lmin, lmax, w, r_att)
    print(f"{name}: lambda=({lmin}, {lmax}) d_esc={d_esc:.10f} q_low={q:.10f} w_en0={w}")
    print(f"  eps_v={eps:.10f} c_v={c:.10f} r_att={r_att:.10f} nu_f0={nu:.10f} k_f0={k:.10f}")


if __name__ == "__main__":
    V, dV, d2V, mins = cubic(0.25)
    print("cubic closed-form d_esc:", (2.5 - np.sqrt(4.75)) / 6)
    report("cubic a=0.25", V, dV, d2V, mins, (-2.0, 3.0), (-0.5, 1.5))
    V, dV, d2V, mins = double_well()
    print("double well closed-form d_esc:", 1 - np.sqrt(2 / 3))
    report("double well", V, dV, d2V, mins, (-3.0, 3.0), (-1.5, 1.5))
