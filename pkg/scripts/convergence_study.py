"""Self-convergence of the radial solver and of the discrete energy identity.

Runs the d = 3 invasion plateau on successively halved (dr, dt) and prints the
successive-difference ratios of the final state and the worst energy-identity
mismatch. Second order shows up as ratios near 4.

Usage: python scripts/convergence_study.py [--levels 3] [--t-end 60]
"""
from __future__ import annotations

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from radterrace.config import load_config
from radterrace.diagnostics import EnergyIdentityObserver
from radterrace.experiment import build_scenario
from radterrace.radial import integrate

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "invasion_d3.cfg"


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--t-end", type=float, default=60.0)
    args = p.parse_args()
    cfg = load_config(CONFIG, {"integrator.t_end": args.t_end})
    finals, worst = [], []
    for k in range(args.levels):
        sc = build_scenario(cfg, refine=k)
        integ = replace(sc.integrator, observe_every=sc.integrator.observe_every * 2 ** k)
        obs = EnergyIdentityObserver(sc.spec, sc.m_outer.value, integ.outer_bc)
        final = integrate(sc.initial, sc.spec, integ, [obs])
        t, m = obs.mismatch("tangent")
        finals.append(final.values[0])
        worst.append(float(np.max(m[t > 0])))
        print(f"level {k}: dr={sc.grid.dr:g} dt={integ.dt:g} worst mismatch={worst[-1]:.3e}")
    diffs = [np.max(np.abs(a - b[::2])) for a, b in zip(finals, finals[1:])]
    for k in range(len(diffs) - 1):
        print(f"state ratio {k}: {diffs[k] / diffs[k + 1]:.4f}")
    for k in range(len(worst) - 1):
        print(f"mismatch ratio {k}: {worst[k] / worst[k + 1]:.4f}")


if __name__ == "__main__":
    main()
