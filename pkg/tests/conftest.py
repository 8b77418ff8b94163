from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from radterrace.config import load_config
from radterrace.diagnostics import EnergyIdentityObserver, EscapeTracker
from radterrace.experiment import build_scenario, run_audit_levels, run_scenario
from radterrace.potential import DEFAULT_BOXES, analyze_potential, cubic_reaction
from radterrace.radial import TrajectoryRecorder, integrate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
NAGUMO_SPEED = np.sqrt(2.0) * (0.5 - 0.25)


def config_path(name: str) -> Path:
    return CONFIGS / f"{name}.cfg"


@pytest.fixture(scope="session")
def cubic():
    spec = cubic_reaction(0.25)
    return spec, analyze_potential(spec, DEFAULT_BOXES["cubic"])


@pytest.fixture(scope="session")
def cubic_minima(cubic):
    _, an = cubic
    m0 = min(an.minima, key=lambda m: abs(m.location[0]))
    m1 = min(an.minima, key=lambda m: abs(m.location[0] - 1.0))
    return m0, m1


class InvasionRun:
    """The d = 3 invasion scenario at a given refinement, with its observers."""

    def __init__(self, refine: int = 0, record: bool = True):
        cfg = load_config(config_path("invasion_d3"))
        sc = build_scenario(cfg, refine=refine)
        integ = sc.integrator
        # keep the observation spacing at 1 time unit on every level
        integ = replace(integ, observe_every=integ.observe_every * 2 ** refine)
        self.scenario = sc
        self.tracker = EscapeTracker(sc.m_outer, sc.analysis.d_esc, sc.spec, sc.firewall)
        self.energy = EnergyIdentityObserver(sc.spec, sc.m_outer.value, integ.outer_bc)
        self.recorder = TrajectoryRecorder() if record else None
        obs = [self.energy] + ([self.tracker, self.recorder] if record else [])
        self.final = integrate(sc.initial, sc.spec, integ, obs)


@pytest.fixture(scope="session")
def invasion_run():
    return InvasionRun(0)


@pytest.fixture(scope="session")
def invasion_run_fine():
    return InvasionRun(1, record=False)


@pytest.fixture(scope="session")
def triple_run():
    cfg = load_config(config_path("terrace_triple"))
    sc = build_scenario(cfg)
    return run_scenario(sc, ["tracker"], record=True)


@pytest.fixture(scope="session")
def audit_levels():
    return {name: run_audit_levels(load_config(config_path(name)), 3)
            for name in ("invasion_audit_d3", "decay_d3")}


@pytest.fixture(scope="session")
def residual_run():
    cfg = load_config(config_path("residual_energy"))
    return run_scenario(build_scenario(cfg), cfg.observers + ["tracker"], record=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

