import warnings

import numpy as np
import pytest

from radterrace.diagnostics import EnergyIdentityObserver
from radterrace.potential import PotentialSpec, cubic_reaction, quadratic
from radterrace.radial import (BoundaryProximityWarning, InstabilityError, IntegratorConfig,
                               ObserverError, RadialField, RadialGrid, TrajectoryRecorder,
                               integrate, laplacian_matrix, load_snapshot, make_initial_data,
                               save_snapshot, semi_discrete_rhs, step)

SPEC = cubic_reaction(0.25)


def plateau(grid, r0=10.0, w=5.0):
    return make_initial_data("plateau", grid, m_outer=[0.0], m_inner=[1.0], r0=r0, w=w)


def test_grid_layout():
    g = RadialGrid.from_spacing(10.0, 0.1, 3)
    assert g.n_nodes == 101 and g.dr == pytest.approx(0.1)
    assert g.r[0] == 0.0 and g.r[-1] == pytest.approx(10.0)
    with pytest.raises(ValueError):
        RadialGrid(10.0, 8)
    with pytest.raises(ValueError):
        RadialGrid(10.0, 100, 0)


def test_rhs_vanishes_on_minimum():
    g = RadialGrid(20.0, 201, 3)
    for value in (0.0, 1.0):
        f = make_initial_data("homogeneous", g, m_outer=[value])
        assert np.max(np.abs(semi_discrete_rhs(f, SPEC))) <= 1e-14


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_laplacian_of_radial_quadratic(d):
    g = RadialGrid(5.0, 51, d)
    alpha = 0.7
    f = RadialField(g, alpha * g.r ** 2)
    rhs = semi_discrete_rhs(f, quadratic(0.0))
    # exact for quadratics at the origin and at every interior node
    assert np.allclose(rhs[0, :-1], 2 * alpha * d, rtol=1e-12)


def test_d1_has_no_curvature_term(rng):
    g = RadialGrid(10.0, 101, 1)
    u = rng.standard_normal((1, 101))
    rhs = semi_discrete_rhs(RadialField(g, u), SPEC)
    h2 = g.dr ** 2
    plain = (u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]) / h2 - SPEC.gradients(u)[:, 1:-1]
    assert np.max(np.abs(rhs[:, 1:-1] - plain)) <= 1e-12 * np.max(np.abs(plain))


def test_matrix_matches_rhs(rng):
    g = RadialGrid(10.0, 101, 3)
    u = rng.standard_normal((1, 101))
    L = laplacian_matrix(g)
    lin = semi_discrete_rhs(RadialField(g, u), quadratic(0.0))
    assert np.allclose(L @ u[0], lin[0], rtol=1e-12, atol=1e-10)


@pytest.mark.parametrize("scheme,dt", [("imex_cn", 0.05), ("explicit_rk4", 0.002)])
def test_minimum_is_fixed_point(scheme, dt):
    g = RadialGrid(20.0, 201, 3)
    f = make_initial_data("homogeneous", g, m_outer=[1.0])
    out = integrate(f, SPEC, IntegratorConfig(dt=dt, t_end=1.0, scheme=scheme))
    assert np.max(np.abs(out.values - 1.0)) <= 1e-13


def test_heat_mass_conservation():
    g = RadialGrid.from_spacing(40.0, 0.05, 3)
    f = make_initial_data("bump", g, m_outer=[0.0], r0=10.0, w=2.0, amplitude=[1.0])
    heat = quadratic(0.0)
    out = integrate(f, heat, IntegratorConfig(dt=0.0125, t_end=1.0))
    mass = [np.trapezoid(g.r ** 2 * x.values[0], dx=g.dr) for x in (f, out)]
    assert abs(mass[1] - mass[0]) <= 1e-6 * abs(mass[0])


def test_second_order_self_convergence():
    finals = []
    for dr in (0.2, 0.1, 0.05, 0.025):
        g = RadialGrid.from_spacing(60.0, dr, 3)
        finals.append(integrate(plateau(g), SPEC, IntegratorConfig(dt=0.25 * dr, t_end=20.0)))
    diffs = [np.max(np.abs(a.values[0] - b.values[0][::2])) for a, b in zip(finals, finals[1:])]
    ratios = [diffs[k] / diffs[k + 1] for k in range(2)]
    assert all(3.5 <= q <= 4.5 for q in ratios), ratios


def test_rk4_agrees_with_imex():
    g = RadialGrid.from_spacing(30.0, 0.2, 3)
    a = integrate(plateau(g, 5.0, 3.0), SPEC, IntegratorConfig(dt=0.05, t_end=2.0))
    b = integrate(plateau(g, 5.0, 3.0), SPEC,
                  IntegratorConfig(dt=0.008, t_end=2.0, scheme="explicit_rk4"))
    assert np.max(np.abs(a.values - b.values)) <= 1e-3


def test_origin_regularity():
    g = RadialGrid.from_spacing(60.0, 0.05, 3)
    f = make_initial_data("bump", g, m_outer=[0.0], r0=0.0, w=5.0, amplitude=[0.05])
    u = integrate(f, SPEC, IntegratorConfig(dt=0.0125, t_end=5.0)).values[0]
    assert abs(-3 * u[0] + 4 * u[1] - u[2]) / (2 * g.dr) <= 1e-6


def test_attracting_ball(cubic):
    _, an = cubic
    g = RadialGrid.from_spacing(30.0, 0.1, 3)
    f = make_initial_data("bump", g, m_outer=[0.0], r0=10.0, w=3.0, amplitude=[2 * an.r_att])
    rec = TrajectoryRecorder()
    integrate(f, SPEC, IntegratorConfig(dt=0.02, t_end=10.0, observe_every=5), [rec])
    sup = np.array([np.max(np.abs(x.values)) for x in rec.fields])
    inside = sup <= an.r_att + 0.05
    t_burn = rec.times[np.argmax(inside)]
    assert inside[np.argmax(inside):].all()
    assert t_burn <= 1.0


def test_dirichlet_clamps_outer_node():
    g = RadialGrid(20.0, 201, 3)
    f = plateau(g, 5.0, 3.0)
    cfg = IntegratorConfig(dt=0.05, t_end=1.0, outer_bc="dirichlet_to_minimum", outer_value=(0.0,))
    out = integrate(f, SPEC, cfg)
    assert out.values[0, -1] == 0.0


def test_config_limits():
    g = RadialGrid.from_spacing(10.0, 0.1, 3)
    with pytest.raises(ValueError, match="explicit_rk4"):
        IntegratorConfig(dt=0.01, t_end=1.0, scheme="explicit_rk4").validate(g)
    with pytest.raises(ValueError, match="imex_cn"):
        IntegratorConfig(dt=0.06, t_end=1.0).validate(g)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.01, t_end=1.0, scheme="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.01, t_end=1.0, outer_bc="dirichlet_to_minimum")


def test_blow_up_detected():
    # V = -u^4 drives u' = 4u^3, which blows up in finite time
    spec = PotentialSpec(1, lambda u: -u[0] ** 4, lambda u: np.array([-4 * u[0] ** 3]),
                         lambda u: np.array([[-12 * u[0] ** 2]]))
    g = RadialGrid(10.0, 101, 3)
    f = make_initial_data("homogeneous", g, m_outer=[2.0])
    with np.errstate(all="ignore"), pytest.raises(InstabilityError, match="blow-up"):
        integrate(f, spec, IntegratorConfig(dt=0.05, t_end=5.0))


def test_observer_failure_has_context():
    g = RadialGrid(10.0, 101, 3)
    f = make_initial_data("homogeneous", g, m_outer=[0.0])

    def broken(_):
        raise KeyError("boom")
    with pytest.raises(ObserverError, match="failed at t=0"):
        integrate(f, SPEC, IntegratorConfig(dt=0.05, t_end=1.0), [broken])


def test_empty_run_returns_input():
    g = RadialGrid(10.0, 101, 3)
    f = plateau(g, 3.0, 2.0)
    seen = []
    out = integrate(f, SPEC, IntegratorConfig(dt=0.05, t_end=0.0), [seen.append])
    assert np.array_equal(out.values, f.values) and len(seen) == 1
    with pytest.raises(ValueError):
        integrate(out, SPEC, IntegratorConfig(dt=0.05, t_end=-1.0))


def test_energy_observer_zero_on_minimum():
    g = RadialGrid(10.0, 101, 3)
    f = make_initial_data("homogeneous", g, m_outer=[0.0])
    obs = EnergyIdentityObserver(SPEC, 0.0)
    integrate(f, SPEC, IntegratorConfig(dt=0.05, t_end=1.0, observe_every=5), [obs])
    assert obs.E == [0.0] * len(obs.t) and obs.D == [0.0] * len(obs.t)


def test_step_is_deterministic():
    g = RadialGrid(30.0, 301, 3)
    f = plateau(g, 5.0, 3.0)
    cfg = IntegratorConfig(dt=0.05, t_end=0.05)
    a, b = step(f, SPEC, cfg), step(f, SPEC, cfg)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.time == pytest.approx(0.05)


def test_boundary_proximity_warning():
    g = RadialGrid.from_spacing(30.0, 0.2, 3)
    f = plateau(g, 22.0, 3.0)
    with pytest.warns(BoundaryProximityWarning):
        integrate(f, SPEC, IntegratorConfig(dt=0.05, t_end=2.0, observe_every=5))


def test_initial_data_presets():
    g = RadialGrid(50.0, 501, 3)
    f = plateau(g, 20.0, 5.0)
    assert f.values[0, g.index_at(20.0)] == 1.0 and f.values[0, g.index_at(25.0)] == 0.0
    assert np.all(np.diff(f.values[0]) <= 0)
    b = make_initial_data("bump", g, m_outer=[0.0], r0=20.0, w=3.0, amplitude=[0.05])
    assert np.max(b.values) == pytest.approx(0.05)
    with pytest.raises(ValueError, match="initial data exceeds domain"):
        plateau(g, 46.0, 5.0)
    with pytest.raises(ValueError, match="unknown initial kind"):
        make_initial_data("step", g, m_outer=[0.0])


def test_snapshot_roundtrip(tmp_path, rng):
    g = RadialGrid(10.0, 101, 2)
    f = RadialField(g, rng.standard_normal((2, 101)), 3.25)
    path = save_snapshot(f, tmp_path / "s.csv")
    assert path.read_text().splitlines()[1] == "r,u_1,u_2"
    back = load_snapshot(path)
    assert back.time == 3.25 and back.grid == g
    assert np.array_equal(back.values, f.values)


def test_recorder_window():
    g = RadialGrid(10.0, 101, 3)
    rec = TrajectoryRecorder()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        integrate(plateau(g, 3.0, 2.0), SPEC, IntegratorConfig(dt=0.05, t_end=2.0, observe_every=4),
                  [rec])
    assert len(rec) == 11 and rec.dt_obs == pytest.approx(0.2)
    assert [x.time for x in rec.window(0.5, 1.0)] == pytest.approx([0.6, 0.8, 1.0])
