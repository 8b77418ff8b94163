import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radterrace.potential import (DEFAULT_BOXES, CoercivityError, DegeneratePotentialError,
                                  PotentialAnalysis, PotentialSpec, analyze_potential,
                                  builtin_potentials, check_derivatives, coercivity_constants,
                                  cubic_reaction, double_well, eigen_bounds, escape_distance,
                                  find_minima, low_hull_coefficient, make_potential, quadratic,
                                  triple_well)

# Frozen values from scripts/potential_oracles.py (closed forms and dense scans).
CUBIC_D_ESC = (2.5 - np.sqrt(4.75)) / 6.0
CUBIC_Q_LOW = -7.0 / 144.0
CUBIC_C_V = 5.0171076153
CUBIC_R_ATT = 1.6805959566
CUBIC_K_F0 = 1.1266346724
DW_C_V = 6.25
DW_K_F0 = 3.4966571572

BUILTIN_PARAMS = {
    "cubic": {"a": 0.25},
    "double_well": {},
    "quadratic": {},
    "triple_well": {},
    "coupled_double_well": {"coupling": 0.1},
}


def analysis(name):
    spec = make_potential(name, **BUILTIN_PARAMS[name])
    return spec, analyze_potential(spec, DEFAULT_BOXES[name])


@pytest.fixture(scope="module", params=sorted(BUILTIN_PARAMS))
def builtin(request):
    return analysis(request.param)


# ---------------------------------------------------------------------------
# minima and eigenvalue bounds


def test_double_well_minima():
    ms = find_minima(double_well(), [(-2.0, 2.0)], 21)
    assert sorted(float(m.location[0]) for m in ms) == pytest.approx([-1.0, 1.0], abs=1e-12)
    assert all(abs(m.value) < 1e-14 for m in ms)
    assert eigen_bounds(ms) == pytest.approx((2.0, 2.0), rel=1e-10)


def test_quadratic_minimum():
    ms = find_minima(quadratic(), [(-1.0, 1.0)])
    assert len(ms) == 1
    assert ms[0].location[0] == pytest.approx(0.0, abs=1e-14)
    assert eigen_bounds(ms) == pytest.approx((1.0, 1.0))


def test_cubic_minima_and_bounds(cubic):
    _, an = cubic
    locs = sorted(float(m.location[0]) for m in an.minima)
    assert locs == pytest.approx([0.0, 1.0], abs=1e-12)
    deep = min(an.minima, key=lambda m: m.value)
    assert deep.value == pytest.approx(-1.0 / 24.0, rel=1e-12)
    assert (an.lambda_min, an.lambda_max) == pytest.approx((0.25, 0.75), rel=1e-10)


def test_minima_sorted_by_value(builtin):
    _, an = builtin
    vals = [m.value for m in an.minima]
    assert vals == sorted(vals)


def test_eigen_bounds_empty():
    with pytest.raises(ValueError, match="no minima"):
        eigen_bounds([])


def test_degenerate_critical_point_rejected():
    # V = u^4/4 has a degenerate minimum at 0, which is one of the 21 seeds
    p = np.polynomial.Polynomial([0, 0, 0, 0, 0.25])
    dp, ddp = p.deriv(), p.deriv(2)
    spec = PotentialSpec(1, lambda u: float(p(u[0])), lambda u: np.array([dp(u[0])]),
                         lambda u: np.array([[ddp(u[0])]]))
    with pytest.raises(DegeneratePotentialError):
        find_minima(spec, [(-1.0, 1.0)], 21)


def test_find_minima_arguments():
    with pytest.raises(ValueError):
        find_minima(quadratic(), [(-1.0, 1.0)], 2)
    with pytest.raises(ValueError):
        find_minima(quadratic(), [(1.0, -1.0)])


def test_builtin_minimum_invariants(builtin):
    spec, an = builtin
    assert 0 < an.lambda_min <= an.lambda_max
    for m in an.minima:
        g = np.atleast_1d(spec.grad(m.location))
        assert np.linalg.norm(g) <= 1e-10 * (1 + np.linalg.norm(m.location))
        assert all(e > 0 for e in m.hess_eigenvalues)


def test_triple_well_ordering():
    _, an = analysis("triple_well")
    assert [round(float(m.location[0]), 9) for m in an.minima] == [-2.0, -1.0, 0.0]
    vals = [m.value for m in an.minima]
    assert vals[0] < vals[1] < vals[2]


def test_triple_well_parameter_range():
    with pytest.raises(ValueError):
        triple_well(s1=0.5)


def test_coupled_zero_coupling_products():
    spec = make_potential("coupled_double_well", coupling=0.0)
    an = analyze_potential(spec, DEFAULT_BOXES["coupled_double_well"])
    locs = sorted(tuple(np.round(m.location, 9)) for m in an.minima)
    assert locs == [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]


def test_catalogue_and_unknown_name():
    assert set(builtin_potentials()) >= set(BUILTIN_PARAMS)
    with pytest.raises(KeyError, match="unknown potential"):
        make_potential("quartic")


# ---------------------------------------------------------------------------
# derivative consistency


def test_derivatives_match_finite_differences(builtin, rng):
    spec, an = builtin
    box = np.array(DEFAULT_BOXES[spec.name])
    pts = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((100, spec.n))
    g_err, h_err = check_derivatives(spec, pts)
    assert g_err <= 1e-5
    assert h_err <= 1e-4


def test_vectorised_forms_agree(builtin, rng):
    spec, _ = builtin
    U = rng.uniform(-2, 2, (spec.n, 30))
    assert np.allclose(spec.values(U), [spec.eval(U[:, k]) for k in range(30)], rtol=1e-13)
    assert np.allclose(spec.gradients(U),
                       np.stack([spec.grad(U[:, k]) for k in range(30)], axis=1), rtol=1e-13)
    assert np.allclose(spec.hessians(U),
                       np.stack([np.atleast_2d(spec.hess(U[:, k])) for k in range(30)]),
                       rtol=1e-13)


# ---------------------------------------------------------------------------
# escape distance


def test_escape_distance_closed_forms():
    _, an = analysis("double_well")
    assert an.d_esc == pytest.approx(1 - np.sqrt(2 / 3), rel=1e-5)
    _, an = analysis("cubic")
    assert an.d_esc == pytest.approx(CUBIC_D_ESC, rel=1e-5)


def test_escape_distance_capped_for_quadratic():
    spec = quadratic()
    ms = find_minima(spec, [(-1.0, 1.0)])
    assert escape_distance(spec, ms, 1.0, 1.0, [(-1.0, 1.0)]) == pytest.approx(1.0)


def test_escape_distance_eigenvalue_condition(builtin, rng):
    spec, an = builtin
    for m in an.minima:
        dirs = rng.standard_normal((500, spec.n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = an.d_esc * rng.random(500) ** (1.0 / spec.n)
        pts = (np.asarray(m.location)[None, :] + dirs * radii[:, None]).T
        eig = np.linalg.eigvalsh(spec.hessians(pts))
        assert np.all(eig >= an.lambda_min / 2 - 1e-9)
        assert np.all(eig <= 2 * an.lambda_max + 1e-9)


def test_quadratic_bounds_inside_escape_ball(builtin, rng):
    spec, an = builtin
    lmin, lmax = an.lambda_min, an.lambda_max
    for m in an.minima:
        dirs = rng.standard_normal((1000, spec.n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        w = dirs * (an.d_esc * rng.random(1000))[:, None]
        pts = (np.asarray(m.location)[None, :] + w).T
        w2 = np.sum(w * w, axis=1)
        dv = spec.values(pts) - m.value
        wg = np.sum(w.T * spec.gradients(pts), axis=0)
        assert np.all(dv >= lmin / 4 * w2 - 1e-9)
        assert np.all(dv <= lmax * w2 + 1e-9)
        assert np.all(wg >= lmin / 2 * w2 - 1e-9)
        assert np.all(wg <= 2 * lmax * w2 + 1e-9)


# ---------------------------------------------------------------------------
# hull, coercivity, firewall rates


def test_low_hull_values():
    spec = double_well()
    ms = find_minima(spec, [(-3.0, 3.0)])
    q, w = low_hull_coefficient(spec, ms, [(-3.0, 3.0)])
    assert q == pytest.approx(0.0, abs=1e-6)
    assert w == 1.0
    spec = quadratic()
    q, w = low_hull_coefficient(spec, find_minima(spec, [(-2.0, 2.0)]), [(-2.0, 2.0)])
    assert q == pytest.approx(0.5, rel=1e-12)
    _, an = analysis("cubic")
    assert an.q_low_hull == pytest.approx(CUBIC_Q_LOW, abs=1e-8)
    # the hull dips below zero but not below -1/4, so the weight stays 1
    assert an.w_en0 == 1.0


def test_weight_formula_and_nonnegativity(builtin, rng):
    spec, an = builtin
    assert an.w_en0 == 1.0 / max(1.0, -4.0 * an.q_low_hull)
    box = np.array(DEFAULT_BOXES[spec.name])
    pts = (box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((2000, spec.n))).T
    vals = spec.values(pts)
    for m in an.minima:
        w = pts - np.asarray(m.location)[:, None]
        assert np.all(an.w_en0 * (vals - m.value) + np.sum(w * w, axis=0) / 4 >= -1e-12)


def test_coercivity_values():
    assert coercivity_constants(quadratic(), [(-2.0, 2.0)]) == pytest.approx((0.5, 0.0, 1.0))
    _, an = analysis("double_well")
    assert (an.eps_v, an.c_v) == pytest.approx((4.0, DW_C_V), rel=1e-6)
    _, an = analysis("cubic")
    assert an.eps_v == pytest.approx(2.75, rel=1e-12)
    assert an.c_v == pytest.approx(CUBIC_C_V, rel=1e-6)
    assert an.r_att == pytest.approx(CUBIC_R_ATT, rel=1e-6)


def test_not_coercive():
    spec = make_potential("cubic", a=0.25)
    neg = PotentialSpec(1, lambda u: -spec.eval(u), lambda u: -spec.grad(u),
                        lambda u: -spec.hess(u))
    with pytest.raises(CoercivityError):
        coercivity_constants(neg, [(-2.0, 3.0)])


def test_firewall_rate_constants():
    _, an = analysis("cubic")
    assert an.nu_f0 == pytest.approx(0.05, rel=1e-10)
    assert an.k_f0 == pytest.approx(CUBIC_K_F0, rel=1e-7)
    _, an = analysis("double_well")
    assert an.nu_f0 == pytest.approx(0.2, rel=1e-10)
    assert an.k_f0 == pytest.approx(DW_K_F0, rel=1e-7)


def test_analysis_invariants(builtin):
    _, an = builtin
    assert an.r_att == pytest.approx(np.sqrt(an.c_v / an.eps_v + 1), rel=1e-14)
    assert 0 < an.w_en0 <= 1
    assert an.eps_v > 0 and an.c_v >= 0 and an.nu_f0 > 0 and an.k_f0 > 0
    assert an.nu_f0 == pytest.approx(min(1 / an.w_en0, an.lambda_min / (
        4 * (an.w_en0 * an.lambda_max + 0.5))), rel=1e-14)


def test_analysis_json_roundtrip(builtin):
    _, an = builtin
    doc = json.loads(json.dumps(an.to_json()))
    assert set(doc) == {"n", "minima", "lambda_min", "lambda_max", "d_esc", "q_low_hull",
                        "w_en0", "eps_v", "c_v", "r_att", "nu_f0", "k_f0"}
    assert set(doc["minima"][0]) == {"location", "value", "eigenvalues"}
    back = PotentialAnalysis.from_json(doc)
    assert back.d_esc == an.d_esc and len(back.minima) == len(an.minima)


@settings(max_examples=15, deadline=None)
@given(st.floats(min_value=0.1, max_value=0.45))
def test_cubic_family_bounds(a):
    an = analyze_potential(cubic_reaction(a), [(-2.0, 3.0)])
    assert (an.lambda_min, an.lambda_max) == pytest.approx((a, 1 - a), rel=1e-8)
    vals = sorted(m.value for m in an.minima)
    assert vals[0] == pytest.approx((2 * a - 1) / 12, rel=1e-10)
    # d_esc is set by V'' falling to a/2 to the right of 0
    root = ((1 + a) - np.sqrt((1 + a) ** 2 - 1.5 * a)) / 3
    assert an.d_esc <= root * (1 + 1e-5)
