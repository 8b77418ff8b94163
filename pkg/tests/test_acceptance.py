"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np

from radterrace.cli import execute
from radterrace.diagnostics import (FirewallConfig, StandingFrameConfig, TravelingFrameConfig,
                                    audit_escape_implication, audit_invasion_bound, cauchy_time,
                                    sample_firewall, speed_estimate)
from radterrace.experiment import audit_document
from radterrace.fronts import front_residual, load_front, normalize_front, solve_bistable_front
from radterrace.potential import DEFAULT_BOXES, analyze_potential, builtin_potentials
from radterrace.radial import IntegratorConfig, RadialGrid, Stepper, make_initial_data
from radterrace.terrace import fit_terrace

from .conftest import NAGUMO_SPEED, config_path


def report(capsys, k: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {k}: {detail}"


def firewall_samples(result_or_run, sc):
    rhos = np.arange(sc.firewall.r_sc, 0.95 * sc.grid.r_max, 2.0)
    return sample_firewall(result_or_run.recorder.fields, rhos, sc.firewall, sc.spec, sc.m_outer)


# 1 -------------------------------------------------------------------------


def test_criterion_1_front_speed(tmp_path, capsys):
    start = time.perf_counter()
    path = execute("front", config_path("front_cubic"), tmp_path)
    elapsed = time.perf_counter() - start
    prof = load_front(path)
    spec = builtin_potentials()["cubic"](a=0.25)
    an = analyze_potential(spec, DEFAULT_BOXES["cubic"])
    speed_err = abs(prof.speed - NAGUMO_SPEED)
    resid = front_residual(prof, spec)
    shift = math.sqrt(2) * math.log(1 / an.d_esc - 1)
    exact = 1 / (1 + np.exp((prof.xi_grid + shift) / math.sqrt(2)))
    match = float(np.max(np.abs(prof.values[:, 0] - exact)))
    ok = speed_err <= 1e-3 and elapsed < 1.0 and resid <= 1e-6 and match <= 1e-4
    report(capsys, 1, ok, f"c={prof.speed:.7f} |c-c*|={speed_err:.1e} runtime={elapsed:.3f}s "
                          f"residual={resid:.1e} logistic={match:.1e}")


# 2 -------------------------------------------------------------------------


def test_criterion_2_radial_speed(invasion_run, capsys):
    tr = invasion_run.tracker
    c, err = speed_estimate(tr.t, tr.r_Esc, (200.0, 400.0))
    rel = (c - NAGUMO_SPEED) / NAGUMO_SPEED
    report(capsys, 2, abs(rel) <= 0.03,
           f"slope={c:.5f}+-{err:.1e} planar={NAGUMO_SPEED:.5f} rel={rel:+.2%} (tol 3%)")


# 3 -------------------------------------------------------------------------


def test_criterion_3_terrace_convergence(invasion_run, capsys):
    sc = invasion_run.scenario
    ter, rep = fit_terrace(invasion_run.recorder.fields, sc.analysis, [], sc.spec, (100.0, 400.0),
                           (0.0, 1.0), max_speed=sc.firewall.c_noesc)
    t = rep.times
    err = rep.sup_errors[:, 0]
    upto = t <= 300.0 + 1e-9
    # last index before t = 300 where the series went up; the transient ends there
    rises = np.nonzero(np.diff(err[upto]) > 0)[0]
    t_transient = t[rises[-1] + 1] if rises.size else t[0]
    half = t[0] + 0.5 * (300.0 - t[0])
    e300 = float(err[np.argmin(np.abs(t - 300.0))])
    ok = ter.q == 1 and t_transient <= half and e300 <= 0.02
    report(capsys, 3, ok, f"q={ter.q} eps={rep.epsilons[0]:.4f} monotone from t={t_transient:g} "
                          f"sup_err(300)={e300:.2e} (tol 0.02)")


# 4 -------------------------------------------------------------------------


def test_criterion_4_two_front_terrace(triple_run, capsys):
    sc = triple_run.scenario
    spec, an = sc.spec, sc.analysis
    ter, rep = fit_terrace(triple_run.recorder.fields, an, [], spec, (300.0, 600.0),
                           max_speed=sc.firewall.c_noesc)
    # independent single-front solves on the adjacent pairs
    solves = [normalize_front(solve_bistable_front(spec, an, ter.minima_chain[i],
                                                   ter.minima_chain[i - 1], (0.0, 5.0)),
                              an.d_esc).speed for i in range(1, ter.q + 1)]
    rel = [abs(c - s) / s for c, s in zip(ter.speeds, solves)]
    vals = [m.value for m in ter.minima_chain]
    ordered = ter.q == 2 and ter.speeds[0] >= ter.speeds[1] - 2 * ter.speed_stderr[1]
    chain = all(a > b for a, b in zip(vals, vals[1:]))
    final = float(rep.sup_errors[-1, 0])
    ok = ter.q == 2 and ordered and chain and final <= 0.05 and max(rel) <= 0.03
    report(capsys, 4, ok, f"q={ter.q} c={np.round(ter.speeds, 5).tolist()} "
                          f"solves={np.round(solves, 5).tolist()} "
                          f"rel={[f'{x:.2%}' for x in rel]} V-chain={chain} "
                          f"sup_err(final)={final:.2e}")


# 5 -------------------------------------------------------------------------


def test_criterion_5_energy_identity(invasion_run, invasion_run_fine, capsys):
    worst = []
    for run in (invasion_run, invasion_run_fine):
        t, m = run.energy.mismatch("tangent")
        # t = 0 is excluded: the C^1 seam of the initial ramp is not a grid function
        worst.append(float(np.max(m[t > 0])))
    ratio = worst[0] / worst[1]
    ok = worst[0] <= 5e-3 and 3.0 <= ratio <= 5.0
    report(capsys, 5, ok, f"worst mismatch {worst[0]:.2e} -> {worst[1]:.2e} ratio={ratio:.3f}")


# 6 -------------------------------------------------------------------------


def test_criterion_6_firewall_audit(audit_levels, capsys):
    total, violations, ratios, details = 0, 0, [], []
    for name, levels in audit_levels.items():
        doc = audit_document(levels, float(levels[0].result.scenario.config.get("audit.safety")))
        total += sum(lv["samples"] for lv in doc["levels"])
        violations += sum(lv["violations"] for lv in doc["levels"])
        ratios += doc["calibration"]["ratios"]
        details.append(f"{name}: slacks={[f'{s:.1e}' for s in doc['calibration']['slacks']]}")
    ok = total >= 10_000 and violations == 0 and all(3.0 <= q <= 5.0 for q in ratios)
    report(capsys, 6, ok, f"samples={total} violations={violations} "
                          f"ratios={[round(q, 3) for q in ratios]} " + "; ".join(details))


# 7 -------------------------------------------------------------------------


def test_criterion_7_escape_implication(audit_levels, invasion_run, triple_run, residual_run,
                                        capsys):
    checked = triggered = bad = 0
    for levels in audit_levels.values():
        for lv in levels:
            rep = audit_escape_implication(lv.result.post["firewall_samples"],
                                           lv.result.scenario.firewall, slack=lv.dr)
            checked, triggered, bad = (checked + rep.n_checked, triggered + rep.n_triggered,
                                       bad + rep.n_counterexamples)
    for run in (invasion_run, triple_run, residual_run):
        sc = run.scenario
        rep = audit_escape_implication(firewall_samples(run, sc), sc.firewall, slack=sc.grid.dr)
        checked, triggered, bad = (checked + rep.n_checked, triggered + rep.n_triggered,
                                   bad + rep.n_counterexamples)
    ok = bad == 0 and triggered > 0
    report(capsys, 7, ok, f"checked={checked} triggered={triggered} counterexamples={bad}")


# 8 -------------------------------------------------------------------------


def test_criterion_8_invasion_bound(audit_levels, invasion_run, triple_run, residual_run, capsys):
    trackers = [invasion_run.tracker, triple_run.observers["tracker"],
                residual_run.observers["tracker"]]
    fws = [invasion_run.scenario.firewall, triple_run.scenario.firewall,
           residual_run.scenario.firewall]
    for levels in audit_levels.values():
        for lv in levels:
            trackers.append(lv.result.observers["tracker"])
            fws.append(lv.result.scenario.firewall)
    pairs = skipped = viol = 0
    for tr, fw in zip(trackers, fws):
        rep = audit_invasion_bound(tr.t, tr.r_Esc, fw.c_noesc)
        pairs, skipped, viol = pairs + rep.n_pairs, skipped + rep.n_skipped, viol + rep.n_violations
    report(capsys, 8, viol == 0 and pairs > 0,
           f"trackers={len(trackers)} pairs={pairs} skipped={skipped} violations={viol}")


# 9 -------------------------------------------------------------------------


def test_criterion_9_residual_energy(residual_run, capsys):
    r = residual_run.observers["residual"]
    t_star = cauchy_time(r.t, r.values)
    last = r.values[-1]
    ok = math.isfinite(t_star) and math.isfinite(last)
    report(capsys, 9, ok, f"c={r.c:g} T*={t_star:g} limit~{last:.3e}")


# 10 ------------------------------------------------------------------------


def plain_1d_step(u, dt, h, grad, scheme):
    """Independent dense 1-D stencil with mirror boundaries at both ends."""
    n = u.size
    L = (np.diag(np.full(n - 1, 1.0), -1) - 2 * np.eye(n) + np.diag(np.full(n - 1, 1.0), 1))
    L[0, 1] = L[-1, -2] = 2.0
    L /= h * h
    if scheme == "imex_cn":
        A, B = np.eye(n) - 0.5 * dt * L, np.eye(n) + 0.5 * dt * L
        mid = np.linalg.solve(A, u - 0.5 * dt * grad(u))
        return np.linalg.solve(A, B @ u - dt * grad(mid))

    def f(v):
        return L @ v - grad(v)
    k1 = f(u)
    k2 = f(u + 0.5 * dt * k1)
    k3 = f(u + 0.5 * dt * k2)
    k4 = f(u + dt * k3)
    return u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def test_criterion_10_d1_cross_check(cubic, capsys):
    spec, _ = cubic

    def grad(v):
        return spec.gradients(v[None, :])[0]
    g = RadialGrid.from_spacing(40.0, 0.1, 1)
    worst = 0.0
    for scheme, dt in (("imex_cn", 0.02), ("explicit_rk4", 0.002)):
        stepper = Stepper(g, spec, IntegratorConfig(dt=dt, t_end=1.0, scheme=scheme))
        u = make_initial_data("plateau", g, m_outer=[0.0], m_inner=[1.0], r0=15.0, w=5.0).values
        for _ in range(200):
            ours = stepper.advance(u.copy())
            ref = plain_1d_step(u[0], dt, g.dr, grad, scheme)
            worst = max(worst, float(np.max(np.abs(ours[0] - ref))))
            u = ours
    report(capsys, 10, worst <= 1e-12, f"max per-step difference {worst:.1e} (tol 1e-12)")


# 11 ------------------------------------------------------------------------


def property_failures(name, rng):
    spec = builtin_potentials()[name]()
    an = analyze_potential(spec, DEFAULT_BOXES[name])
    fails = []
    lmin, lmax = an.lambda_min, an.lambda_max
    box = np.array(DEFAULT_BOXES[name])
    anywhere = (box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((2000, spec.n))).T
    for m in an.minima:
        dirs = rng.standard_normal((1000, spec.n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        w = dirs * (an.d_esc * rng.random(1000) ** (1.0 / spec.n))[:, None]
        pts = (np.asarray(m.location)[None, :] + w).T
        eig = np.linalg.eigvalsh(spec.hessians(pts))
        if np.any(eig < lmin / 2 - 1e-9) or np.any(eig > 2 * lmax + 1e-9):
            fails.append("eigenvalue condition")
        w2 = np.sum(w * w, axis=1)
        dv = spec.values(pts) - m.value
        wg = np.sum(w.T * spec.gradients(pts), axis=0)
        if (np.any(dv < lmin / 4 * w2 - 1e-9) or np.any(dv > lmax * w2 + 1e-9)
                or np.any(wg < lmin / 2 * w2 - 1e-9) or np.any(wg > 2 * lmax * w2 + 1e-9)):
            fails.append("quadratic bounds")
        dev = anywhere - np.asarray(m.location)[:, None]
        weight = an.w_en0 * (spec.values(anywhere) - m.value) + np.sum(dev * dev, axis=0) / 4
        if np.any(weight < -1e-12):
            fails.append("energy weight")
    for d in (2, 3):
        fw = FirewallConfig.from_analysis(an, d)
        if not all(fw.inequalities().values()):
            fails.append(f"FirewallConfig d={d}")
        for c in fw.c_noesc * np.array([1e-9, 1e-6, 1e-3, 0.1, 0.5]):
            try:
                TravelingFrameConfig.from_firewall(fw, float(c))
            except ValueError as exc:
                fails.append(f"TravelingFrameConfig d={d} c={c:.3g}: {exc}")
        sf = StandingFrameConfig.from_analysis(spec, an, d, c_hom=1.0)
        if not all(sf.inequalities().values()):
            fails.append(f"StandingFrameConfig d={d}")
    return fails


def test_criterion_11_property_suite(rng, capsys):
    failures = {name: property_failures(name, rng) for name in builtin_potentials()}
    bad = {k: v for k, v in failures.items() if v}
    report(capsys, 11, not bad, f"builtins={sorted(failures)} failures={bad or 'none'}")
