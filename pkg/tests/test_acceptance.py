"""Acceptance criteria 1-10.  Each test records a one-line verdict printed in the terminal summary."""

import math
import time

import numpy as np
from scipy.integrate import simpson

from fastlyap.bundles import friction_const_closed_form, get_bundle, hypothesis_grid
from fastlyap.cli import main
from fastlyap.constructors import v_alpha
from fastlyap.numerics import double_integral_derivative_check, double_time_integral, integrate
from fastlyap.verifiers import (RelateCheckGrid, alpha_grid, certify_decay_runs, check_assumption_H,
                                check_compatibility, check_relate, fit_envelope, iss_gain_test, sweep_alpha)


def trig_poly(rng, n_terms=4, max_freq=5.0):
    c0 = rng.uniform(-1.0, 1.0)
    amp = rng.uniform(-1.0, 1.0, n_terms)
    freq = rng.uniform(0.1, max_freq, n_terms)
    phase = rng.uniform(0.0, 2 * math.pi, n_terms)

    def p(l):
        l = np.asarray(l, float)
        return c0 + np.sum(amp * np.cos(np.multiply.outer(l, freq) + phase), axis=-1)

    def primitive(l):
        l = np.asarray(l, float)
        return c0 * l + np.sum(amp * np.sin(np.multiply.outer(l, freq) + phase) / freq, axis=-1)

    return p, primitive


def nested_simpson(p, t, tau, n=2001):
    """Brute force: Simpson over s of a Simpson inner integral over [s, t] per outer node."""
    s_nodes = np.linspace(t - tau, t, n)
    inner = np.empty(n)
    for i, s in enumerate(s_nodes):
        ls = np.linspace(s, t, n)
        inner[i] = simpson(p(ls), x=ls) if s < t else 0.0
    return simpson(inner, x=s_nodes)


def test_criterion_1_fubini_matches_nested_simpson(record_criterion):
    rng = np.random.default_rng(1)
    cases = []
    for _ in range(20):
        p, _ = trig_poly(rng)
        cases.append((p, rng.uniform(-10, 10), rng.uniform(0.1, 2.0)))
    start = time.perf_counter()
    fast = [double_time_integral(p, t, tau) for p, t, tau in cases]
    elapsed = time.perf_counter() - start
    brute = [nested_simpson(p, t, tau) for p, t, tau in cases]
    rel = max(abs(a - b) / abs(b) for a, b in zip(fast, brute))
    ok = rel <= 1e-8 and elapsed < 5.0
    record_criterion(1, ok, f"max rel err {rel:.2e}, {elapsed:.3f} s for 20 integrands")
    assert ok


def test_criterion_2_derivative_identity(record_criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        p, prim = trig_poly(rng)
        t, tau = rng.uniform(-10, 10), rng.uniform(0.1, 2.0)
        h = 1e-4
        numeric = (double_time_integral(p, t + h, tau) - double_time_integral(p, t - h, tau)) / (2 * h)
        # d/dt int_{t-tau}^t int_s^t p = tau p(t) - int_{t-tau}^t p
        closed = tau * float(p(t)) - float(prim(t) - prim(t - tau))
        worst = max(worst, abs(numeric - closed), double_integral_derivative_check(p, t, tau))
    ok = worst <= 1e-6
    record_criterion(2, ok, f"worst margin {worst:.2e}")
    assert ok


def test_criterion_3_friction_limiting_decay(record_criterion):
    start = time.perf_counter()
    b = get_bundle("friction")
    fc = b.params["constants"]
    bconst = fc.b
    lim = b.lim

    def vdot_plus(x, t):
        return b.V.time_derivative(x, t) + float(b.V.gradient(x, t) @ lim.rhs(x, t)) + bconst * float(x @ x)

    worst_traj = -math.inf
    n_samples = 0
    for x0 in b.initial_conditions(42, 10):
        traj = integrate(lim.as_system(), 1.0, x0, 0.0, 10.0)
        for x, t in zip(traj.states[1:-1], traj.times[1:-1]):
            worst_traj = max(worst_traj, vdot_plus(x, t))
            n_samples += 1
    lib = certify_decay_runs(lim.as_system(), b.V, 1.0, b.initial_conditions(42, 10),
                             lambda s: bconst * s * s, 10.0, samples=None)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-10, 10, size=(10_000, 2)) * 10.0 ** rng.uniform(-3, 0, size=(10_000, 1))
    ts = rng.uniform(0, 20, 10_000)
    worst_grid = max(vdot_plus(x, t) for x, t in zip(pts, ts))
    elapsed = time.perf_counter() - start
    ok = bconst == 0.5 and worst_traj <= 1e-6 and worst_grid <= 1e-6 and lib.passed and elapsed < 30.0
    record_criterion(3, ok, f"b = {bconst:g}, worst V'+b|x|^2 traj {worst_traj:.2e} ({n_samples} samples), "
                            f"grid {worst_grid:.2e}, FD certificate margin {lib.worst_margin:.2e}, {elapsed:.1f} s")
    assert ok


def test_criterion_4_nonuges_hypotheses(record_criterion):
    b = get_bundle("nonuges")
    comp = check_compatibility(b.V, b.lim, b.gauges["delta"], b.consts, hypothesis_grid(b))
    rel = check_relate(b.sys, b.lim, b.gauges["delta"], b.gauges["N"], RelateCheckGrid.build(1, eta_max=1e3))
    ratio = rel.worst_margin + 1.0
    lim_sys = b.lim.as_system()
    witness = 0.0
    for x0 in b.initial_conditions(42, 10):
        traj = integrate(lim_sys, 1.0, x0, 0.0, 10.0)
        witness = max(witness, max(abs(b.lim.rhs(x, t)[0]) for x, t in zip(traj.states, traj.times)))
    ok = comp.passed and rel.passed and ratio <= 1 + 1e-3 and witness <= 2 * math.pi
    record_criterion(4, ok, f"compatibility margin {comp.worst_margin:.3g}, relate worst ratio {ratio:.4g} "
                            f"(empirical eta0 {rel.details['empirical_eta0']:g}), max |x'| {witness:.4f}")
    assert ok


def test_criterion_5_ngs_strictification(record_criterion):
    b = get_bundle("ngs")
    coarse = check_assumption_H(b.strictification, b.sys, hypothesis_grid(b))
    fine = check_assumption_H(b.strictification, b.sys, hypothesis_grid(b, per_decade=32, n_times=32, n_taus=128))
    h2 = coarse.report.sub("H2").worst_margin
    drift = abs(fine.derived_c - coarse.derived_c) / coarse.derived_c
    alpha = 2.0 * coarse.alpha_bound
    ics = b.initial_conditions(42, 20)
    hi = certify_decay_runs(b.sys, b.lyapunov(alpha), alpha, ics, b.decay_floor(), b.horizon, samples=200)
    lo = certify_decay_runs(b.sys, b.lyapunov(1.0), 1.0, ics, b.decay_floor(), b.horizon, samples=200)
    failed_runs = sum(not r.passed for r in lo.subreports)
    ok = (coarse.passed and h2 <= 1e-10 and coarse.derived_c > 0 and drift < 0.05 and hi.passed
          and failed_runs >= 1 and np.all(np.abs(ics) <= 3))
    record_criterion(5, ok, f"H2 {h2:.1e}, derived_c {coarse.derived_c:.6g} -> {fine.derived_c:.6g} "
                            f"({100 * drift:.2f}%), alpha {alpha:.6g} decay {'pass' if hi.passed else 'FAIL'}, "
                            f"alpha 1 fails on {failed_runs}/20")
    assert ok


def test_criterion_6_identification_envelope(record_criterion):
    b = get_bundle("identification")
    ics = b.initial_conditions(42, 4)
    sweep = sweep_alpha(b.lyapunov, b.sys, ics, alpha_grid(8.0, 512.0), b.decay_floor(), t_end=b.horizon,
                        samples=200)
    thr = sweep.threshold
    violations = sweep.monotonicity_violations()
    fits = {}
    if thr is not None:
        env_ics = b.initial_conditions(43, 10)
        for a in (thr, 4 * thr):
            trajs = [integrate(b.sys, a, x0, 0.0, 40.0) for x0 in env_ics]
            fits[a] = fit_envelope(trajs)
    ok = (thr is not None and not violations and all(f.residual <= 0 for f in fits.values())
          and fits[thr].lam >= 0.9 * fits[4 * thr].lam)
    detail = f"threshold {thr:g}, verdicts {''.join('P' if v else 'f' for v in sweep.passed)}"
    if fits:
        detail += (f", lambda {fits[thr].lam:.5f} vs {fits[4 * thr].lam:.5f} at 4x, D {fits[thr].D:.4g}, "
                   f"residuals {max(f.residual for f in fits.values()):.1e}")
    record_criterion(6, ok, detail)
    assert ok


def test_criterion_7_saturated_feedback(record_criterion):
    b = get_bundle("satfb")
    res = check_assumption_H(b.strictification, b.sys, hypothesis_grid(b))
    alpha = 2.0 * res.alpha_bound
    dec = certify_decay_runs(b.sys, b.lyapunov(alpha), alpha, b.initial_conditions(42, 10), b.decay_floor(),
                             b.horizon, samples=200, tolerance=1e-6)
    ok = res.passed and dec.passed
    record_criterion(7, ok, f"derived_c {res.derived_c:.6g}, bound {res.alpha_bound:.6g}, "
                            f"decay at {alpha:.6g} margin {dec.worst_margin:.3g}")
    assert ok


def test_criterion_8_consistency(record_criterion):
    b = get_bundle("friction")
    same = b.lim.as_system()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        alpha = 10.0 ** rng.uniform(0.1, 4)
        x = rng.normal(size=2) * 10.0 ** rng.uniform(-2, 2)
        t = rng.uniform(0, 20)
        L = v_alpha(b.V, same, b.lim, alpha)
        ref = b.V(x, t)
        worst = max(worst, abs(L(x, t) - ref) / max(1.0, abs(ref)))
    bc = get_bundle("friction-const")
    worst_closed = 0.0
    for _ in range(50):
        alpha = 10.0 ** rng.uniform(0.1, 3)
        x = rng.normal(size=2) * 3
        t = rng.uniform(0, 20)
        closed = friction_const_closed_form(bc, alpha)(x, t)
        worst_closed = max(worst_closed, abs(bc.lyapunov(alpha)(x, t) - closed) / max(1.0, abs(closed)))
    ok = worst <= 1e-12 and worst_closed <= 1e-8
    record_criterion(8, ok, f"f = fbar max dev {worst:.1e} on 1000 points, friction-const closed form {worst_closed:.1e}")
    assert ok


def test_criterion_9_iss_implication(record_criterion):
    details = []
    ok = True
    for name in ("nonuges", "nonuges-lnk"):
        b = get_bundle(name)
        calls = []
        base_floor = b.decay_floor()

        def floor(s, base_floor=base_floor, calls=calls):
            calls.append(float(s))
            return base_floor(s)

        chi = b.gauges["chi"]
        eps = 1e-3
        u = lambda t: np.array([eps * math.sin(t)])
        ics = b.initial_conditions(42, 4)
        r = iss_gain_test(b.sys, b.lyapunov(512.0), chi, [u], ics, 512.0, floor, b.horizon, samples=200)
        # replay the runs: every floor evaluation must sit on a sample where |u| <= chi(|x|)
        allowed, forbidden = set(), set()
        for x0 in ics:
            traj = integrate(b.sys, 512.0, x0, 0.0, b.horizon, u=u)
            gain = np.abs(traj.inputs[:, 0]) <= np.asarray(chi(traj.norms), float)
            allowed.update(traj.norms[gain].tolist())
            forbidden.update(traj.norms[~gain].tolist())
        gated = all(s in allowed for s in calls) and not any(s in forbidden - allowed for s in calls)
        counted = len(calls) == r.details["decay_evaluations"] <= r.details["gain_satisfied"]
        ok &= r.passed and gated and counted and len(calls) > 0 and r.details["gain_violated"] > 0
        details.append(f"{name}: margin {r.worst_margin:.3g}, evaluated {len(calls)}, "
                       f"gain-violating samples skipped {r.details['gain_violated']}")
    record_criterion(9, ok, "; ".join(details))
    assert ok


def _run(argv, tmp_path, name):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, out


def test_criterion_10_cli_contract(record_criterion, tmp_path, capsys):
    blowup = tmp_path / "blowup.json"
    blowup.write_text('{"name": "blowup", "dim": 1, "f": ["x1^2"]}')
    matrix = [
        (["verify", "--bundle", "ngs", "--alpha", "10000", "--checks", "hypotheses,decay"], 0),
        (["verify", "--bundle", "ngs", "--alpha", "0"], 2),
        (["verify", "--bundle", "nonuges", "--alpha", "1", "--checks", "decay"], 1),
        (["verify", "--bundle", "no-such-bundle", "--alpha", "1"], 2),
        (["verify", "--bundle", str(blowup), "--alpha", "1", "--checks", "decay", "--t-end", "5"], 3),
        (["sweep", "--bundle", "friction", "--alpha-min", "2", "--alpha-max", "64", "--samples", "60"], 0),
        (["sweep", "--bundle", "nonuges", "--alpha-min", "1", "--alpha-max", "4", "--samples", "60"], 1),
        (["sweep", "--bundle", "satfb", "--alpha-min", "8", "--alpha-max", "4"], 2),
        (["simulate", "--bundle", "nonuges", "--alpha", "400", "--x0", "1", "--t-end", "50"], 0),
        (["simulate", "--bundle", "nonuges", "--alpha", "400", "--x0=1,2"], 2),
        (["simulate", "--bundle", str(blowup), "--alpha", "1", "--x0", "1", "--t-end", "5"], 3),
        (["list-bundles"], 0),
    ]
    bad = []
    for i, (argv, want) in enumerate(matrix):
        code, out = _run(argv, tmp_path, f"m{i}.txt")
        if code != want:
            bad.append((" ".join(argv), code, want))
    capsys.readouterr()
    sim = ["simulate", "--bundle", "friction", "--alpha", "16", "--x0=1,-1", "--t-end", "2"]
    swp = ["sweep", "--bundle", "friction", "--alpha-min", "2", "--alpha-max", "16", "--samples", "60", "--seed", "5"]
    same = True
    for argv, tag in ((sim, "sim"), (swp, "swp")):
        _, a = _run(argv, tmp_path, f"{tag}1.csv")
        _, c = _run(argv, tmp_path, f"{tag}2.csv")
        same &= a.read_bytes() == c.read_bytes()
    ok = not bad and same
    record_criterion(10, ok, f"{len(matrix) - len(bad)}/{len(matrix)} exit codes match, "
                             f"CSV byte-identical: {same}" + (f", mismatches {bad}" if bad else ""))
    assert ok
