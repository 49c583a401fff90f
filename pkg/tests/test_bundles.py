import math
from argparse import Namespace

import numpy as np
import pytest
from scipy.integrate import quad

from fastlyap.bundles import (BUNDLES, LN_CUBIC_A, LN_CUBIC_B, FrictionParams, IdentificationParams,
                              SaturatedFeedbackParams, bundle_from_description, example_friction,
                              example_identification, example_non_uges, example_saturated_feedback,
                              friction_const_closed_form, get_bundle, hypothesis_grid, non_uges_displayed_v_alpha,
                              sigma_ln, sigma_ln_integral)
from fastlyap.cli import run_check
from fastlyap.constructors import v_alpha
from fastlyap.numerics import integrate
from fastlyap.verifiers import certify_decay_runs, check_assumption_H

# alphas at which each bundle's expected checklist is certified (doubles above the sweep thresholds and
# above twice the strictification bounds)
CERTIFIED_ALPHA = {
    "nonuges": 512.0,
    "nonuges-lnk": 512.0,
    "identification": 128.0,
    "friction": 16.0,
    "friction-const": 16.0,
    "ngs": 16000.0,
    "satfb": 4500.0,
}
CLI_CHECK = {"compatibility": "hypotheses", "relate": "hypotheses", "m16": "hypotheses",
             "limiting_decay": "hypotheses", "assumption_H": "hypotheses", "decay": "decay", "iss": "iss",
             "iiss": "iiss", "envelope": "envelope"}
REPORT_NAME = {"iss": "iss_gain"}


def test_registry_names():
    assert set(BUNDLES) == {"nonuges", "nonuges-lnk", "identification", "friction", "friction-const", "ngs",
                            "satfb"}
    assert set(CERTIFIED_ALPHA) == set(BUNDLES)
    with pytest.raises(KeyError):
        get_bundle("nope")


@pytest.mark.parametrize("name", sorted(BUNDLES))
def test_expected_checklist_passes(name):
    b = get_bundle(name)
    alpha = CERTIFIED_ALPHA[name]
    args = Namespace(seed=42, n_ics=4, samples=100, t_end=None, input_amplitude=1e-4, envelope_horizon=40.0)
    checks = sorted({CLI_CHECK[e] for e in b.expected})
    reports = []
    for c in checks:
        reports.extend(run_check(c, b, alpha, args))
    names = {r.name for r in reports} | {s.name for r in reports for s in r.subreports}
    for e in b.expected:
        assert REPORT_NAME.get(e, e) in names, e
    failed = [(r.name, r.worst_margin) for r in reports if not r.passed]
    assert not failed


def test_expected_failures_fail():
    b = get_bundle("ngs")
    from fastlyap.verifiers import check_m16
    grid = hypothesis_grid(b)
    assert "m16" in b.expected_failures
    assert not check_m16(b.sys, b.lim, b.gauges["delta"], 1e3, grid).passed


def test_nonuges_limiting_speed_witness():
    b = get_bundle("nonuges")
    lim_sys = b.lim.as_system()
    for x0 in b.initial_conditions(7, 10):
        traj = integrate(lim_sys, 1.0, x0, 0.0, 5.0)
        speeds = np.abs([b.lim.rhs(x, t)[0] for x, t in zip(traj.states, traj.times)])
        assert speeds.max() <= 2 * math.pi


def test_friction_lower_bound_on_V():
    b = get_bundle("friction")
    rng = np.random.default_rng(0)
    for _ in range(500):
        x = rng.normal(size=2) * 10 ** rng.uniform(-3, 3)
        t = rng.uniform(0, 20)
        assert 0.5 * x @ x <= b.V(x, t)


def test_friction_sigma_deviation_bound():
    p = FrictionParams()
    rng = np.random.default_rng(1)
    for sig, tilde in zip(p.coefficients(), p.sigma_tilde):
        for _ in range(20):
            a = rng.uniform(0, 100)
            b = a + rng.uniform(0, 50)
            val, _ = quad(lambda u: float(sig(u)) - tilde, a, b, limit=400)
            # the sinusoidal part integrates to at most tilde/2 * 2
            assert abs(val) <= tilde + 1e-9


def test_ln_sigma_is_c1_odd_and_concave():
    eps = 1e-7
    assert sigma_ln(1 - 1e-12) == pytest.approx(math.log(2), abs=1e-10)
    slope_in = LN_CUBIC_A + 3 * LN_CUBIC_B
    assert slope_in == pytest.approx(0.5, abs=1e-14)
    assert (sigma_ln(1 + eps) - sigma_ln(1)) / eps == pytest.approx(0.5, abs=1e-6)
    s = np.linspace(1e-3, 20, 4001)
    assert np.allclose(sigma_ln(-s), -sigma_ln(s))
    assert np.all(np.diff(sigma_ln(s)) > 0)
    assert np.all(np.diff(sigma_ln(s), 2) <= 1e-12)
    assert np.all(sigma_ln(2 * s) <= 2 * sigma_ln(s) + 1e-12)
    for x in (-3.0, -0.4, 0.7, 1.0, 5.0):
        ref, _ = quad(lambda u: float(sigma_ln(u)), 0, x, epsabs=1e-13, epsrel=1e-13)
        assert float(sigma_ln_integral(x)) == pytest.approx(ref, abs=1e-10)


def test_identification_preconditions():
    with pytest.raises(ValueError):
        example_identification(IdentificationParams(f_fast=lambda tau: 0.5 + np.sin(tau), f_star=0.5))
    with pytest.raises(ValueError):
        example_identification(IdentificationParams(f_star=-2.0))


def test_identification_zero_state_stays_zero():
    b = get_bundle("identification")
    traj = integrate(b.sys, 64.0, [0.0, 0.0], 0.0, 2.0)
    assert np.all(traj.states == 0.0)


def test_identification_matrix_form_matches_generic():
    b = get_bundle("identification")
    alpha = 64.0
    fast, generic = b.lyapunov(alpha), v_alpha(b.V, b.sys, b.lim, alpha)
    for x, t in (([1.0, -0.5], 0.3), ([-2.0, 0.1], 4.0), ([0.2, 0.2], 11.7)):
        assert fast(x, t) == pytest.approx(generic(x, t), rel=1e-9)


def test_friction_rejects_increasing_stiffness():
    p = FrictionParams(k=lambda t: 1.5 + 0.4 * np.tanh(np.asarray(t, float)),
                       dk=lambda t: 0.4 / np.cosh(np.asarray(t, float)) ** 2)
    with pytest.raises(ValueError):
        example_friction(p)


def test_friction_alpha_restriction_and_origin():
    b = get_bundle("friction")
    with pytest.raises(ValueError):
        b.lyapunov(1.0)
    assert b.lyapunov(8.0)([0.0, 0.0], 1.3) == 0.0
    assert any("A = " in n for n in b.notes)


def test_friction_gamma_form_matches_generic():
    b = get_bundle("friction")
    alpha = 16.0
    gamma, generic = b.lyapunov(alpha), v_alpha(b.V, b.sys, b.lim, alpha)
    for x, t in (([1.0, -0.5], 0.3), ([-2.0, 0.01], 4.0), ([0.2, 3.0], 11.7)):
        assert gamma(x, t) == pytest.approx(generic(x, t), rel=1e-9)


def test_friction_const_closed_form():
    b = get_bundle("friction-const")
    alpha = 16.0
    L, closed = b.lyapunov(alpha), friction_const_closed_form(b, alpha)
    for x, t in (([1.0, -0.5], 0.3), ([-2.0, 0.01], 4.0), ([0.2, 3.0], 11.7)):
        assert abs(L(x, t) - closed(np.array(x), t)) <= 1e-8 * max(1.0, abs(closed(np.array(x), t)))


def test_nonuges_displayed_form_matches_generic():
    b = get_bundle("nonuges")
    alpha = 100.0
    shown, generic = non_uges_displayed_v_alpha(b, alpha), b.lyapunov(alpha)
    for x, t in (([1.0], 0.3), ([-2.5], 4.0), ([0.05], 11.7)):
        assert shown(x, t) == pytest.approx(generic(x, t), rel=1e-9, abs=1e-14)


def test_nonuges_numeric_V_matches_closed_form():
    closed = example_non_uges()
    numeric = example_non_uges(sigma1_integral=None, name="nonuges-quad")
    for x in (-2.0, 0.3, 4.0):
        assert numeric.V([x], 0.0) == pytest.approx(closed.V([x], 0.0), rel=1e-10)


def test_satfb_zero_parameter_decays_for_every_alpha():
    b = example_saturated_feedback(SaturatedFeedbackParams(p=lambda l: 0.0 * np.asarray(l, float)))
    ics = b.initial_conditions(3, 5)
    for alpha in (1.0, 10.0, 1000.0):
        r = certify_decay_runs(b.sys, b.lyapunov(alpha), alpha, ics, b.decay_floor(), 1.0, samples=100)
        assert r.passed


def test_satfb_gain_variant_certifies():
    b = example_saturated_feedback(SaturatedFeedbackParams(R=2.0))
    res = check_assumption_H(b.strictification, b.sys, hypothesis_grid(b))
    assert res.passed
    alpha = 2.0 * res.alpha_bound
    r = certify_decay_runs(b.sys, b.lyapunov(alpha), alpha, b.initial_conditions(42, 4), b.decay_floor(),
                           b.horizon, samples=100)
    assert r.passed


def test_satfb_amplitude_note_and_validation():
    b = get_bundle("satfb")
    assert any("u_m*pi/2" in n for n in b.notes)
    with pytest.raises(ValueError):
        example_saturated_feedback(SaturatedFeedbackParams(a_m=5.0))
    with pytest.raises(ValueError):
        example_saturated_feedback(SaturatedFeedbackParams(u_m=0.0))


def test_initial_conditions_are_seeded():
    b = get_bundle("friction")
    assert np.array_equal(b.initial_conditions(5, 3), b.initial_conditions(5, 3))
    assert np.all(np.abs(b.initial_conditions(5, 50)) <= b.ic_radius)


def test_bundle_from_description():
    b = bundle_from_description({"name": "lin", "dim": 1, "f": ["-x1*(1 + sin(tau))"], "fbar": ["-x1"],
                                 "decay_floor": "0.25*s^2"})
    assert b.name == "lin" and b.dim == 1
    alpha = 256.0
    r = certify_decay_runs(b.sys, b.lyapunov(alpha), alpha, [[1.0], [-2.0]], b.decay_floor(), 2.0, samples=100)
    assert r.passed
