from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from spde_lab.grid import GridSpec, principal_eigenpair
from spde_lab.kernel import heat_kernel
from spde_lab.model import DiffusionSpec, DriftSpec, ModelSpec
from spde_lab.theory import (
    FujitaClass,
    KaplanParams,
    Verdict,
    beta_eps,
    beta_second_derivative_sup,
    blowup_time_bound,
    c_hat,
    closed_form_blowup_time,
    concavity_certificate,
    concavity_monitor,
    concavity_monitor_scan,
    eigen_moment_threshold,
    eps_moment_global_condition,
    eps_moment_rate,
    expectation_supersolution_check,
    fujita_classify,
    growth_recursion_fit,
    interpolation_coeffs,
    jsonable,
    kaplan_ode_solve,
    labeled_blowup_bounds,
    mollifier_constant,
    whole_space_noise_classify,
)
from spde_lab.model import decaying_sine_amplitude

PI2 = math.pi**2


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 20), st.floats(0.5, 5), st.floats(1.5, 3.5), st.floats(1.5, 6))
def test_ode_blowup_time_matches_closed_form(damp, gain, gamma, ratio):
    # eta0 above the equilibrium (damp/gain)^(1/(gamma-1)) by a factor ``ratio``
    eta0 = ratio * (damp / gain) ** (1 / (gamma - 1))
    exact = closed_form_blowup_time(eta0, damp, gain, gamma)
    traj = kaplan_ode_solve(KaplanParams(PI2, gain, damp, gamma, eta0), 10 * exact)
    assert traj.blowup_time == pytest.approx(exact, rel=1e-8)
    assert blowup_time_bound(eta0, damp, gain, gamma).value == pytest.approx(exact, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 20), st.floats(0.5, 5), st.floats(0.2, 0.95))
def test_below_equilibrium_the_moment_decays(damp, gain, ratio):
    eta0 = ratio * damp / gain
    traj = kaplan_ode_solve(KaplanParams(PI2, gain, damp, 2.0, eta0), 1.0)
    assert math.isinf(traj.blowup_time)
    assert traj(1.0) < eta0
    assert blowup_time_bound(eta0, damp, gain, 2.0).verdict is Verdict.INDETERMINATE


def test_labeled_bounds_differ_by_factor_two():
    b = labeled_blowup_bounds(2 * PI2, PI2, 1.0, 1.0, 2.0)
    assert b["unit_gain"].value == pytest.approx(math.log(2) / PI2, abs=1e-12)
    assert b["doubled_gain"].value == pytest.approx(math.log(2) / (2 * PI2), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(1.1, 4), st.floats(0.2, 5), st.floats(0.2, 5))
def test_eigen_threshold_is_monotone_in_projection(proj, gamma, q1, C1):
    lo = eigen_moment_threshold(proj, None, gamma, q1, C1, PI2)
    hi = eigen_moment_threshold(2 * proj, None, gamma, q1, C1, PI2)
    if lo.verdict is Verdict.BLOWUP_PREDICTED:
        assert hi.verdict is Verdict.BLOWUP_PREDICTED


def test_eps_rate_example():
    assert eps_moment_rate(0.5, PI2, 1.0, 1.0) == pytest.approx(5.0598, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.2, 5), st.floats(0.2, 5), st.floats(1e-3, 10))
def test_interpolation_inequality_holds_on_scan(r, dm, dn, eps):
    m, n = r + dm, r + dm + dn
    c = interpolation_coeffs(r, m, n, eps)
    assert 0 < c.beta < m
    assert 1 / c.young_p + 1 / c.young_q == pytest.approx(1.0)
    assert c.scan_residual <= 1e-12 * max(1.0, c.C_eps)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.01, 10), st.floats(0.01, 10))
def test_global_condition_requires_m_above_p(p, dm):
    m = p + dm
    g = eps_moment_global_condition(m, p)
    assert g.holds == ((m - p) * (2 * m - 1) > m * p)
    assert not eps_moment_global_condition(p, m).holds


@pytest.mark.parametrize("p,d,expected", [
    (0.5, 1, FujitaClass.SUBLINEAR_GLOBAL_NONUNIQUE),
    (1.0, 1, FujitaClass.INDETERMINATE),
    (3.0, 1, FujitaClass.BLOWUP_ALL_NONTRIVIAL),
    (3.0001, 1, FujitaClass.SMALL_DATA_GLOBAL_LARGE_DATA_BLOWUP),
    (2.0, 2, FujitaClass.BLOWUP_ALL_NONTRIVIAL),
    (1.6, 3, FujitaClass.BLOWUP_ALL_NONTRIVIAL),
    (1.7, 4, FujitaClass.SMALL_DATA_GLOBAL_LARGE_DATA_BLOWUP),
])
def test_fujita_table(p, d, expected):
    assert fujita_classify(p, d) is expected


def test_whole_space_classifier_cases():
    assert whole_space_noise_classify("white", 1.5, 1) is Verdict.BLOWUP_PREDICTED
    assert whole_space_noise_classify("white", 1.0, 1) is Verdict.INDETERMINATE
    assert whole_space_noise_classify("white", 1.2, 2) is Verdict.INDETERMINATE
    assert whole_space_noise_classify("scalar", 2.0, 1) is Verdict.BLOWUP_PREDICTED
    assert whole_space_noise_classify("scalar", 1.5, 1) is Verdict.INDETERMINATE
    assert whole_space_noise_classify("scalar", 0.5, 1, sublinear_p=0.5) is Verdict.GLOBAL_PREDICTED
    assert whole_space_noise_classify("white", 0.5, 1, sublinear_p=0.5) is Verdict.INDETERMINATE


def test_mollifier_constant_and_c_hat():
    C = mollifier_constant()
    assert C == pytest.approx(1 / 0.443994, rel=1e-5)
    assert c_hat() == pytest.approx(1.0, abs=1e-12)
    assert beta_second_derivative_sup(0.5) == pytest.approx(C / (math.e * 0.5))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-3.0, 1.0))
def test_mollifier_shape(eps, s):
    r = s * eps
    b = beta_eps(eps, r)
    assert b.beta >= 0
    assert 0 <= b.rho <= 1 + 1e-12
    assert b.J >= 0
    # beta dominates the kink max(-r, 0) shifted by at most eps*(2 - C_hat)
    assert b.beta >= max(-r, 0.0) - 2 * eps


def test_concavity_certificate_sign_change():
    g = GridSpec(0.0, 1.0, 255)
    crit = math.sqrt((PI2 / 4) / (3 / 32))
    below = concavity_certificate(g.sample(lambda x: 0.9 * crit * np.sin(math.pi * x)), None, None, 3.0, 1.0)
    above = concavity_certificate(g.sample(lambda x: 1.1 * crit * np.sin(math.pi * x)), None, None, 3.0, 1.0)
    assert below.verdict is Verdict.INDETERMINATE
    assert above.verdict is Verdict.BLOWUP_PREDICTED


def test_concavity_noise_term_scales_quadratically():
    g = GridSpec(0.0, 1.0, 127)
    u0 = g.sample(lambda x: 5 * np.sin(math.pi * x))
    s1, g1 = decaying_sine_amplitude(1.0, 2.0)
    s2, g2 = decaying_sine_amplitude(2.0, 2.0)
    c0 = concavity_certificate(u0, None, None, 3.0, 10.0)
    c1 = concavity_certificate(u0, s1, g1, 3.0, 10.0)
    c2 = concavity_certificate(u0, s2, g2, 3.0, 10.0)
    assert c1.noise_term < 0
    assert c2.noise_term == pytest.approx(4 * c1.noise_term, rel=1e-10)
    assert c0.value - c1.value == pytest.approx(-c1.noise_term)
    # on the mesh dx * sum cos^2(pi x_i) = (n - 1) / (2 (n + 1)), and int_0^inf e^{-4t} dt = 1/4
    mesh_energy = PI2 * (g.n - 1) / (2 * (g.n + 1))
    assert c1.noise_term == pytest.approx(-0.5 * mesh_energy / 4, rel=1e-8)


def test_concavity_monitor_on_blowing_up_profile():
    # v = (1 - t)^-2 makes I'' I - (1+alpha) I'^2 > 0 for alpha < 1/2 when A = 1
    t = np.linspace(0, 0.9, 91)
    v = (1 - t) ** -2.0
    tr = concavity_monitor(t, v, 0.1, 1.0, h=2 * (1 - t) ** -3.0)
    assert tr.all_hold
    traces, ok = concavity_monitor_scan(t, np.exp(-t))
    assert ok is None and len(traces) == 6


def test_growth_recursion_fit_on_power_growth():
    t = np.linspace(1, 4, 31)
    fit = growth_recursion_fit(t, t**-0.5 * (1 + t), m=1.2)
    assert fit.holds
    assert np.all(fit.lhs >= fit.C2 + fit.C4 * fit.integral - 1e-12)
    flat = growth_recursion_fit(t, t**-1.0, m=1.2)
    assert not flat.holds


def test_supersolution_refusals():
    g = GridSpec(-10, 10, 100)
    u0 = g.sample(lambda x: np.exp(-x**2))
    times = np.array([0.0, 0.1])
    mean = np.vstack([u0.values, u0.values])
    rep = expectation_supersolution_check(times, mean, None, u0, ModelSpec(DriftSpec.power_odd(1, 2), DiffusionSpec.zero()))
    assert not rep.ran and "negative" in rep.reason
    rep = expectation_supersolution_check(times, mean, None, u0 * -1.0, ModelSpec(DriftSpec.power_pos(1, 2), DiffusionSpec.zero()))
    assert not rep.ran


def test_supersolution_holds_for_heat_flow():
    g = GridSpec(-15, 15, 600)
    u0 = g.sample(lambda x: heat_kernel(0.5, x))
    times = np.linspace(0, 0.5, 11)
    mean = np.array([heat_kernel(0.5 + t, g.nodes) for t in times])
    model = ModelSpec(DriftSpec.power_pos(1.0, 2.0), DiffusionSpec.zero())
    rep = expectation_supersolution_check(times, mean, None, u0, model, rtol=0.05)
    assert rep.ran
    # the heat flow misses the nonlinear source, so it is not a supersolution of the Duhamel inequality
    assert not rep.passed
    assert rep.fujita is FujitaClass.BLOWUP_ALL_NONTRIVIAL


def test_reports_serialise_to_json():
    rep = eigen_moment_threshold(math.pi, None, 2, 1, 1, PI2)
    text = json.dumps(jsonable(rep))
    back = json.loads(text)
    assert back["verdict"] == "BlowupPredicted"
    assert back["extras"]["blowup_time_bounds"]["unit_gain"]["value"] in ("inf", "Infinity") or back["extras"]["blowup_time_bounds"]["unit_gain"]["value"] > 0


def test_interpolation_limit_m_to_n():
    near = interpolation_coeffs(1.0, 3.0 - 1e-3, 3.0, 0.5)
    assert near.beta == pytest.approx(5e-4)
    assert math.isinf(near.C_eps)
    assert interpolation_coeffs(1.0, 3.0 - 1e-3, 3.0, 2.0).C_eps < 1e-12
    assert interpolation_coeffs(1.0, 1.0 + 1e-3, 3.0, 1.0).beta == pytest.approx(1.0, abs=1e-3)
