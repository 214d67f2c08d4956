from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spde_lab.ensemble import (
    CSV_COLUMNS,
    EnsembleConfig,
    LpMoment,
    MeanField,
    SquaredEigenMoment,
    empirical_vs_ode_lower_bound,
    functional_from_name,
    run_ensemble,
    series_from_csv,
    series_to_csv,
)
from spde_lab.grid import GridSpec, inner_product, principal_eigenpair
from spde_lab.integrator import SolverConfig, TruncationWarning, VerdictKind, detect_blowup, simulate_path, step
from spde_lab.model import DiffusionSpec, DriftSpec, ModelSpec
from spde_lab.noise import NoiseModel, RngStream, constant_covariance
from spde_lab.theory import blowup_time_bound

G = GridSpec(0.0, 1.0, 32)
HEAT = ModelSpec(DriftSpec.zero(), DiffusionSpec.zero())


def test_implicit_step_is_exact_on_eigenmode():
    lam, phi = principal_eigenpair(G)
    dt = 1e-3
    out = step(phi, 0.0, dt, HEAT, np.zeros(G.n))
    assert np.allclose(out.values, phi.values / (1 + dt * lam), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=32, max_size=32), st.floats(1e-5, 1.0))
def test_implicit_step_preserves_sign(vals, dt):
    out = step(G.field(np.array(vals)), 0.0, dt, HEAT, np.zeros(G.n))
    assert np.all(out.values >= 0)


def test_heat_decay_of_projection():
    g = GridSpec(0.0, 1.0, 128)
    lam, phi = principal_eigenpair(g)
    res = simulate_path(HEAT, g, NoiseModel.white(), SolverConfig(dt0=1e-4, t_end=0.2, record_times=(0.0, 0.2)),
                        RngStream(0, 0), phi)
    assert res.u_hat[-1] == pytest.approx(math.exp(-lam * 0.2) * res.u_hat[0], rel=0.02)
    assert res.verdict.kind is VerdictKind.COMPLETED


def test_deterministic_blowup_before_kaplan_bound():
    g = GridSpec(0.0, 1.0, 128)
    lam, phi = principal_eigenpair(g)
    u0 = phi * (4 * lam / inner_product(phi, phi))
    model = ModelSpec(DriftSpec.power_pos(1.0, 2.0), DiffusionSpec.zero())
    res = simulate_path(model, g, NoiseModel.white(), SolverConfig(dt0=1e-5, t_end=1.0), RngStream(0, 0), u0)
    assert res.blown
    assert res.verdict.t <= blowup_time_bound(inner_product(u0, phi), lam, 1.0, 2.0).value
    assert res.n_rejected > 0


def test_detect_blowup_reasons():
    cfg = SolverConfig(dt0=1e-3, u_max=10.0, dt_min=1e-9)
    assert detect_blowup(G.field(np.full(G.n, np.nan)), 1e-3, cfg) == "non_finite"
    assert detect_blowup(G.field(np.full(G.n, 11.0)), 1e-3, cfg) == "sup_norm"
    assert detect_blowup(G.zeros(), 1e-10, cfg) == "dt_collapse"
    assert detect_blowup(G.zeros(), 1e-3, cfg) is None


def test_record_times_snap_to_macro_grid():
    cfg = SolverConfig(dt0=0.01, t_end=0.1, record_times=(0.0, 0.033, 0.1))
    assert cfg.record_steps() == [0, 4, 10]
    res = simulate_path(HEAT, G, NoiseModel.white(), cfg, RngStream(0, 0), G.sample(np.sin))
    assert np.allclose(res.times, [0.0, 0.04, 0.1])


def test_paths_are_reproducible_with_refinement():
    model = ModelSpec(DriftSpec.zero(), DiffusionSpec.power_abs(1.0, 2.0))
    noise = NoiseModel.correlated(constant_covariance(1.0))
    lam, phi = principal_eigenpair(G)
    u0 = phi * (2 * math.pi / inner_product(phi, phi))
    cfg = SolverConfig(dt0=1e-3, t_end=0.05, record_times=(0.01, 0.05))
    a = simulate_path(model, G, noise, cfg, RngStream(4, 2), u0)
    b = simulate_path(model, G, noise, cfg, RngStream(4, 2), u0)
    assert np.array_equal(a.snapshots, b.snapshots, equal_nan=True)
    assert a.verdict == b.verdict and a.n_rejected == b.n_rejected


def test_truncation_warning_when_mass_reaches_boundary():
    g = GridSpec(-2.0, 2.0, 40)
    with pytest.warns(TruncationWarning):
        simulate_path(HEAT, g, NoiseModel.white(), SolverConfig(dt0=1e-2, t_end=1.0), RngStream(0, 0),
                      g.sample(lambda x: np.ones_like(x)), whole_space=True)


# ---------------------------------------------------------------- ensemble


def _series(model, m, noise=None, times=(0.0, 0.02, 0.04), funcs=(SquaredEigenMoment(),), seed=0):
    lam, phi = principal_eigenpair(G)
    u0 = G.sample(lambda x: np.sin(math.pi * x))
    return run_ensemble(model, G, noise or NoiseModel.scalar(), SolverConfig(dt0=1e-3, t_end=times[-1]),
                        EnsembleConfig(m, seed, times, funcs), u0)


def test_zero_noise_gives_zero_stderr():
    res = _series(HEAT, 8)
    est, se = res.series.column("eigen_moment_sq")
    assert np.all(se == 0)
    assert np.all(np.diff(est) < 0)


def test_single_path_stderr_is_nan():
    res = _series(HEAT, 1)
    _, se = res.series.column("eigen_moment_sq")
    assert np.all(np.isnan(se))


def test_ensemble_independent_of_thread_count(monkeypatch):
    model = ModelSpec(DriftSpec.zero(), DiffusionSpec.linear(1.0))
    monkeypatch.setenv("SPDE_LAB_THREADS", "1")
    a = series_to_csv(_series(model, 12).series)
    monkeypatch.setenv("SPDE_LAB_THREADS", "4")
    b = series_to_csv(_series(model, 12).series)
    assert a == b


def test_censoring_uses_trigger_state():
    model = ModelSpec(DriftSpec.power_pos(1.0, 2.0), DiffusionSpec.zero())
    lam, phi = principal_eigenpair(G)
    u0 = phi * (10 * lam / inner_product(phi, phi))
    res = run_ensemble(model, G, NoiseModel.white(), SolverConfig(dt0=1e-4, t_end=0.05),
                       EnsembleConfig(2, 0, (0.0, 0.05), (SquaredEigenMoment(),)), u0)
    assert list(res.series.censored) == [False, True]
    assert res.series.blown_fraction[-1] == 1.0
    est, _ = res.series.column("eigen_moment_sq")
    assert np.isfinite(est[-1]) and est[-1] > est[0]


def test_checkpoint_comparison_logic():
    res = _series(HEAT, 4)
    lam, _ = principal_eigenpair(G)
    est, _ = res.series.column("eigen_moment_sq")
    low = empirical_vs_ode_lower_bound(res.series, lambda t: 0.5 * est[0] * math.exp(-2 * lam * t))
    high = empirical_vs_ode_lower_bound(res.series, lambda t: 2 * est[0])
    assert all(c.passed for c in low)
    assert not any(c.passed for c in high)


def test_csv_round_trip_with_field_functional():
    funcs = (SquaredEigenMoment(), LpMoment(3.0), MeanField())
    res = _series(ModelSpec(DriftSpec.zero(), DiffusionSpec.linear(1.0)), 6, funcs=funcs)
    text = series_to_csv(res.series)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    back = series_from_csv(text)
    t, est, se = back["eigen_moment_sq"]
    e0, s0 = res.series.column("eigen_moment_sq")
    assert np.array_equal(est, e0) and np.array_equal(se, s0)
    assert "mean_field[0]" in back and f"mean_field[{G.n - 1}]" in back


def test_functional_lookup():
    assert functional_from_name("lp_moment", 4).name == LpMoment(4.0).name
    with pytest.raises(KeyError):
        functional_from_name("nope")
