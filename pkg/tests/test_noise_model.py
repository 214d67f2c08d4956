from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spde_lab.grid import GridSpec
from spde_lab.model import (
    DiffusionBounds,
    DiffusionSpec,
    DriftSpec,
    decaying_sine_amplitude,
    diffusion_values,
    drift_values,
    verify_bounds,
)
from spde_lab.noise import (
    NoiseModel,
    RngStream,
    bridge_split,
    covariance_bounds,
    exponential_covariance,
    gaussian_covariance,
    sample_increment,
    tent_covariance,
)


def test_streams_are_reproducible_and_distinct():
    a = RngStream(1, 0).at_step(5).standard_normal(8)
    assert np.array_equal(a, RngStream(1, 0).at_step(5).standard_normal(8))
    assert np.array_equal(a, RngStream(1, 0).normals_at(5, 8))
    assert not np.allclose(a, RngStream(1, 1).at_step(5).standard_normal(8))
    assert not np.allclose(a, RngStream(2, 0).at_step(5).standard_normal(8))
    assert not np.allclose(a, RngStream(1, 0).at_step(5).child(1, 0).standard_normal(8))


def test_neighbouring_blocks_are_uncorrelated():
    z = np.array([RngStream(0, 0).normals_at(k, 1)[0] for k in range(4096)])
    w = np.array([RngStream(0, 0).normals_at(k + 64, 1)[0] for k in range(4096)])
    assert abs(np.corrcoef(z, w)[0, 1]) < 4 / math.sqrt(4096)


def test_white_noise_variance():
    g = GridSpec(0.0, 1.0, 50)
    dt = 1e-3
    draws = np.array([RngStream(7, i).normals_at(0, g.n)[10] for i in range(20000)]) * math.sqrt(dt / g.dx)
    var = draws.var(ddof=1)
    se = var * math.sqrt(2 / (len(draws) - 1))
    assert abs(var - dt / g.dx) <= 3 * se
    inc = sample_increment(NoiseModel.white(), g, dt, RngStream(7, 0))
    assert inc.shape == (g.n,)


def test_scalar_increment_is_a_float():
    inc = sample_increment(NoiseModel.scalar(), GridSpec(0.0, 1.0, 10), 0.01, RngStream(0, 0))
    assert isinstance(inc, float)


def test_bridge_split_preserves_sum():
    g = GridSpec(0.0, 1.0, 20)
    model = NoiseModel.correlated(exponential_covariance())
    dW = sample_increment(model, g, 0.01, RngStream(0, 0))
    left, right = bridge_split(model, g, 0.01, dW, RngStream(0, 0).child(1, 0))
    assert np.allclose(left + right, dW, atol=1e-15)


def test_bridge_halves_have_half_variance():
    g = GridSpec(0.0, 1.0, 4)
    model = NoiseModel.scalar()
    lefts = []
    for i in range(20000):
        dW = sample_increment(model, g, 1.0, RngStream(3, i))
        left, _ = bridge_split(model, g, 1.0, dW, RngStream(3, i).child(1, 0))
        lefts.append(left)
    var = np.var(lefts, ddof=1)
    assert abs(var - 0.5) <= 3 * 0.5 * math.sqrt(2 / 20000)


def test_covariance_bounds_examples():
    g = GridSpec(0.0, 1.0, 40)
    assert covariance_bounds(tent_covariance(2.0, 1.0), g) == pytest.approx((1.0, 2.0))
    assert covariance_bounds(exponential_covariance(1.0, 1.0), g) == pytest.approx((math.exp(-1), 1.0))
    lo, hi = covariance_bounds(gaussian_covariance(1.0, 1.0), g)
    assert 0 < lo < hi == pytest.approx(1.0)


def test_correlated_noise_requires_covariance():
    with pytest.raises(ValueError):
        NoiseModel("correlated")


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3), st.floats(0.2, 4), st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=10))
def test_odd_power_drift_is_odd(C0, p, u):
    u = np.array(u)
    spec = DriftSpec.power_odd(C0, p)
    f = drift_values(spec, u)
    assert np.all(np.isfinite(f))
    assert np.allclose(drift_values(spec, -u), -f)


def test_positive_part_drift_vanishes_below_zero():
    spec = DriftSpec.power_pos(1.0, 2.0)
    assert np.array_equal(drift_values(spec, np.array([-3.0, 0.0, 2.0])), [0.0, 0.0, 4.0])
    assert spec.nonnegative_below_zero


def test_sublinear_drift_is_finite_at_zero():
    assert np.array_equal(drift_values(DriftSpec.power_odd(1.0, 0.5), np.zeros(3)), np.zeros(3))


def test_verify_bounds_catches_wrong_constant():
    ok = verify_bounds(DiffusionSpec.power_abs(2.0, 1.5))
    assert ok.passed
    bad = verify_bounds(DiffusionSpec.power_abs(2.0, 1.5, DiffusionBounds(C1=3.0, C2=2.0, gamma=1.5, gamma1=1.5)))
    assert not bad.passed
    assert bad.worst_ratio == pytest.approx(1.5)


def test_additive_diffusion_ignores_state():
    sigma, grad = decaying_sine_amplitude(2.0, 1.0)
    spec = DiffusionSpec.additive(sigma, grad)
    x = np.linspace(0.1, 0.9, 5)
    a = diffusion_values(spec, np.zeros(5), x, 0.3)
    b = diffusion_values(spec, np.full(5, 7.0), x, 0.3)
    assert np.array_equal(a, b)
    assert np.allclose(a, 2.0 * np.sin(math.pi * x) * math.exp(-0.3))
    h = 1e-6
    assert np.allclose((sigma(x + h, 0.3) - sigma(x - h, 0.3)) / (2 * h), grad(x, 0.3), atol=1e-6)
