from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spde_lab.grid import (
    GridSpec,
    closed_form_eigenpair,
    h1_seminorm,
    inner_product,
    integrate,
    laplacian_values,
    lp_integral,
    lp_norm,
    principal_eigenpair,
)
from spde_lab.kernel import (
    KernelConvention,
    KernelResolutionWarning,
    heat_kernel,
    indicator_lower_bound_ratios,
    kernel_convolve,
    kernel_normalization,
    kernel_product_bound_scan,
    semigroup_residual,
)

PI2 = math.pi**2


def test_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        GridSpec(1.0, 0.0, 10)
    with pytest.raises(ValueError):
        GridSpec(0.0, 1.0, 1)


def test_laplacian_of_sine_is_second_order():
    errs = []
    for n in (32, 64, 128):
        g = GridSpec(0.0, 1.0, n)
        f = np.sin(math.pi * g.nodes)
        errs.append(np.max(np.abs(laplacian_values(f, g.dx) + PI2 * f)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_principal_eigenpair_matches_discrete_closed_form():
    g = GridSpec(0.0, 1.0, 100)
    lam, phi = principal_eigenpair(g)
    lam_exact, vec = closed_form_eigenpair(g)
    assert lam == pytest.approx(lam_exact, rel=1e-12)
    vec = vec / (vec.sum() * g.dx)
    assert np.max(np.abs(phi.values - vec)) < 1e-10
    assert integrate(phi) == pytest.approx(1.0, abs=1e-12)
    assert np.all(phi.values >= 0)


def test_eigenfunction_converges_to_scaled_sine():
    devs = []
    for n in (64, 256):
        g = GridSpec(0.0, 1.0, n)
        _, phi = principal_eigenpair(g)
        devs.append(np.max(np.abs(phi.values - 0.5 * math.pi * np.sin(math.pi * g.nodes))))
    assert devs[1] < devs[0] < 1e-3


def test_eigenvalue_interval_scaling():
    lam, _ = principal_eigenpair(GridSpec(0.0, 2.0, 400))
    assert lam == pytest.approx(PI2 / 4, rel=1e-4)


def test_h1_and_norms_of_sine():
    g = GridSpec(0.0, 1.0, 1000)
    f = g.sample(lambda x: np.sin(math.pi * x))
    assert h1_seminorm(f) == pytest.approx(PI2 / 2, rel=1e-5)
    assert lp_integral(f, 2) == pytest.approx(0.5, rel=1e-10)
    assert lp_integral(f, 4) == pytest.approx(3 / 8, rel=1e-10)
    assert lp_norm(f, 2) == pytest.approx(math.sqrt(0.5), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(8, 80))
def test_inner_product_is_bilinear(c1, c2, n):
    g = GridSpec(0.0, 1.0, n)
    rng = np.random.default_rng(n)
    f, h, w = (g.field(rng.standard_normal(n)) for _ in range(3))
    lhs = inner_product(f * c1 + h * c2, w)
    rhs = c1 * inner_product(f, w) + c2 * inner_product(h, w)
    assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(c1) + abs(c2)) * n)


@pytest.mark.parametrize("conv", list(KernelConvention))
@pytest.mark.parametrize("t", [0.01, 1.0, 100.0])
def test_kernel_normalises(conv, t):
    assert kernel_normalization(t, conv) == pytest.approx(1.0, abs=1e-8)


def test_kernel_conventions_differ_by_time_scale():
    x = np.linspace(-3, 3, 13)
    assert np.allclose(heat_kernel(1.0, x, KernelConvention.HALF_LAPLACIAN), heat_kernel(0.5, x, KernelConvention.LAPLACIAN))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(-4, 4), st.sampled_from(list(KernelConvention)))
def test_semigroup_identity(t, s, x, conv):
    assert abs(semigroup_residual(t, s, x, conv)) <= 1e-6


def test_convolution_of_kernel_is_kernel():
    g = GridSpec(-20.0, 20.0, 2000)
    u0 = g.sample(lambda x: heat_kernel(0.5, x))
    x = np.array([0.0, 1.0, -2.0])
    assert np.allclose(kernel_convolve(u0, 1.0, x), heat_kernel(1.5, x), atol=1e-10)


def test_convolution_warns_on_coarse_mesh():
    g = GridSpec(-5.0, 5.0, 20)
    with pytest.warns(KernelResolutionWarning):
        kernel_convolve(g.sample(lambda x: 1.0 + 0 * x), 0.01, 0.0)


def test_indicator_lower_bound_positive():
    g = GridSpec(-30.0, 30.0, 3000)
    u0 = g.sample(lambda x: (np.abs(x) <= 1).astype(float))
    ratios = indicator_lower_bound_ratios(u0, [1.0, 2.0, 4.0], [0.0, 1.0, 3.0])
    assert np.all(ratios > 0)
    # with t=2 and x=0 the ratio is bounded below by a t-independent constant
    assert ratios[1, 0] > 0.5


def test_product_bound_closed_form_at_origin():
    scan = kernel_product_bound_scan([0.5], [2.0], [0.0], KernelConvention.HALF_LAPLACIAN)
    row = scan.rows[0]
    # int K(t,x) K(t/2,x) dx = K(3t/2, 0) for the half-Laplacian convention
    expected = heat_kernel(3.0, 0.0, KernelConvention.HALF_LAPLACIAN) / (heat_kernel(1.0, 0.0, KernelConvention.HALF_LAPLACIAN) * math.sqrt(0.5))
    assert row.ratio_product == pytest.approx(expected, rel=1e-8)
    assert scan.c3_product > 0 and scan.c3_square > 0


def test_discrete_eigenvalue_increases_toward_pi_squared():
    lams = [principal_eigenpair(GridSpec(0.0, 1.0, n))[0] for n in (16, 32, 64, 128, 256)]
    assert all(a < b < PI2 for a, b in zip(lams, lams[1:]))
    errs = [PI2 - lam for lam in lams]
    assert errs[-2] / errs[-1] == pytest.approx(4.0, rel=0.02)
