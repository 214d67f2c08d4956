"""Gaussian heat kernels, mesh convolution and product-bound scans.

Two normalisations are provided.  ``HALF_LAPLACIAN`` is ``(2 pi t)^{-d/2} exp(-|x|^2/2t)``,
the kernel of ``u_t = u_xx / 2``; ``LAPLACIAN`` is ``(4 pi t)^{-d/2} exp(-|x|^2/4t)``,
the kernel of ``u_t = u_xx`` and the one consistent with the simulator.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .grid import Field


class KernelConvention(str, enum.Enum):
    HALF_LAPLACIAN = "half_laplacian"
    LAPLACIAN = "laplacian"

    @property
    def variance_factor(self) -> float:
        # variance of the 1-D Gaussian K(t, .) is variance_factor * t
        return 1.0 if self is KernelConvention.HALF_LAPLACIAN else 2.0


class KernelResolutionWarning(UserWarning):
    pass


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message}; achieved abs error {achieved:.3g}")
        self.achieved = achieved


def _as_convention(conv) -> KernelConvention:
    return conv if isinstance(conv, KernelConvention) else KernelConvention(conv)


def heat_kernel(t: float, x, conv=KernelConvention.LAPLACIAN, d: int = 1):
    """Pointwise heat kernel; for ``d > 1`` the last axis of ``x`` holds coordinates."""
    if not t > 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    conv = _as_convention(conv)
    x = np.asarray(x, dtype=float)
    r2 = x**2 if d == 1 else np.sum(x**2, axis=-1)
    var = conv.variance_factor * t
    out = (2.0 * math.pi * var) ** (-d / 2.0) * np.exp(-r2 / (2.0 * var))
    return float(out) if np.ndim(out) == 0 else out


def _gauss_window(mean: float, var: float, width: float = 10.0) -> tuple[float, float]:
    s = math.sqrt(var)
    return mean - width * s, mean + width * s


def _quad(func, lo, hi, points=None, epsabs=1e-13, epsrel=1e-12, limit=200):
    val, err = integrate.quad(func, lo, hi, points=points, epsabs=epsabs, epsrel=epsrel, limit=limit)
    return val, err


def kernel_normalization(t: float, conv=KernelConvention.LAPLACIAN) -> float:
    conv = _as_convention(conv)
    lo, hi = _gauss_window(0.0, conv.variance_factor * t)
    val, _ = _quad(lambda x: heat_kernel(t, x, conv), lo, hi, points=[0.0])
    return val


def semigroup_residual(t: float, s: float, x: float, conv=KernelConvention.LAPLACIAN) -> float:
    """``(K(t) * K(s))(x) - K(t + s, x)`` with the convolution done by quadrature."""
    conv = _as_convention(conv)
    vt, vs = conv.variance_factor * t, conv.variance_factor * s
    mean = x * vs / (vt + vs)
    lo, hi = _gauss_window(mean, vt * vs / (vt + vs))
    val, _ = _quad(lambda y: heat_kernel(t, x - y, conv) * heat_kernel(s, y, conv), lo, hi, points=[mean])
    return val - heat_kernel(t + s, x, conv)


def kernel_convolve(u0: Field, t: float, x, conv=KernelConvention.LAPLACIAN):
    """``int K(t, x - y) u0(y) dy`` over the mesh, node weight ``dx``.

    ``u0`` is taken to vanish off the mesh.  A resolution warning is issued
    when ``dx > sqrt(t)/4``; the rule is then no longer spectrally accurate.
    """
    if not t > 0:
        raise ValueError(f"kernel_convolve needs t > 0, got {t}")
    g = u0.grid
    if g.dx > math.sqrt(t) / 4.0:
        warnings.warn(
            f"mesh spacing {g.dx:.3g} is coarse relative to sqrt(t)/4 = {math.sqrt(t) / 4:.3g}",
            KernelResolutionWarning,
            stacklevel=2,
        )
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    kmat = heat_kernel(t, x_arr[:, None] - g.nodes[None, :], conv)
    out = kmat @ u0.values * g.dx
    return float(out[0]) if np.ndim(x) == 0 else out


def indicator_lower_bound_ratios(u0: Field, t_values, x_values, conv=KernelConvention.HALF_LAPLACIAN) -> np.ndarray:
    """Ratios ``(K(t) * u0)(x) / (t^{-1/2} exp(-x^2 / (2 v t)))`` on a (t, x) table.

    ``v`` is the convention's variance factor, so the envelope is a multiple
    of ``K(t, x)`` itself.  A positive minimum over the table is the numerical
    form of the lower bound used for data bounded below on the unit ball.
    """
    conv = _as_convention(conv)
    v = conv.variance_factor
    out = np.empty((len(t_values), len(x_values)))
    for i, t in enumerate(t_values):
        vals = kernel_convolve(u0, t, np.asarray(x_values, dtype=float), conv)
        env = t**-0.5 * np.exp(-np.asarray(x_values, dtype=float) ** 2 / (2.0 * v * t))
        out[i] = vals / env
    return out


@dataclass(frozen=True)
class ProductBoundRow:
    s: float
    t: float
    y: float
    ratio_product: float
    ratio_square: float


@dataclass(frozen=True)
class ProductBoundScan:
    rows: tuple[ProductBoundRow, ...]
    c3_product: float
    c3_square: float
    max_relerr: float


def product_integral(s: float, t: float, y: float, conv=KernelConvention.HALF_LAPLACIAN) -> tuple[float, float]:
    """``int K(t, x) K(t - s, x - y) dx`` by quadrature; returns (value, abserr)."""
    conv = _as_convention(conv)
    v1, v2 = conv.variance_factor * t, conv.variance_factor * (t - s)
    mean = y * v1 / (v1 + v2)
    lo, hi = _gauss_window(mean, v1 * v2 / (v1 + v2))
    return _quad(lambda x: heat_kernel(t, x, conv) * heat_kernel(t - s, x - y, conv), lo, hi, points=[mean])


def square_product_integral(s: float, t: float, y: float, conv=KernelConvention.HALF_LAPLACIAN) -> tuple[float, float]:
    """``int K(t, x) K(t - s, x - y)^2 dx`` by quadrature; returns (value, abserr)."""
    conv = _as_convention(conv)
    v1, v2 = conv.variance_factor * t, conv.variance_factor * (t - s) / 2.0
    mean = y * v1 / (v1 + v2)
    lo, hi = _gauss_window(mean, v1 * v2 / (v1 + v2))
    return _quad(lambda x: heat_kernel(t, x, conv) * heat_kernel(t - s, x - y, conv) ** 2, lo, hi, points=[mean])


def kernel_product_bound_scan(s_fractions, t_grid, y_grid, conv=KernelConvention.HALF_LAPLACIAN, rtol: float = 1e-8) -> ProductBoundScan:
    """Empirical constants for the two kernel-product lower bounds.

    For each ``(s, t, y)`` with ``s = frac * t``::

        R1 = int K(t,x) K(t-s,x-y) dx / [K(s,y) (s/t)^{1/2}]
        R2 = int K(t,x) K(t-s,x-y)^2 dx
             / [K(s,y) (2 pi s)^{1/2} (2 pi t)^{-1/2} (2 pi (t-s))^{-1} (t-s)^{1/2}]

    and the minima over the table are returned as ``c3_product`` / ``c3_square``.
    """
    conv = _as_convention(conv)
    rows = []
    worst = 0.0
    for t in t_grid:
        for frac in s_fractions:
            s = frac * t
            if not 0 < s < t:
                raise ValueError(f"need 0 < s < t, got s={s}, t={t}")
            for y in y_grid:
                i1, e1 = product_integral(s, t, y, conv)
                i2, e2 = square_product_integral(s, t, y, conv)
                for val, err in ((i1, e1), (i2, e2)):
                    worst = max(worst, err / max(abs(val), 1e-300))
                    if err > rtol * abs(val):
                        raise QuadratureError(f"kernel product quadrature at s={s}, t={t}, y={y}", err)
                ks = heat_kernel(s, y, conv)
                r1 = i1 / (ks * math.sqrt(s / t))
                denom2 = ks * math.sqrt(2 * math.pi * s) / math.sqrt(2 * math.pi * t) / (2 * math.pi * (t - s)) * math.sqrt(t - s)
                rows.append(ProductBoundRow(s, t, y, r1, i2 / denom2))
    return ProductBoundScan(
        rows=tuple(rows),
        c3_product=min(r.ratio_product for r in rows),
        c3_square=min(r.ratio_square for r in rows),
        max_relerr=worst,
    )
