"""Kernel-weighted moments on truncated whole-space meshes and the mean-field super-solution test."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from ..grid import Field, GridSpec
from ..kernel import KernelConvention, KernelResolutionWarning, heat_kernel
from ..model import DriftKind, DiffusionKind, ModelSpec
from .classify import FujitaClass, fujita_classify


def _kernel_mass_outside(g: GridSpec, t: float, conv: KernelConvention) -> float:
    sd = math.sqrt(conv.variance_factor * t)
    return math.erfc(min(-g.a, g.b) / (sd * math.sqrt(2.0)))


def kernel_weighted_moment(v, t: float, conv=KernelConvention.LAPLACIAN, grid: Optional[GridSpec] = None) -> float:
    """``G(t) = int K(t, x) v(x) dx`` with node weights ``dx``.

    ``v`` is a Field (or raw values with ``grid``).  A warning is issued when
    more than ``1e-6`` of the kernel mass lies off the mesh or the mesh is too
    coarse to resolve ``K(t, .)``.
    """
    if not t > 0:
        raise ValueError(f"need t > 0, got {t}")
    conv = KernelConvention(conv)
    if isinstance(v, Field):
        grid, vals = v.grid, v.values
    else:
        if grid is None:
            raise ValueError("raw values need a grid")
        vals = np.asarray(v, dtype=float)
    outside = _kernel_mass_outside(grid, t, conv)
    if outside > 1e-6 or grid.dx > math.sqrt(t) / 4.0:
        warnings.warn(
            f"kernel K({t:g}, .) is poorly represented on the mesh (mass off-mesh {outside:.2e}, dx {grid.dx:.3g})",
            KernelResolutionWarning,
            stacklevel=2,
        )
    return float(np.dot(heat_kernel(t, grid.nodes, conv), vals) * grid.dx)


@dataclass(frozen=True)
class GrowthRecursionFit:
    """Fit of ``t^d G(t) >= C2 + C4 int_{t0}^t s^(d/2) G(s)^m ds`` along a series."""

    times: np.ndarray
    G: np.ndarray
    lhs: np.ndarray  # t^d G(t)
    integral: np.ndarray
    C2: float
    C4: float
    holds: bool


def growth_recursion_fit(times: Sequence[float], G: Sequence[float], m: float, d: int = 1) -> GrowthRecursionFit:
    """Largest constants making the recursion hold at every sample.

    ``C2`` is the minimum of ``t^d G`` over the samples; ``C4`` the largest
    value with ``t^d G >= C2 + C4 * integral`` everywhere (trapezoid integral
    from the first sample).  ``holds`` reports ``C4 > 0``: the samples carry a
    positive growth constant.
    """
    t = np.asarray(times, dtype=float)
    G = np.asarray(G, dtype=float)
    lhs = t**d * G
    integral = integrate.cumulative_trapezoid(t ** (d / 2.0) * G**m, t, initial=0.0)
    c2 = float(np.min(lhs))
    mask = integral > 0
    c4 = float(np.min((lhs[mask] - c2) / integral[mask])) if np.any(mask) else 0.0
    return GrowthRecursionFit(t, G, lhs, integral, c2, c4, c4 > 0)


@dataclass(frozen=True)
class SupersolutionReport:
    ran: bool
    reason: str
    samples: tuple = field(default_factory=tuple)  # (t, x, Eu, duhamel_rhs, tolerance)
    passed: bool = False
    fujita: Optional[FujitaClass] = None


def _duhamel_rhs(grid, times, mean, u0, C0, p, t_idx, x_idx, conv):
    """``(K(t) u0)(x) + C0 int_0^t (K(t-s) (Eu)^p(s))(x) ds`` by trapezoid in ``s``."""
    x = grid.nodes[x_idx]
    t = times[t_idx]
    lin = float(np.dot(heat_kernel(t, x - grid.nodes, conv), u0.values) * grid.dx)
    vals = []
    for j in range(t_idx + 1):
        src = np.maximum(mean[j], 0.0) ** p
        lag = t - times[j]
        if lag <= 0:
            vals.append(src[x_idx])
        else:
            vals.append(float(np.dot(heat_kernel(lag, x - grid.nodes, conv), src) * grid.dx))
    duh = float(integrate.trapezoid(vals, times[: t_idx + 1])) if t_idx > 0 else 0.0
    return lin + C0 * duh


def expectation_supersolution_check(
    times: Sequence[float],
    mean_field: np.ndarray,
    mean_stderr: Optional[np.ndarray],
    u0: Field,
    model: ModelSpec,
    d: int = 1,
    sample_times: Optional[Sequence[int]] = None,
    sample_nodes: Optional[Sequence[int]] = None,
    rtol: float = 0.05,
    conv=KernelConvention.LAPLACIAN,
) -> SupersolutionReport:
    """Check ``Eu(x,t) >= K(t) u0 + C0 int_0^t K(t-s) (Eu)^p`` at sampled points.

    Needs a non-negative datum, a drift ``C0 u^p`` that is non-negative for
    ``u <= 0`` and a multiplicative diffusion vanishing at zero; otherwise the
    check refuses to run and says why.  A sample passes when
    ``Eu + 2 stderr >= rhs (1 - rtol)``; ``rtol`` absorbs the time quadrature
    of the Duhamel term and the finite mesh.
    """
    drift = model.drift
    if drift.kind is DriftKind.ZERO:
        return SupersolutionReport(False, "no power drift: nothing to compare")
    if not drift.nonnegative_below_zero:
        return SupersolutionReport(False, "drift is negative for u < 0, so solutions need not stay non-negative")
    if model.diffusion.kind is DiffusionKind.ADDITIVE:
        return SupersolutionReport(False, "additive noise does not vanish at u = 0, so positivity is not guaranteed")
    if np.any(u0.values < 0):
        return SupersolutionReport(False, "initial datum has negative values")
    grid = u0.grid
    t = np.asarray(times, dtype=float)
    mean = np.asarray(mean_field, dtype=float)
    se = np.zeros_like(mean) if mean_stderr is None else np.nan_to_num(np.asarray(mean_stderr, dtype=float))
    conv = KernelConvention(conv)
    t_idx = list(sample_times) if sample_times is not None else [i for i in range(len(t)) if t[i] > 0]
    x_idx = list(sample_nodes) if sample_nodes is not None else list(range(0, grid.n, max(1, grid.n // 16)))
    samples = []
    ok = True
    for i in t_idx:
        for k in x_idx:
            rhs = _duhamel_rhs(grid, t, mean, u0, drift.C0, drift.p, i, k, conv)
            lhs = float(mean[i, k])
            tol = 2.0 * float(se[i, k])
            good = lhs + tol >= rhs * (1.0 - rtol)
            ok &= good
            samples.append((float(t[i]), float(grid.nodes[k]), lhs, rhs, tol))
    return SupersolutionReport(True, "", tuple(samples), bool(ok), fujita_classify(drift.p, d))
