"""Smooth convex approximation of ``r -> max(-r, 0)`` built from the standard bump.

``J(x) = C exp(1/(x^2 - 1))`` on ``|x| < 1`` with ``int J = 1``;
``J_eps(x) = J(x/eps)/eps``; ``rho_eps(r) = int_{r+eps}^inf J_eps``;
``beta_eps(r) = int_r^inf rho_eps``.  Then ``beta_eps' = -rho_eps`` and
``beta_eps''(r) = J_eps(r + eps) >= 0``, so ``beta_eps`` is convex, vanishes
on ``r >= 0`` and equals ``-eps - r`` for ``r <= -2 eps``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

from scipy import integrate

_QUAD = dict(epsabs=1e-15, epsrel=1e-13, limit=200)


def _bump(x: float) -> float:
    return math.exp(1.0 / (x * x - 1.0)) if abs(x) < 1.0 else 0.0


@lru_cache(maxsize=None)
def mollifier_constant() -> float:
    """``C`` with ``int_{-1}^{1} C exp(1/(x^2-1)) dx = 1``."""
    val, _ = integrate.quad(_bump, -1.0, 1.0, **_QUAD)
    return 1.0 / val


def J(x: float) -> float:
    return mollifier_constant() * _bump(x)


def J_eps(x: float, eps: float) -> float:
    return J(x / eps) / eps


def _cdf(z: float) -> float:
    """``int_{-1}^{z} J``."""
    if z <= -1.0:
        return 0.0
    if z >= 1.0:
        return 1.0
    # integrate the shorter tail for accuracy near either end
    if z <= 0.0:
        val, _ = integrate.quad(J, -1.0, z, **_QUAD)
        return val
    val, _ = integrate.quad(J, z, 1.0, **_QUAD)
    return 1.0 - val


def _upper_tail(z: float) -> float:
    """``int_{z}^{1} J``, computed directly so small values keep relative accuracy."""
    if z >= 1.0:
        return 0.0
    if z <= -1.0:
        return 1.0
    if z >= 0.0:
        val, _ = integrate.quad(J, z, 1.0, **_QUAD)
        return val
    val, _ = integrate.quad(J, -1.0, z, **_QUAD)
    return 1.0 - val


def rho_eps(r: float, eps: float) -> float:
    return _upper_tail(r / eps + 1.0)


def beta_eps_value(r: float, eps: float) -> float:
    """``beta_eps(r) = eps int_{z0}^{1} (z - 1 - r/eps) J(z) dz`` with ``z0 = max(r/eps + 1, -1)``."""
    s = r / eps
    lo = max(s + 1.0, -1.0)
    if lo >= 1.0:
        return 0.0
    val, _ = integrate.quad(lambda z: (z - 1.0 - s) * J(z), lo, 1.0, **_QUAD)
    return eps * val


class BetaEps(NamedTuple):
    beta: float
    rho: float
    J: float  # J_eps(r + eps), which is beta_eps''(r)


def beta_eps(eps: float, r: float) -> BetaEps:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return BetaEps(beta_eps_value(r, eps), rho_eps(r, eps), J_eps(r + eps, eps))


@lru_cache(maxsize=None)
def c_hat() -> float:
    """``int_{-2}^{0} int_{t+1}^{1} J(s) ds dt``; equals one by symmetry of ``J``."""
    val, _ = integrate.quad(lambda t: _upper_tail(t + 1.0), -2.0, 0.0, **_QUAD)
    return val


def beta_second_derivative_sup(eps: float) -> float:
    """``sup beta_eps''`` on ``[-2 eps, 0]``, attained at ``r = -eps``: ``C / (e eps)``."""
    return mollifier_constant() / (math.e * eps)
