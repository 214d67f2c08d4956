"""Interpolation constants and the eps-moment global-existence condition."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class InterpolationCoeffs:
    beta: float
    C_eps: float
    young_p: float
    young_q: float
    scan_residual: float


def interpolation_coeffs(r: float, m: float, n: float, eps: float) -> InterpolationCoeffs:
    """Split ``u^m = u^beta u^(m-beta)`` with ``beta = r (n-m)/(n-r)`` and bound it by Young.

    With conjugate exponents ``(n-r)/(n-m)`` and ``(n-r)/(m-r)`` one gets
    ``u^m <= eps u^n + C_eps u^r`` for all ``u > 0``.  ``C_eps`` is the sharp
    constant, the maximum of ``u^(m-r) - eps u^(n-r)``; ``scan_residual`` is
    ``max(u^m - eps u^n - C_eps u^r)`` over ``u = 10^k``, ``k`` in [-6, 6].
    """
    if not r < m < n:
        raise ValueError(f"need r < m < n, got r={r}, m={m}, n={n}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    beta = r * (n - m) / (n - r)
    theta = (n - m) / (n - r)
    log_c = math.log(theta) - (m - r) / (n - m) * math.log(eps * (n - r) / (m - r))
    c = math.exp(log_c) if log_c < 709.0 else math.inf
    u = np.logspace(-6, 6, 2401)
    with np.errstate(over="ignore", invalid="ignore"):
        resid = u**m - eps * u**n - c * u**r
    return InterpolationCoeffs(beta, float(c), (n - r) / (n - m), (n - r) / (m - r), float(np.max(resid)))


@dataclass(frozen=True)
class GlobalCondition:
    holds: bool
    lhs: float  # (m - p)(2m - 1)
    rhs: float  # m p
    witness: Optional[tuple] = None
    witness_ordered: Optional[bool] = None


def eps_moment_global_condition(m: float, p: float, eps: Optional[float] = None) -> GlobalCondition:
    """``m > p > 1`` and ``(m - p)(2m - 1) > m p``.

    With ``eps`` given, the ordering triple
    ``(eps, 2m/(2m-p) (2p - p eps - 1 + eps), 2m + eps - 2)`` is evaluated
    and checked to be strictly increasing.
    """
    lhs = (m - p) * (2.0 * m - 1.0)
    rhs = m * p
    holds = m > p > 1 and lhs > rhs
    if eps is None:
        return GlobalCondition(holds, lhs, rhs)
    mid = 2.0 * m / (2.0 * m - p) * (2.0 * p - p * eps - 1.0 + eps)
    triple = (eps, mid, 2.0 * m + eps - 2.0)
    return GlobalCondition(holds, lhs, rhs, triple, triple[0] < triple[1] < triple[2])
