"""Exponent classifiers and the scan-based check of the convex-nonlinearity conditions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from ..noise import NoiseKind
from .reports import Verdict


class FujitaClass(str, enum.Enum):
    SUBLINEAR_GLOBAL_NONUNIQUE = "SublinearGlobalNonunique"
    BLOWUP_ALL_NONTRIVIAL = "BlowupAllNontrivial"
    SMALL_DATA_GLOBAL_LARGE_DATA_BLOWUP = "SmallDataGlobal_LargeDataBlowup"
    INDETERMINATE = "Indeterminate"


def fujita_classify(p: float, d: int) -> FujitaClass:
    """Regime of ``u_t = Lap u + u^p`` on R^d by the critical power ``1 + 2/d``."""
    if not p > 0 or int(d) != d or d < 1:
        raise ValueError(f"need p > 0 and integer d >= 1, got p={p}, d={d}")
    if p < 1:
        return FujitaClass.SUBLINEAR_GLOBAL_NONUNIQUE
    if p == 1:
        return FujitaClass.INDETERMINATE
    if p <= 1.0 + 2.0 / d:
        return FujitaClass.BLOWUP_ALL_NONTRIVIAL
    return FujitaClass.SMALL_DATA_GLOBAL_LARGE_DATA_BLOWUP


_KIND_ALIASES = {
    "white": NoiseKind.WHITE,
    "space_time_white": NoiseKind.WHITE,
    "scalar": NoiseKind.SCALAR,
    "brownian": NoiseKind.SCALAR,
    "scalar_brownian": NoiseKind.SCALAR,
    "correlated": NoiseKind.CORRELATED,
    "additive": NoiseKind.ADDITIVE,
}


def _kind(kind) -> NoiseKind:
    if isinstance(kind, NoiseKind):
        return kind
    key = str(kind).lower()
    if key in _KIND_ALIASES:
        return _KIND_ALIASES[key]
    return NoiseKind(key)


def whole_space_noise_classify(kind, m: Optional[float], d: int, sublinear_p: Optional[float] = None) -> Verdict:
    """Whole-space verdict from the noise type and the growth exponent of sigma.

    ``m`` is the exponent in ``sigma^2 >= C u^(2m)``.  Space-time white noise
    predicts blowup of the second moment for ``d = 1``, ``1 < m <= 3/2``; a
    single Brownian motion for ``d = 1``, ``m = 2``.  ``sublinear_p`` in (0, 1),
    a common power bound on drift and diffusion, predicts global existence for
    the scalar and correlated cases; for white noise the argument needs more
    than the exponent and the verdict stays Indeterminate.
    """
    kind = _kind(kind)
    if int(d) != d or d < 1:
        raise ValueError(f"need integer d >= 1, got {d}")
    if sublinear_p is not None and 0 < sublinear_p < 1:
        if kind in (NoiseKind.SCALAR, NoiseKind.CORRELATED, NoiseKind.ADDITIVE):
            return Verdict.GLOBAL_PREDICTED
        return Verdict.INDETERMINATE
    if m is None:
        return Verdict.INDETERMINATE
    if kind is NoiseKind.WHITE and d == 1 and 1 < m <= 1.5:
        return Verdict.BLOWUP_PREDICTED
    if kind is NoiseKind.SCALAR and d == 1 and m == 2:
        return Verdict.BLOWUP_PREDICTED
    return Verdict.INDETERMINATE


# ---------------------------------------------------------------- condition scans

@dataclass(frozen=True)
class ConditionBranch:
    """Scan results for one growth function ``H`` compared against ``lambda1 r``."""

    shape_ok: bool  # positive, increasing and convex on the scan
    crossing: Optional[float]  # smallest M with H(r) > lambda1 r for all scanned r > M
    initial_ok: bool  # projection of u0 exceeds M
    lower_limit: Optional[float]
    integral: float
    tail_exponent: float
    integral_status: str  # convergent | divergent | indeterminate
    ratio_monotone: bool  # H(r)/r nondecreasing on the scan
    holds: bool
    note: str = ""


@dataclass(frozen=True)
class ChowReport:
    n_branch: Optional[ConditionBranch]
    s_branch: Optional[ConditionBranch]
    verdict: Verdict
    notes: tuple = field(default_factory=tuple)


def _shape_ok(r, h) -> bool:
    if np.any(h <= 0):
        return False
    dh = np.diff(h)
    if np.any(dh <= 0):
        return False
    slopes = dh / np.diff(r)
    return bool(np.all(np.diff(slopes) >= -1e-9 * np.abs(slopes[1:])))


def _tail_exponent(func, r_hi: float) -> float:
    """``-d ln h / d ln r`` near ``r_hi`` for the integrand ``h``."""
    r_lo = r_hi / 10.0
    h_hi, h_lo = func(r_hi), func(r_lo)
    if not (h_hi > 0 and h_lo > 0):
        return math.nan
    return -math.log(h_hi / h_lo) / math.log(10.0)


def _branch(H: Callable, lambda1: float, r_lo: float, u0_phi: Optional[float], r_max: float, n_scan: int) -> ConditionBranch:
    r = np.logspace(math.log10(r_lo), math.log10(r_max), n_scan)
    h = np.array([float(H(x)) for x in r])
    shape = _shape_ok(r, h)
    ratio_mono = bool(np.all(np.diff(h / r) >= -1e-12 * np.abs(h[1:] / r[1:])))
    gap = h - lambda1 * r
    bad = np.nonzero(gap <= 0)[0]
    if len(bad) and bad[-1] == len(r) - 1:
        return ConditionBranch(shape, None, False, None, math.nan, math.nan, "indeterminate", ratio_mono, False,
                               "H(r) <= lambda1 r at the top of the scan: no crossing found")
    if len(bad) == 0:
        crossing = float(r_lo)
    else:
        i = int(bad[-1])
        f = lambda x: float(H(x)) - lambda1 * x
        crossing = float(optimize.brentq(f, r[i], r[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)) if gap[i] < 0 else float(r[i])
    initial_ok = u0_phi is not None and u0_phi > crossing
    lower = float(u0_phi) if initial_ok else 2.0 * crossing

    integrand = lambda x: 1.0 / (float(H(x)) - lambda1 * x)
    # integrate in log r up to the top of the scan, then estimate the tail
    val, _ = integrate.quad(lambda s: math.exp(s) * integrand(math.exp(s)), math.log(lower), math.log(r_max),
                            epsabs=1e-14, epsrel=1e-12, limit=500)
    a = _tail_exponent(integrand, r_max)
    if math.isnan(a) or 1.0 < a < 1.05:
        status = "indeterminate"
    elif a >= 1.05:
        status = "convergent"
        val += integrand(r_max) * r_max / (a - 1.0)
    else:
        status = "divergent"
        val = math.inf
    holds = shape and initial_ok and status == "convergent"
    return ConditionBranch(shape, crossing, initial_ok, lower, val, a, status, ratio_mono, holds,
                           "scan-certified on [%.3g, %.3g]" % (r_lo, r_max))


def chow_conditions_check(
    F: Optional[Callable],
    G: Optional[Callable],
    q1: float,
    lambda1: float,
    r1: float,
    r2: float,
    u0_phi: Optional[float],
    r_max: float = 1e12,
    n_scan: int = 2000,
) -> ChowReport:
    """Check the two alternative convexity condition sets on a log scan.

    Drift branch: ``F`` positive, increasing, convex on ``[r1, r_max]``; the
    crossing ``M1`` beyond which ``F(r) > lambda1 r``; ``(u0, phi) > M1``; and
    ``int dr / (F(r) - lambda1 r)`` finite.  Noise branch: the same with
    ``q1 G`` and ``r2``.  The integral starts at ``(u0, phi)`` when that
    exceeds the crossing and at twice the crossing otherwise (it diverges at
    the crossing itself).  Its tail is judged by the local decay exponent
    ``a`` of the integrand at ``r_max``: ``a >= 1.05`` convergent,
    ``a <= 1`` divergent, otherwise indeterminate.  Everything is certified
    on the scanned range only.
    """
    notes = []
    nb = sb = None
    if F is not None:
        nb = _branch(F, lambda1, r1, u0_phi, r_max, n_scan)
    if G is not None:
        if not q1 > 0:
            notes.append("q1 <= 0: noise branch skipped")
        else:
            sb = _branch(lambda r: q1 * float(G(r)), lambda1, r2, u0_phi, r_max, n_scan)
            notes.append("sigma_0^2 >= 2 G(r^2) is not checked; supply G consistent with sigma")
    ok = any(b is not None and b.holds for b in (nb, sb))
    return ChowReport(nb, sb, Verdict.BLOWUP_PREDICTED if ok else Verdict.INDETERMINATE, tuple(notes))
