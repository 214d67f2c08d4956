"""Power-law drift and diffusion families with their declared bound constants."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import Field


class DriftKind(str, enum.Enum):
    ZERO = "zero"
    POWER_ODD = "power_odd"  # C0 |u|^{p-1} u
    POWER_POS = "power_pos"  # C0 u^p on u >= 0, zero below


class DiffusionKind(str, enum.Enum):
    ZERO = "zero"
    POWER_ABS = "power_abs"  # C |u|^gamma
    LINEAR = "linear"  # C u
    ADDITIVE = "additive"  # sigma(x, t), independent of u


@dataclass(frozen=True)
class DriftSpec:
    kind: DriftKind = DriftKind.ZERO
    C0: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DriftKind(self.kind))
        if self.kind is not DriftKind.ZERO and not (self.C0 > 0 and self.p > 0):
            raise ValueError(f"power drift needs C0 > 0 and p > 0, got C0={self.C0}, p={self.p}")

    @classmethod
    def zero(cls):
        return cls(DriftKind.ZERO)

    @classmethod
    def power_odd(cls, C0: float, p: float):
        return cls(DriftKind.POWER_ODD, C0, p)

    @classmethod
    def power_pos(cls, C0: float, p: float):
        return cls(DriftKind.POWER_POS, C0, p)

    @property
    def nonnegative_below_zero(self) -> bool:
        """True when ``f(r) >= 0`` for every ``r <= 0``."""
        return self.kind in (DriftKind.ZERO, DriftKind.POWER_POS)


@dataclass(frozen=True)
class DiffusionBounds:
    """Declared envelope ``C1 |u|^gamma <= |sigma(u)| <= C2 |u|^gamma1``."""

    C1: float
    C2: float
    gamma: float
    gamma1: float


@dataclass(frozen=True)
class DiffusionSpec:
    kind: DiffusionKind = DiffusionKind.ZERO
    C: float = 0.0
    gamma: float = 1.0
    bounds: Optional[DiffusionBounds] = None
    sigma_xt: Optional[Callable] = field(default=None, compare=False)
    grad_sigma_xt: Optional[Callable] = field(default=None, compare=False)
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", DiffusionKind(self.kind))
        if self.kind is DiffusionKind.ADDITIVE and self.sigma_xt is None:
            raise ValueError("additive diffusion needs sigma_xt")
        if self.bounds is None and self.kind is DiffusionKind.POWER_ABS:
            object.__setattr__(self, "bounds", DiffusionBounds(self.C, self.C, self.gamma, self.gamma))
        if self.bounds is None and self.kind is DiffusionKind.LINEAR:
            object.__setattr__(self, "bounds", DiffusionBounds(abs(self.C), abs(self.C), 1.0, 1.0))

    @classmethod
    def zero(cls):
        return cls(DiffusionKind.ZERO)

    @classmethod
    def power_abs(cls, C: float, gamma: float, bounds: Optional[DiffusionBounds] = None):
        return cls(DiffusionKind.POWER_ABS, C, gamma, bounds)

    @classmethod
    def linear(cls, C: float = 1.0, bounds: Optional[DiffusionBounds] = None):
        return cls(DiffusionKind.LINEAR, C, 1.0, bounds)

    @classmethod
    def additive(cls, sigma_xt: Callable, grad_sigma_xt: Optional[Callable] = None, label: str = ""):
        return cls(DiffusionKind.ADDITIVE, sigma_xt=sigma_xt, grad_sigma_xt=grad_sigma_xt, label=label)

    def sigma_scalar(self, u):
        """``|sigma(u)|`` for the u-dependent kinds (vectorised)."""
        u = np.asarray(u, dtype=float)
        if self.kind is DiffusionKind.POWER_ABS:
            return self.C * np.abs(u) ** self.gamma
        if self.kind is DiffusionKind.LINEAR:
            return np.abs(self.C * u)
        if self.kind is DiffusionKind.ZERO:
            return np.zeros_like(u)
        raise ValueError("sigma_scalar is undefined for additive diffusion")


@dataclass(frozen=True)
class ModelSpec:
    drift: DriftSpec = field(default_factory=DriftSpec.zero)
    diffusion: DiffusionSpec = field(default_factory=DiffusionSpec.zero)


def drift_values(spec: DriftSpec, u: np.ndarray) -> np.ndarray:
    if spec.kind is DriftKind.ZERO:
        return np.zeros_like(u)
    with np.errstate(over="ignore", invalid="ignore"):
        if spec.kind is DriftKind.POWER_ODD:
            return spec.C0 * np.sign(u) * np.abs(u) ** spec.p
        return spec.C0 * np.maximum(u, 0.0) ** spec.p


def diffusion_values(spec: DiffusionSpec, u: np.ndarray, x: np.ndarray, t: float) -> np.ndarray:
    kind = spec.kind
    if kind is DiffusionKind.ZERO:
        return np.zeros_like(u)
    with np.errstate(over="ignore", invalid="ignore"):
        if kind is DiffusionKind.POWER_ABS:
            return spec.C * np.abs(u) ** spec.gamma
        if kind is DiffusionKind.LINEAR:
            return spec.C * u
    return np.broadcast_to(np.asarray(spec.sigma_xt(x, t), dtype=float), u.shape).copy()


def evaluate_drift(spec: DriftSpec, u: Field) -> Field:
    """Nodewise ``f(u)``.  Overflow yields ``inf`` rather than raising."""
    return Field(u.grid, drift_values(spec, u.values))


def evaluate_diffusion(spec: DiffusionSpec, u: Field, x=None, t: float = 0.0) -> Field:
    x = u.grid.nodes if x is None else x
    return Field(u.grid, diffusion_values(spec, u.values, x, t))


@dataclass(frozen=True)
class BoundsReport:
    passed: bool
    worst_ratio: float
    worst_u: float
    applicable: bool = True
    note: str = ""


def verify_bounds(spec: DiffusionSpec, rtol: float = 1e-12) -> BoundsReport:
    """Check the declared envelope on ``u = +-10^k``, ``k = -6..6``.

    The violation ratio is ``C1 |u|^gamma / |sigma(u)|`` on the lower side and
    ``|sigma(u)| / (C2 |u|^gamma1)`` on the upper side; the check passes when
    the worst ratio stays below ``1 + rtol``.
    """
    if spec.kind in (DiffusionKind.ADDITIVE, DiffusionKind.ZERO) or spec.bounds is None:
        return BoundsReport(True, 0.0, math.nan, applicable=False, note="no power-law bounds declared")
    b = spec.bounds
    mags = 10.0 ** np.arange(-6, 7)
    u = np.concatenate((-mags[::-1], mags))
    s = np.abs(spec.sigma_scalar(u))
    au = np.abs(u)
    with np.errstate(divide="ignore"):
        lower = np.where(s > 0, b.C1 * au**b.gamma / s, np.inf)
    upper = s / (b.C2 * au**b.gamma1) if b.C2 > 0 else np.where(s > 0, np.inf, 0.0)
    ratios = np.maximum(lower, upper)
    i = int(np.argmax(ratios))
    worst = float(ratios[i])
    return BoundsReport(worst <= 1.0 + rtol, worst, float(u[i]))


# named additive amplitudes sigma(x, t) with their spatial gradients

def decaying_sine_amplitude(amplitude: float, rate: float, a: float = 0.0, b: float = 1.0):
    """``amplitude * sin(pi (x - a)/(b - a)) * exp(-rate t)`` and its x-gradient."""
    L = b - a

    def sigma(x, t):
        return amplitude * np.sin(math.pi * (np.asarray(x) - a) / L) * math.exp(-rate * t)

    def grad(x, t):
        return amplitude * (math.pi / L) * np.cos(math.pi * (np.asarray(x) - a) / L) * math.exp(-rate * t)

    return sigma, grad


def constant_amplitude(amplitude: float):
    def sigma(x, t):
        return amplitude + 0.0 * np.asarray(x)

    def grad(x, t):
        return 0.0 * np.asarray(x)

    return sigma, grad


AMPLITUDE_FAMILIES = {
    "decaying_sine": decaying_sine_amplitude,
    "constant": constant_amplitude,
}
