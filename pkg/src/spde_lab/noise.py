"""Noise increments with counter-keyed random streams.

Normals for path ``i`` at macro step ``k`` are a pure function of
``(base_seed, i, k)`` and, for refinement draws, of the dyadic position
``(level, index)`` inside that step.  The bits come from numpy's Philox
generator with the path in the key and the step in the counter, so paths can
be simulated in any order or on any worker and still agree bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.random import Generator, Philox
from scipy import linalg

from .grid import GridSpec

_MASK64 = (1 << 64) - 1
# level-0 normals are drawn this many steps at a time
_BLOCK = 64


class NoiseKind(str, enum.Enum):
    WHITE = "white"
    CORRELATED = "correlated"
    SCALAR = "scalar"
    ADDITIVE = "additive"


class CovarianceError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Driving noise.

    ``covariance`` is a vectorised ``q(x, y)`` and is only used by the
    CORRELATED kind.  ADDITIVE noise is a scalar Brownian motion whose
    amplitude ``sigma(x, t)`` is supplied by the model's diffusion spec.
    """

    kind: NoiseKind
    covariance: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.kind is NoiseKind.CORRELATED and self.covariance is None:
            raise ValueError("correlated noise needs a covariance function q(x, y)")

    @classmethod
    def white(cls) -> "NoiseModel":
        return cls(NoiseKind.WHITE, label="white")

    @classmethod
    def scalar(cls) -> "NoiseModel":
        return cls(NoiseKind.SCALAR, label="scalar")

    @classmethod
    def additive(cls) -> "NoiseModel":
        return cls(NoiseKind.ADDITIVE, label="additive")

    @classmethod
    def correlated(cls, q: Callable, label: str = "correlated") -> "NoiseModel":
        return cls(NoiseKind.CORRELATED, covariance=q, label=label)

    @property
    def is_scalar(self) -> bool:
        return self.kind in (NoiseKind.SCALAR, NoiseKind.ADDITIVE)


@dataclass(frozen=True)
class RngStream:
    base_seed: int
    path_index: int
    step_index: int = 0
    level: int = 0
    index: int = 0

    def at_step(self, k: int) -> "RngStream":
        return replace(self, step_index=k, level=0, index=0)

    def child(self, level: int, index: int) -> "RngStream":
        return replace(self, level=level, index=index)

    def normals_at(self, k: int, size: int) -> np.ndarray:
        """Level-0 normals of macro step ``k`` (same as ``at_step(k).standard_normal``)."""
        return _normal_block(self.base_seed, self.path_index, k // _BLOCK, size)[k % _BLOCK]

    def standard_normal(self, size: int) -> np.ndarray:
        if self.level == 0 and self.index == 0:
            block = _normal_block(self.base_seed, self.path_index, self.step_index // _BLOCK, size)
            return block[self.step_index % _BLOCK]
        gen = _generator(self.base_seed, self.path_index, (0, self.index, self.step_index, (self.level << 1) | 1))
        return gen.standard_normal(size)


def _generator(base_seed: int, path_index: int, counter) -> Generator:
    # Philox advances the lowest counter word while drawing, so stream
    # coordinates live in the upper three words and word 0 starts at zero.
    key = np.array([int(base_seed) & _MASK64, int(path_index) & _MASK64], dtype=np.uint64)
    ctr = np.array([c & _MASK64 for c in counter], dtype=np.uint64)
    return Generator(Philox(key=key, counter=ctr))


@lru_cache(maxsize=512)
def _normal_block(base_seed: int, path_index: int, block: int, size: int) -> np.ndarray:
    out = _generator(base_seed, path_index, (0, 0, block, 0)).standard_normal((_BLOCK, size))
    out.flags.writeable = False
    return out


def covariance_matrix(q: Callable, g: GridSpec) -> np.ndarray:
    x = g.nodes
    return np.asarray(q(x[:, None], x[None, :]), dtype=float) * np.ones((g.n, g.n))


def covariance_factor(q: Callable, g: GridSpec) -> np.ndarray:
    """Lower Cholesky factor of ``q`` on the nodes.

    A plain factorisation is tried first; on failure one retry is made with
    ``1e-12 * trace`` added to the diagonal before giving up.
    """
    return _factor_cached(q, g)


_FACTOR_CACHE: dict = {}


def _factor_cached(q, g):
    key = (id(q), g)
    hit = _FACTOR_CACHE.get(key)
    if hit is not None and hit[0] is q:
        return hit[1]
    cov = covariance_matrix(q, g)
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14):
        raise CovarianceError("covariance q(x, y) is not symmetric on the grid")
    if np.any(np.diag(cov) < 0):
        raise CovarianceError("covariance has q(x, x) < 0")
    try:
        fac = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-12 * float(np.trace(cov))
        try:
            fac = linalg.cholesky(cov + jitter * np.eye(g.n), lower=True)
        except linalg.LinAlgError as exc:
            raise CovarianceError(
                f"covariance is not positive semidefinite even after jitter {jitter:.3g}"
            ) from exc
    fac.flags.writeable = False
    _FACTOR_CACHE[key] = (q, fac)
    return fac


def noise_dimension(model: NoiseModel, g: GridSpec) -> int:
    return 1 if model.is_scalar else g.n


def shape_normals(model: NoiseModel, g: GridSpec, dt: float, z: np.ndarray):
    """Turn standard normals ``z`` into an increment with covariance ``dt * Q``."""
    kind = model.kind
    if kind is NoiseKind.WHITE:
        return z * math.sqrt(dt / g.dx)
    if kind is NoiseKind.CORRELATED:
        return covariance_factor(model.covariance, g) @ z * math.sqrt(dt)
    return float(z[0]) * math.sqrt(dt)


def sample_increment(model: NoiseModel, g: GridSpec, dt: float, stream: RngStream):
    """One noise increment over a step of length ``dt``.

    WHITE: independent ``N(0, dt/dx)`` per node (cell averages of the sheet).
    CORRELATED: ``N(0, dt * q(x_i, x_j))``.  SCALAR and ADDITIVE: a single
    ``N(0, dt)`` returned as a float; for SCALAR it acts on every node.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    z = stream.standard_normal(noise_dimension(model, g))
    return shape_normals(model, g, dt, z)


def bridge_split(model: NoiseModel, g: GridSpec, dt: float, increment, stream: RngStream):
    """Split an increment over ``dt`` into its two halves (Brownian bridge).

    Given ``dW`` over ``[t, t + dt]`` the first half is ``dW/2 + xi`` with
    ``xi ~ N(0, dt/4 * Q)`` independent of ``dW``; the second is the remainder.
    """
    xi = sample_increment(model, g, dt / 4.0, stream)
    left = increment / 2.0 + xi
    return left, increment - left


def covariance_bounds(q: Callable, g: GridSpec) -> tuple[float, float]:
    """``(min, max)`` of ``q`` over the closed interval's node pairs.

    The endpoints ``a`` and ``b`` are included with the interior nodes, so the
    extremes of ``q`` on the closure of the domain are picked up on any mesh.
    """
    x = np.concatenate(([g.a], g.nodes, [g.b]))
    vals = np.asarray(q(x[:, None], x[None, :]), dtype=float) * np.ones((x.size, x.size))
    return float(vals.min()), float(vals.max())


# named covariance families, used by experiment configs

def constant_covariance(c: float = 1.0) -> Callable:
    def q(x, y):
        return c + 0.0 * (x - y)
    return q


def exponential_covariance(amplitude: float = 1.0, length: float = 1.0) -> Callable:
    def q(x, y):
        return amplitude * np.exp(-np.abs(x - y) / length)
    return q


def gaussian_covariance(amplitude: float = 1.0, length: float = 1.0) -> Callable:
    def q(x, y):
        return amplitude * np.exp(-((x - y) ** 2) / (2.0 * length**2))
    return q


def tent_covariance(height: float = 2.0, slope: float = 1.0) -> Callable:
    def q(x, y):
        return height - slope * np.abs(x - y)
    return q


COVARIANCE_FAMILIES = {
    "constant": constant_covariance,
    "exponential": exponential_covariance,
    "gaussian": gaussian_covariance,
    "tent": tent_covariance,
}
