"""Uniform 1-D Dirichlet meshes, the discrete Laplacian and nodal functionals.

Every functional here uses the same quadrature: weight ``dx`` on each interior
node, boundary values implicitly zero.  With zero boundary data this is both
the midpoint rule over interior cells and the composite trapezoid rule over
the closed interval, so normalisation identities close to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import lapack


class GridMismatchError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


@dataclass(frozen=True)
class GridSpec:
    """Interval ``(a, b)`` with ``n`` interior nodes ``x_i = a + i*dx``."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (self.b > self.a):
            raise ValueError(f"need b > a, got a={self.a}, b={self.b}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need an integer n >= 2, got {self.n}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "n", int(self.n))

    @property
    def dx(self) -> float:
        return (self.b - self.a) / (self.n + 1)

    @property
    def length(self) -> float:
        return self.b - self.a

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.a + self.dx * np.arange(1, self.n + 1)
        x.flags.writeable = False
        return x

    def field(self, values) -> "Field":
        return Field(self, values)

    def sample(self, func) -> "Field":
        """Evaluate a vectorised ``func(x)`` at the interior nodes."""
        return Field(self, func(self.nodes))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n))


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values on the interior of a grid."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise GridMismatchError(
                f"field has shape {v.shape}, grid expects ({self.grid.n},)"
            )
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.grid.n

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def _check_same_grid(f: Field, w: Field):
    if f.grid != w.grid:
        raise GridMismatchError(f"fields live on different grids: {f.grid} vs {w.grid}")


def laplacian_values(values: np.ndarray, dx: float) -> np.ndarray:
    """Three-point Dirichlet Laplacian of raw nodal values (last axis)."""
    padded = np.zeros(values.shape[:-1] + (values.shape[-1] + 2,))
    padded[..., 1:-1] = values
    return (padded[..., :-2] - 2.0 * values + padded[..., 2:]) / dx**2


def dirichlet_laplacian_apply(g: GridSpec, f: Field) -> Field:
    if f.grid != g:
        raise GridMismatchError(f"field grid {f.grid} does not match {g}")
    return Field(g, laplacian_values(f.values, g.dx))


def inner_product(f: Field, w: Field) -> float:
    _check_same_grid(f, w)
    return float(np.dot(f.values, w.values) * f.grid.dx)


def integrate(f: Field) -> float:
    return float(np.sum(f.values) * f.grid.dx)


def lp_norm(f: Field, p: float) -> float:
    if p < 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    return float((np.sum(np.abs(f.values) ** p) * f.grid.dx) ** (1.0 / p))


def lp_integral(f: Field, p: float) -> float:
    """``sum |f_i|^p dx`` without the outer root; defined for any p > 0."""
    return float(np.sum(np.abs(f.values) ** p) * f.grid.dx)


def h1_seminorm(f: Field) -> float:
    """Discrete Dirichlet energy ``sum ((f_{i+1} - f_i)/dx)^2 dx``.

    Despite the name this is the squared seminorm, i.e. the discrete analogue
    of the integral of |grad f|^2; it equals ``inner_product(f, -Lap f)``.
    """
    return h1_values(f.values, f.grid.dx)


def h1_values(values: np.ndarray, dx: float) -> float:
    padded = np.concatenate(([0.0], values, [0.0]))
    return float(np.sum(np.diff(padded) ** 2) / dx)


def closed_form_eigenpair(g: GridSpec) -> tuple[float, np.ndarray]:
    """Exact principal eigenpair of the discrete operator (unnormalised sine)."""
    theta = math.pi / (g.n + 1)
    lam = 4.0 / g.dx**2 * math.sin(theta / 2.0) ** 2
    return lam, np.sin(theta * np.arange(1, g.n + 1))


def principal_eigenpair(g: GridSpec, tol: float = 1e-14, maxiter: int = 500) -> tuple[float, Field]:
    """Smallest eigenvalue of ``-Lap_h`` and its eigenvector by inverse iteration.

    The eigenvector is oriented so its node sum is positive and rescaled so
    that its integral equals one.  Sign noise below ``1e-300`` is clipped so
    the returned ``phi`` is componentwise non-negative.
    """
    return _eigenpair_cached(g, tol, maxiter)


_EIG_CACHE: dict = {}


def _eigenpair_cached(g, tol, maxiter):
    key = (g, tol, maxiter)
    hit = _EIG_CACHE.get(key)
    if hit is not None:
        return hit
    n, h2 = g.n, g.dx**2
    diag = np.full(n, 2.0 / h2)
    off = np.full(n - 1, -1.0 / h2)
    dl, d, du, du2, ipiv, info = lapack.dgttrf(off, diag, off)
    if info != 0:
        raise EigenSolverError("tridiagonal factorisation failed", 0)

    v = np.ones(n) / math.sqrt(n)
    lam = math.nan
    for it in range(1, maxiter + 1):
        w, info = lapack.dgttrs(dl, d, du, du2, ipiv, v)
        if info != 0:
            raise EigenSolverError("tridiagonal solve failed", it)
        w /= np.linalg.norm(w)
        if w.sum() < 0:
            w = -w
        delta = np.max(np.abs(w - v))
        v = w
        if delta < tol:
            lam = float(np.dot(v, -laplacian_values(v, g.dx)))
            break
    else:
        raise EigenSolverError(f"inverse iteration did not reach tol={tol}", maxiter)

    v = np.where(np.abs(v) < 1e-300, 0.0, v)
    if np.any(v < 0):
        raise EigenSolverError("principal eigenvector changed sign", it)
    phi = Field(g, v / (np.sum(v) * g.dx))
    _EIG_CACHE[key] = (lam, phi)
    return lam, phi
