"""Semi-implicit Euler-Maruyama paths for ``du = (Lap u + f(u)) dt + sigma(u) dW``.

Time is cut into macro steps of length ``dt0`` on the fixed grid ``k * dt0``.
A macro step whose candidate violates the growth cap is bisected, the noise
increment being split by a Brownian bridge, and each half is retried the same
way.  The refinement tree of a macro step is keyed into the random stream by
``(step, level, index)``, so a path is a deterministic function of its stream
whatever the refinement history.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import lapack

from .grid import Field, GridSpec, h1_values, principal_eigenpair
from .model import DiffusionKind, ModelSpec, diffusion_values, drift_values
from .noise import NoiseKind, NoiseModel, RngStream, bridge_split, noise_dimension, shape_normals


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt0: float = 1e-4
    t_end: float = 1.0
    dt_min: float = 1e-12
    u_max: float = 1e8
    growth_cap: float = 2.0
    # growth is measured against max(sup|u|, growth_floor)
    growth_floor: float = 1.0
    record_times: tuple = ()
    # relative tolerance for drift step doubling; None disables it
    drift_tol: Optional[float] = None
    lp_orders: tuple = (2.0,)

    def __post_init__(self):
        object.__setattr__(self, "record_times", tuple(sorted(float(t) for t in self.record_times)))
        object.__setattr__(self, "lp_orders", tuple(float(p) for p in self.lp_orders))
        if not (0 < self.dt_min <= self.dt0):
            raise ValueError(f"need 0 < dt_min <= dt0, got dt_min={self.dt_min}, dt0={self.dt0}")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.growth_cap > 1:
            raise ValueError("growth_cap must exceed 1")
        if any(t < 0 or t > self.t_end + 1e-12 for t in self.record_times):
            raise ValueError("record_times must lie in [0, t_end]")

    @property
    def n_macro(self) -> int:
        return max(1, int(math.ceil(self.t_end / self.dt0 - 1e-9)))

    def record_steps(self) -> list[int]:
        """Macro-step indices at which each record time is taken (first boundary >= t)."""
        return [int(math.ceil(t / self.dt0 - 1e-9)) for t in self.record_times]


class VerdictKind(str, enum.Enum):
    COMPLETED = "completed"
    BLOWUP = "blowup"


@dataclass(frozen=True)
class PathVerdict:
    kind: VerdictKind
    t: float
    reason: str = ""

    @property
    def blown(self) -> bool:
        return self.kind is VerdictKind.BLOWUP


@dataclass
class PathResult:
    grid: GridSpec
    times: np.ndarray
    snapshots: np.ndarray
    u_hat: np.ndarray
    sup_norm: np.ndarray
    lp_integrals: dict
    h1: np.ndarray
    verdict: PathVerdict
    final_state: Field
    n_steps: int = 0
    n_rejected: int = 0
    min_dt: float = math.inf
    boundary_leak: float = 0.0

    @property
    def blown(self) -> bool:
        return self.verdict.blown

    def snapshot_fields(self) -> list[tuple[float, Field]]:
        return [(float(t), Field(self.grid, s)) for t, s in zip(self.times, self.snapshots)]


def detect_blowup(u: Field, dt: float, config: SolverConfig) -> Optional[str]:
    """Reason string when the state or step size signals blowup, else None."""
    vals = u.values
    if not np.all(np.isfinite(vals)):
        return "non_finite"
    if float(np.max(np.abs(vals))) >= config.u_max:
        return "sup_norm"
    if dt < config.dt_min:
        return "dt_collapse"
    return None


class ImplicitOperator:
    """Factorisations of ``I - dt Lap_h`` cached per step size."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self._cache: dict = {}

    def factor(self, dt: float):
        fac = self._cache.get(dt)
        if fac is None:
            r = dt / self.grid.dx**2
            n = self.grid.n
            off = np.full(n - 1, -r)
            dl, d, du, du2, ipiv, info = lapack.dgttrf(off, np.full(n, 1.0 + 2.0 * r), off)
            if info != 0:
                raise np.linalg.LinAlgError(f"dgttrf failed with info={info}")
            fac = (dl, d, du, du2, ipiv)
            if len(self._cache) > 128:
                self._cache.clear()
            self._cache[dt] = fac
        return fac

    def solve(self, dt: float, rhs: np.ndarray) -> np.ndarray:
        dl, d, du, du2, ipiv = self.factor(dt)
        x, info = lapack.dgttrs(dl, d, du, du2, ipiv, rhs)
        return x


_OPERATORS: dict = {}


def implicit_operator(grid: GridSpec) -> ImplicitOperator:
    op = _OPERATORS.get(grid)
    if op is None:
        op = _OPERATORS[grid] = ImplicitOperator(grid)
    return op


def _rhs(model: ModelSpec, u: np.ndarray, x: np.ndarray, t: float, dt: float, dW) -> np.ndarray:
    f = drift_values(model.drift, u)
    s = diffusion_values(model.diffusion, u, x, t)
    with np.errstate(over="ignore", invalid="ignore"):
        return u + dt * f + s * dW


def step(u: Field, t: float, dt: float, model: ModelSpec, noise_increment) -> Field:
    """One semi-implicit step: solve ``(I - dt Lap_h) u_new = u + dt f(u) + sigma(u) dW``.

    ``noise_increment`` is a nodal array (white or correlated noise) or a
    float (scalar Brownian motion).  Pass ``0.0`` for a deterministic step.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = u.grid
    rhs = _rhs(model, u.values, g.nodes, t, dt, noise_increment)
    return Field(g, implicit_operator(g).solve(dt, rhs))


@dataclass
class _Stats:
    accepted: int = 0
    rejected: int = 0
    min_dt: float = math.inf


class _PathRunner:
    def __init__(self, model, grid, noise, config, stream):
        if noise.kind is NoiseKind.ADDITIVE and model.diffusion.kind is not DiffusionKind.ADDITIVE:
            raise ValueError("additive noise needs an additive diffusion spec carrying sigma(x, t)")
        if model.diffusion.kind is DiffusionKind.ADDITIVE and noise.kind is not NoiseKind.ADDITIVE:
            raise ValueError("an additive diffusion spec must be driven by additive noise")
        self.model = model
        self.grid = grid
        self.noise = noise
        self.cfg = config
        self.stream = stream
        self.op = implicit_operator(grid)
        self.x = grid.nodes
        self.dim = noise_dimension(noise, grid)
        self.deterministic = model.diffusion.kind is DiffusionKind.ZERO
        self.stats = _Stats()

    def _candidate(self, u, t, h, dW):
        rhs = _rhs(self.model, u, self.x, t, h, dW)
        if not np.all(np.isfinite(rhs)):
            return None
        return self.op.solve(h, rhs)

    def _acceptable(self, u, u_new, t, h) -> bool:
        if u_new is None or not np.all(np.isfinite(u_new)):
            return False
        cfg = self.cfg
        ref = max(float(np.max(np.abs(u))), cfg.growth_floor)
        if float(np.max(np.abs(u_new))) > cfg.growth_cap * ref:
            return False
        if cfg.drift_tol is not None:
            full = self.op.solve(h, u + h * drift_values(self.model.drift, u))
            half = self.op.solve(h / 2, u + h / 2 * drift_values(self.model.drift, u))
            half = self.op.solve(h / 2, half + h / 2 * drift_values(self.model.drift, half))
            scale = max(float(np.max(np.abs(half))), cfg.growth_floor)
            if not np.all(np.isfinite(full)) or float(np.max(np.abs(full - half))) > cfg.drift_tol * scale:
                return False
        return True

    def advance(self, u, t, h, dW, k, level, index):
        """Integrate ``[t, t + h]``; returns (state, time, blowup reason or None)."""
        u_new = self._candidate(u, t, h, dW)
        if self._acceptable(u, u_new, t, h):
            self.stats.accepted += 1
            self.stats.min_dt = min(self.stats.min_dt, h)
            if float(np.max(np.abs(u_new))) >= self.cfg.u_max:
                return u_new, t + h, "sup_norm"
            return u_new, t + h, None
        self.stats.rejected += 1
        if h / 2 < self.cfg.dt_min:
            return u, t, "dt_collapse"
        if self.deterministic:
            left = right = 0.0
        else:
            left, right = bridge_split(self.noise, self.grid, h, dW, self.stream.at_step(k).child(level + 1, index))
        u_mid, t_mid, reason = self.advance(u, t, h / 2, left, k, level + 1, 2 * index)
        if reason is not None:
            return u_mid, t_mid, reason
        return self.advance(u_mid, t_mid, h / 2, right, k, level + 1, 2 * index + 1)

    def macro_increment(self, k: int):
        if self.deterministic:
            return 0.0
        z = self.stream.normals_at(k, self.dim)
        return shape_normals(self.noise, self.grid, self.cfg.dt0, z)


def simulate_path(
    model: ModelSpec,
    grid: GridSpec,
    noise: NoiseModel,
    config: SolverConfig,
    stream: RngStream,
    u0: Field,
    whole_space: bool = False,
) -> PathResult:
    """Run one path to ``t_end`` or to blowup.

    Blowup is declared when an accepted state reaches ``sup|u| >= u_max`` or
    when refinement would need a step below ``dt_min``.  Scalar functionals
    and snapshots are stored at the record times hit before the verdict.
    With ``whole_space`` set, the ratio of the outermost nodal values to the
    sup norm is tracked and a warning is issued if it exceeds ``1e-10``.
    """
    if u0.grid != grid:
        raise ValueError("initial condition lives on a different grid")
    if not u0.is_finite():
        raise ValueError("initial condition must be finite")
    runner = _PathRunner(model, grid, noise, config, stream)
    _, phi = principal_eigenpair(grid)
    phi_w = phi.values * grid.dx
    dx = grid.dx

    rec_steps = config.record_steps()
    rec_times = []
    snaps = []
    leak = 0.0

    def record(k, u):
        nonlocal leak
        t = k * config.dt0
        for _ in range(rec_steps.count(k)):
            rec_times.append(t)
            snaps.append(u.copy())
        sup = float(np.max(np.abs(u)))
        if sup > 0:
            leak = max(leak, max(abs(u[0]), abs(u[-1])) / sup)

    u = np.array(u0.values, dtype=float)
    t = 0.0
    verdict = PathVerdict(VerdictKind.COMPLETED, config.n_macro * config.dt0)
    record(0, u)
    start = detect_blowup(u0, config.dt0, config)
    if start is not None:
        verdict = PathVerdict(VerdictKind.BLOWUP, 0.0, start)
    else:
        for k in range(config.n_macro):
            t = k * config.dt0
            dW = runner.macro_increment(k)
            u, t_new, reason = runner.advance(u, t, config.dt0, dW, k, 0, 0)
            if reason is not None:
                verdict = PathVerdict(VerdictKind.BLOWUP, min(t_new, config.t_end), reason)
                break
            record(k + 1, u)

    snaps_arr = np.array(snaps) if snaps else np.zeros((0, grid.n))
    times = np.array(rec_times)
    with np.errstate(over="ignore", invalid="ignore"):
        u_hat = snaps_arr @ phi_w
        sup = np.max(np.abs(snaps_arr), axis=1) if len(snaps) else np.zeros(0)
        lp = {p: np.sum(np.abs(snaps_arr) ** p, axis=1) * dx for p in config.lp_orders}
        h1 = np.array([h1_values(s, dx) for s in snaps_arr])

    if whole_space and leak > 1e-10:
        warnings.warn(
            f"truncated domain: boundary-adjacent values reach {leak:.2e} of sup|u|; widen the interval",
            TruncationWarning,
            stacklevel=2,
        )
    return PathResult(
        grid=grid,
        times=times,
        snapshots=snaps_arr,
        u_hat=u_hat,
        sup_norm=sup,
        lp_integrals=lp,
        h1=h1,
        verdict=verdict,
        final_state=Field(grid, np.where(np.isfinite(u), u, np.sign(u) * config.u_max)),
        n_steps=runner.stats.accepted,
        n_rejected=runner.stats.rejected,
        min_dt=runner.stats.min_dt,
        boundary_leak=leak,
    )
