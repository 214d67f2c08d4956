"""Monte Carlo ensembles: censored moment estimates over independent paths."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .grid import GridSpec, Field, principal_eigenpair
from .integrator import PathResult, PathVerdict, SolverConfig, simulate_path
from .model import ModelSpec
from .noise import NoiseModel, RngStream


# ---------------------------------------------------------------- functionals

@dataclass(frozen=True)
class SquaredEigenMoment:
    """E (u, phi)^2."""

    name: str = "eigen_moment_sq"
    is_field = False

    def values(self, states: np.ndarray, ctx) -> np.ndarray:
        return (states @ ctx.phi_w) ** 2


@dataclass(frozen=True)
class EpsEigenMoment:
    """E (u, phi)^eps for 0 < eps < 1; non-positive projections contribute 0."""

    eps: float = 0.5
    is_field = False

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError(f"EpsEigenMoment needs 0 < eps < 1, got {self.eps}")

    @property
    def name(self) -> str:
        return f"eigen_moment_eps[{self.eps:g}]"

    def values(self, states, ctx):
        proj = states @ ctx.phi_w
        return np.where(proj > 0, np.abs(proj) ** self.eps, 0.0)


@dataclass(frozen=True)
class LpMoment:
    """E int |u|^p."""

    p: float = 2.0
    is_field = False

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"LpMoment needs p > 0, got {self.p}")

    @property
    def name(self) -> str:
        return f"lp_moment[{self.p:g}]"

    def values(self, states, ctx):
        return np.sum(np.abs(states) ** self.p, axis=1) * ctx.dx


@dataclass(frozen=True)
class H1Moment:
    """E int |grad u|^2 (discrete Dirichlet energy)."""

    name: str = "h1_moment"
    is_field = False

    def values(self, states, ctx):
        pad = np.zeros((states.shape[0], states.shape[1] + 2))
        pad[:, 1:-1] = states
        return np.sum(np.diff(pad, axis=1) ** 2, axis=1) / ctx.dx


@dataclass(frozen=True)
class MeanField:
    """E u(x, t) at every node."""

    name: str = "mean_field"
    is_field = True

    def values(self, states, ctx):
        return states


@dataclass(frozen=True)
class SecondMomentField:
    """E u(x, t)^2 at every node."""

    name: str = "second_moment_field"
    is_field = True

    def values(self, states, ctx):
        return states**2


Functional = Union[SquaredEigenMoment, EpsEigenMoment, LpMoment, H1Moment, MeanField, SecondMomentField]


def functional_from_name(name: str, param: Optional[float] = None) -> Functional:
    table = {
        "eigen_moment_sq": lambda: SquaredEigenMoment(),
        "eigen_moment_eps": lambda: EpsEigenMoment(0.5 if param is None else param),
        "lp_moment": lambda: LpMoment(2.0 if param is None else param),
        "h1_moment": lambda: H1Moment(),
        "mean_field": lambda: MeanField(),
        "second_moment_field": lambda: SecondMomentField(),
    }
    if name not in table:
        raise KeyError(f"unknown functional {name!r}; valid: {sorted(table)}")
    return table[name]()


# ---------------------------------------------------------------- config and series

@dataclass(frozen=True)
class EnsembleConfig:
    m_paths: int = 100
    base_seed: int = 0
    record_times: tuple = ()
    functionals: tuple = (SquaredEigenMoment(),)

    def __post_init__(self):
        if int(self.m_paths) != self.m_paths or self.m_paths < 1:
            raise ValueError(f"m_paths must be a positive integer, got {self.m_paths}")
        object.__setattr__(self, "record_times", tuple(float(t) for t in self.record_times))
        object.__setattr__(self, "functionals", tuple(self.functionals))
        names = [f.name for f in self.functionals]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate functionals: {names}")


@dataclass(frozen=True)
class MomentSeries:
    times: np.ndarray
    estimates: dict
    stderr: dict
    censored: np.ndarray  # per record time: some path has blown up by then
    blown_fraction: np.ndarray
    m_paths: int
    nonpositive_counts: dict = field(default_factory=dict)

    def functional_names(self) -> list[str]:
        return list(self.estimates)

    def column(self, name: str):
        return self.estimates[name], self.stderr[name]


@dataclass(frozen=True)
class EnsembleResult:
    series: MomentSeries
    verdicts: tuple
    n_steps: int
    n_rejected: int


@dataclass(frozen=True)
class _Ctx:
    phi_w: np.ndarray
    dx: float


def worker_count(m_paths: int) -> int:
    env = os.environ.get("SPDE_LAB_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, m_paths))


def _path_states(res: PathResult, n_rec: int) -> np.ndarray:
    """States at each record time; times after blowup use the triggering state."""
    out = np.empty((n_rec, res.grid.n))
    k = min(len(res.snapshots), n_rec)
    out[:k] = res.snapshots[:k]
    out[k:] = res.final_state.values
    return out


def run_ensemble(
    model: ModelSpec,
    grid: GridSpec,
    noise: NoiseModel,
    solver: SolverConfig,
    ens: EnsembleConfig,
    u0: Field,
    whole_space: bool = False,
    path_hook: Optional[Callable] = None,
) -> EnsembleResult:
    """Run paths ``0..M-1`` and reduce their functionals in path order.

    Paths may run on several threads (``SPDE_LAB_THREADS`` caps the count) but
    the reduction always visits them in index order, so the output does not
    depend on scheduling.  At a record time ``t`` every path with ``t_b <= t``
    contributes its functional at the state that triggered blowup; such
    estimates are censored lower bounds.
    """
    record_times = ens.record_times or solver.record_times
    cfg = SolverConfig(
        dt0=solver.dt0,
        t_end=solver.t_end,
        dt_min=solver.dt_min,
        u_max=solver.u_max,
        growth_cap=solver.growth_cap,
        growth_floor=solver.growth_floor,
        record_times=record_times,
        drift_tol=solver.drift_tol,
        lp_orders=solver.lp_orders,
    )
    times = np.array([k * cfg.dt0 for k in cfg.record_steps()])
    n_rec = len(times)
    _, phi = principal_eigenpair(grid)
    ctx = _Ctx(phi.values * grid.dx, grid.dx)
    funcs = ens.functionals

    def one(i: int):
        res = simulate_path(model, grid, noise, cfg, RngStream(ens.base_seed, i), u0, whole_space)
        states = _path_states(res, n_rec)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = [f.values(states, ctx) for f in funcs]
        if path_hook is not None:
            path_hook(i, res)
        return vals, res.verdict, res.n_steps, res.n_rejected, (states @ ctx.phi_w <= 0.0)

    workers = worker_count(ens.m_paths)
    if workers == 1:
        outputs = map(one, range(ens.m_paths))
        pool = None
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        outputs = pool.map(one, range(ens.m_paths))

    mean = [None] * len(funcs)
    m2 = [None] * len(funcs)
    verdicts = []
    blown_counts = np.zeros(n_rec, dtype=int)
    nonpos_counts = np.zeros(n_rec, dtype=int)
    steps = rejected = 0
    try:
        for count, (vals, verdict, ns, nr, nonpos) in enumerate(outputs, start=1):
            verdicts.append(verdict)
            steps += ns
            rejected += nr
            nonpos_counts += nonpos
            if verdict.blown:
                blown_counts += verdict.t <= times + 1e-12 * max(1.0, cfg.t_end)
            for j, v in enumerate(vals):
                v = np.asarray(v, dtype=float)
                if mean[j] is None:
                    mean[j] = np.zeros_like(v)
                    m2[j] = np.zeros_like(v)
                delta = v - mean[j]
                mean[j] = mean[j] + delta / count
                m2[j] = m2[j] + delta * (v - mean[j])
    finally:
        if pool is not None:
            pool.shutdown()

    M = ens.m_paths
    estimates, errs = {}, {}
    for f, mu, s2 in zip(funcs, mean, m2):
        estimates[f.name] = mu
        if M > 1:
            errs[f.name] = np.sqrt(np.maximum(s2, 0.0) / (M - 1) / M)
        else:
            errs[f.name] = np.full_like(mu, math.nan)
    nonpos = {f.name: nonpos_counts.copy() for f in funcs if isinstance(f, EpsEigenMoment)}
    series = MomentSeries(
        times=times,
        estimates=estimates,
        stderr=errs,
        censored=blown_counts > 0,
        blown_fraction=blown_counts / M,
        m_paths=M,
        nonpositive_counts=nonpos,
    )
    return EnsembleResult(series, tuple(verdicts), steps, rejected)


# ---------------------------------------------------------------- comparisons and output

@dataclass(frozen=True)
class CheckpointVerdict:
    t: float
    estimate: float
    stderr: float
    bound: float
    censored: bool
    passed: bool


def empirical_vs_ode_lower_bound(
    series: MomentSeries,
    eta: Callable[[float], float],
    tol: float = 0.0,
    functional: str = "eigen_moment_sq",
) -> list[CheckpointVerdict]:
    """Check ``estimate >= eta(t)`` at each record time.

    A checkpoint passes when ``estimate + 2 stderr >= eta(t) (1 - tol)`` or
    when the estimate is censored (the true moment is then larger still).
    """
    est, se = series.column(functional)
    out = []
    for i, t in enumerate(series.times):
        bound = float(eta(float(t)))
        s = 0.0 if not np.isfinite(se[i]) else float(se[i])
        cens = bool(series.censored[i])
        ok = cens or float(est[i]) + 2.0 * s >= bound * (1.0 - tol)
        out.append(CheckpointVerdict(float(t), float(est[i]), s, bound, cens, ok))
    return out


CSV_COLUMNS = ("t", "functional", "estimate", "stderr", "censored", "blown_fraction")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def series_rows(series: MomentSeries):
    for i, t in enumerate(series.times):
        for name, est in series.estimates.items():
            se = series.stderr[name]
            if est.ndim == 1:
                cells = [(name, est[i], se[i])]
            else:
                cells = [(f"{name}[{j}]", est[i, j], se[i, j]) for j in range(est.shape[1])]
            for label, e, s in cells:
                yield (
                    _fmt(t), label, _fmt(e), _fmt(s),
                    "1" if series.censored[i] else "0",
                    _fmt(series.blown_fraction[i]),
                )


def series_to_csv(series: MomentSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(series_rows(series))
    return buf.getvalue()


def series_from_csv(text: str) -> dict:
    """Parse a series CSV into ``{functional: (times, estimates, stderr)}``."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out: dict = {}
    for r in rows:
        t, e, s = out.setdefault(r["functional"], ([], [], []))
        t.append(float(r["t"]))
        e.append(float(r["estimate"]))
        s.append(float(r["stderr"]))
    return {k: tuple(np.array(c) for c in v) for k, v in out.items()}
