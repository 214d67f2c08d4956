"""Acceptance criteria as runnable checks, shared by the test suite and ``spde-lab verify``."""

from __future__ import annotations

import math
import os
import tempfile
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .ensemble import EnsembleConfig, SquaredEigenMoment, empirical_vs_ode_lower_bound, run_ensemble
from .grid import GridSpec, inner_product, principal_eigenpair
from .integrator import SolverConfig, simulate_path
from .kernel import (
    KernelConvention,
    heat_kernel,
    kernel_normalization,
    kernel_product_bound_scan,
    semigroup_residual,
)
from .model import DiffusionSpec, DriftSpec, ModelSpec
from .noise import NoiseModel, RngStream, constant_covariance
from .theory import (
    FujitaClass,
    KaplanParams,
    Verdict,
    beta_eps,
    c_hat,
    chow_conditions_check,
    concavity_certificate,
    eigen_moment_threshold,
    eps_moment_global_condition,
    eps_moment_threshold,
    fujita_classify,
    interpolation_coeffs,
    kaplan_ode_solve,
    kernel_weighted_moment,
    mollifier_constant,
    whole_space_noise_classify,
)
from .theory.kaplan import blowup_time_bound
from .theory.mollifier import beta_eps_value, beta_second_derivative_sup, J_eps

PI2 = math.pi**2


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:>2} {self.title} ({self.seconds:.1f}s): {self.detail}"


def _timed(number: int, title: str, budget: float, func: Callable[[], tuple[bool, str]]) -> CriterionResult:
    t0 = time.perf_counter()
    ok, detail = func()
    dt = time.perf_counter() - t0
    if dt > budget:
        ok = False
        detail += f"; runtime {dt:.1f}s over budget {budget:g}s"
    return CriterionResult(number, title, ok, detail, dt)


# ---------------------------------------------------------------- 1, 2

def eigenpair_accuracy():
    g = GridSpec(0.0, 1.0, 256)
    lam, phi = principal_eigenpair(g)
    rel = abs(lam - PI2) / PI2
    mass = float(np.sum(phi.values) * g.dx)
    ok = rel < 1e-3 and abs(mass - 1.0) <= 1e-12 and bool(np.all(phi.values >= 0))
    return ok, f"lambda1 rel err {rel:.2e}, |int phi - 1| {abs(mass - 1):.1e}, min phi {phi.values.min():.2e}"


def blowup_time_quadrature():
    a = blowup_time_bound(2 * PI2, PI2, 1.0, 2.0).value
    b = blowup_time_bound(2 * PI2, 2 * PI2, 2.0, 2.0).value
    ea, eb = abs(a - math.log(2) / PI2), abs(b - math.log(2) / (2 * PI2))
    return ea <= 1e-8 and eb <= 1e-8, f"unit-gain err {ea:.1e}, doubled-gain err {eb:.1e}"


# ---------------------------------------------------------------- 3

EIGEN_CHECKPOINT_FRACTIONS = (1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6)


def eigen_moment_comparison(n_seeds: int = 20, m_paths: int = 200):
    g = GridSpec(0.0, 1.0, 64)
    lam, phi = principal_eigenpair(g)
    u0 = phi * (2 * math.pi / inner_product(phi, phi))
    eta0 = inner_product(u0, phi) ** 2
    # moment ODE with damping 2 lambda1 and gain 2 q1 C1^2, q1 = C1 = 1
    traj = kaplan_ode_solve(KaplanParams(lam, 2.0, 2.0 * lam, 2.0, eta0), 1.0)
    T = traj.blowup_time
    model = ModelSpec(DriftSpec.zero(), DiffusionSpec.power_abs(1.0, 2.0))
    noise = NoiseModel.correlated(constant_covariance(1.0), label="constant")
    dt0 = 1e-4
    checkpoints = tuple(f * T for f in EIGEN_CHECKPOINT_FRACTIONS)
    solver = SolverConfig(dt0=dt0, t_end=2.0 * T)
    ens_times = checkpoints + (2.0 * T,)
    n_pass = n_total = 0
    blown = []
    for seed in range(n_seeds):
        ens = EnsembleConfig(m_paths, seed, ens_times, (SquaredEigenMoment(),))
        res = run_ensemble(model, g, noise, solver, ens, u0)
        checks = empirical_vs_ode_lower_bound(res.series, traj)
        before = [c for c in checks if c.t < T]
        n_pass += sum(c.passed for c in before)
        n_total += len(before)
        blown.append(float(res.series.blown_fraction[-1]))
    rate = n_pass / n_total
    bf = float(np.mean(blown))
    ok_a, ok_b = rate >= 0.95, bf >= 0.5
    detail = (
        f"(a) {n_pass}/{n_total} checkpoints pass ({rate:.0%}, need 95%) "
        f"{'ok' if ok_a else 'FAILED'}; (b) mean blown fraction at 2T = {bf:.3f} (need 0.5) "
        f"{'ok' if ok_b else 'FAILED'}; ODE blowup time T = {T:.6f}"
    )
    return ok_a and ok_b, detail


# ---------------------------------------------------------------- 4, 5

def linear_closed_form_moment(m_paths: int = 500):
    g = GridSpec(0.0, 1.0, 64)
    lam, phi = principal_eigenpair(g)
    u0 = g.sample(lambda x: np.sin(math.pi * x))
    times = (0.05, 0.1, 0.2)
    model = ModelSpec(DriftSpec.zero(), DiffusionSpec.linear(1.0))
    res = run_ensemble(model, g, NoiseModel.scalar(), SolverConfig(dt0=2.5e-4, t_end=0.2),
                       EnsembleConfig(m_paths, 2024, times, (SquaredEigenMoment(),)), u0)
    est, se = res.series.column("eigen_moment_sq")
    uh0 = inner_product(u0, phi)
    exact = uh0**2 * np.exp((1.0 - 2.0 * lam) * res.series.times)
    z = np.abs(est - exact) / se
    return bool(np.all(z <= 3.0)), "z-scores " + ", ".join(f"t={t:g}: {v:.2f}" for t, v in zip(times, z))


def positivity_suite(m_paths: int = 100):
    g = GridSpec(0.0, 1.0, 64)
    u0 = g.sample(lambda x: np.sin(math.pi * x))
    model = ModelSpec(DriftSpec.zero(), DiffusionSpec.power_abs(1.0, 1.0))
    dt0, t_end = 1e-4, 0.1
    cfg = SolverConfig(dt0=dt0, t_end=t_end, record_times=tuple(k * dt0 for k in range(int(round(t_end / dt0)) + 1)))
    worst = math.inf
    for i in range(m_paths):
        res = simulate_path(model, g, NoiseModel.white(), cfg, RngStream(11, i), u0)
        scale = np.maximum(1.0, res.sup_norm)[:, None]
        worst = min(worst, float(np.min(res.snapshots / scale)))
    return worst >= -1e-6, f"min of u / max(1, sup|u|) over {m_paths} paths = {worst:.3e}"


# ---------------------------------------------------------------- 6

def fujita_reproduction():
    g = GridSpec(-20.0, 20.0, 1024)
    u0 = g.sample(lambda x: 0.1 * np.exp(-(x**2) / 2.0))
    quad = ModelSpec(DriftSpec.power_pos(1.0, 2.0), DiffusionSpec.zero())
    r1 = simulate_path(quad, g, NoiseModel.white(), SolverConfig(dt0=0.01, t_end=200.0), RngStream(0, 0), u0)
    ok1 = r1.blown and r1.final_state.sup() >= 1e6

    quart = ModelSpec(DriftSpec.power_pos(1.0, 4.0), DiffusionSpec.zero())
    v0 = g.sample(lambda x: 1e-2 * heat_kernel(1.0, x, KernelConvention.LAPLACIAN))
    rec = tuple(round(0.1 * k, 10) for k in range(51))
    r2 = simulate_path(quart, g, NoiseModel.white(), SolverConfig(dt0=0.01, t_end=5.0, record_times=rec), RngStream(0, 0), v0)
    late = r2.sup_norm[r2.times >= 0.5 - 1e-12]
    ok2 = (not r2.blown) and abs(r2.verdict.t - 5.0) < 1e-9 and bool(np.all(np.diff(late) < 0))
    detail = (
        f"(i) p=2: {r1.verdict.kind.value} at t={r1.verdict.t:.3f}, sup {r1.final_state.sup():.3g}; "
        f"(ii) p=4: {r2.verdict.kind.value} at t={r2.verdict.t:g}, sup decreasing after 0.5: {bool(np.all(np.diff(late) < 0))}"
    )
    return ok1 and ok2, detail


# ---------------------------------------------------------------- 7

def mollifier_suite():
    C = mollifier_constant()
    ch = c_hat()
    worst_fd = worst_zero = worst_lin = 0.0
    worst_conv = math.inf
    worst_sup = -math.inf
    for eps in (0.1, 0.5, 1.0):
        h = 1e-5 * eps
        for r in np.linspace(-3 * eps, eps, 41):
            b = beta_eps(eps, r)
            fd = (beta_eps_value(r + h, eps) - beta_eps_value(r - h, eps)) / (2 * h)
            worst_fd = max(worst_fd, abs(fd + b.rho))
            if r >= 0:
                worst_zero = max(worst_zero, abs(b.beta))
            if r <= -2 * eps:
                worst_lin = max(worst_lin, abs(b.beta - (-2 * eps - r + eps * ch)))
        step = eps / 50
        rs = np.arange(-3 * eps, eps + step / 2, step)
        vals = np.array([beta_eps_value(r, eps) for r in rs])
        worst_conv = min(worst_conv, float(np.min(vals[:-2] - 2 * vals[1:-1] + vals[2:])))
        second = max(J_eps(r + eps, eps) for r in np.linspace(-2 * eps, 0.0, 2001))
        worst_sup = max(worst_sup, second * eps / C)
    ok = (
        worst_fd <= 1e-6 and worst_zero == 0.0 and worst_lin <= 1e-10 and ch < 2
        and worst_conv >= -1e-10 and worst_sup <= 1.0 and abs(C - 2.25228) <= 1e-4
    )
    detail = (
        f"|beta' + rho| <= {worst_fd:.1e}; beta on r>=0 max {worst_zero:.1e}; linear-branch err {worst_lin:.1e} "
        f"(C_hat {ch:.12f}); min second difference {worst_conv:.1e}; max eps*beta''/C {worst_sup:.4f}; C {C:.6f}"
    )
    return ok, detail


# ---------------------------------------------------------------- 8

def kernel_suite():
    norm_err = max(abs(kernel_normalization(t, c) - 1.0) for t in (0.01, 1.0, 100.0) for c in KernelConvention)
    semi_err = max(
        abs(semigroup_residual(t, s, x, c))
        for c in KernelConvention
        for (t, s) in ((0.1, 0.2), (1.0, 0.5), (3.0, 7.0))
        for x in (0.0, 0.7, -2.5)
    )
    c3 = {}
    for c in KernelConvention:
        scan = kernel_product_bound_scan((0.25, 0.5, 0.75), (1.0, 2.0, 4.0), (0.0, 1.0, -1.0, 3.0, -3.0), c)
        c3[c.value] = (scan.c3_square, scan.c3_product)
    ok = norm_err <= 1e-8 and semi_err <= 1e-6 and all(a > 0 and b > 0 for a, b in c3.values())
    parts = ", ".join(f"{k}: square {a:.4f}, product {b:.4f}" for k, (a, b) in c3.items())
    return ok, f"normalisation err {norm_err:.1e}, semigroup err {semi_err:.1e}; C3 {parts}"


# ---------------------------------------------------------------- 9

def theory_oracles():
    failures = []

    def check(label, cond):
        if not cond:
            failures.append(label)

    traj = kaplan_ode_solve(KaplanParams(PI2, 2.0, 2 * PI2, 2.0, 2 * PI2), 1.0)
    check("ode blowup time", abs(traj.blowup_time / (math.log(2) / (2 * PI2)) - 1) <= 1e-6)
    flat = kaplan_ode_solve(KaplanParams(PI2, 0.0, 3.0, 2.0, 1.5), 1.0)
    check("gain=0 decay", abs(flat(0.7) - 1.5 * math.exp(-2.1)) <= 1e-9)
    fixed = kaplan_ode_solve(KaplanParams(PI2, 2.0, 3.0, 2.0, 1.5), 1.0)
    check("fixed point", abs(fixed(0.9) - 1.5) <= 1e-9)
    t_unit = blowup_time_bound(2 * PI2, PI2, 1.0, 2.0).value
    check("T* unit gain", abs(t_unit - math.log(2) / PI2) <= 1e-12 and abs(t_unit - 0.0702302) <= 1e-6)
    check("T* doubled gain", abs(traj.blowup_time - 0.035116) <= 1e-6)
    check("T* at equilibrium", blowup_time_bound(PI2, PI2, 1.0, 2.0).verdict is Verdict.INDETERMINATE)

    check("threshold boundary", eigen_moment_threshold(math.pi, None, 2, 1, 1, PI2).verdict is Verdict.BLOWUP_PREDICTED)
    check("threshold violated", eigen_moment_threshold(math.pi / 2, None, 2, 1, 1, PI2).verdict is Verdict.INDETERMINATE)

    g = GridSpec(0.0, 1.0, 255)
    lam_h = 4 / g.dx**2 * math.sin(math.pi * g.dx / 2) ** 2
    for c in (4.0, 6.0):
        cert = concavity_certificate(g.sample(lambda x: c * np.sin(math.pi * x)), None, None, 3.0, 1.0)
        check(f"certificate c={c}", abs(cert.value - (-c * c * lam_h / 4 + 3 * c**4 / 32)) <= 1e-10 * c**4)
        check(f"certificate sign c={c}", (cert.value > 0) == (c * c > (PI2 / 4) / (3 / 32)))

    rep = eps_moment_threshold(11.0, None, 0.5, 2.0, 1.0, 1.0, 1.0, PI2)
    check("lambda_hat", abs(rep.extras["lambda_hat"] - (PI2 / 2 + 0.125)) <= 1e-12)
    check("eps threshold", abs(rep.threshold - 10.1196) <= 1e-4)
    check("eps exponent", rep.extras["exponent"] == 3.0)

    check("global m=5 p=2", eps_moment_global_condition(5, 2).holds and eps_moment_global_condition(5, 2).lhs == 27)
    check("global m=2 p=1.5", not eps_moment_global_condition(2, 1.5).holds)
    check("global m=p", not eps_moment_global_condition(2, 2).holds)

    ic = interpolation_coeffs(1, 2, 3, 1.0)
    check("interpolation beta", ic.beta == 0.5)
    check("interpolation scan", all(interpolation_coeffs(1, 2, 3, e).scan_residual <= 1e-12 for e in (1e-3, 0.1, 1.0, 10.0)))

    sq = chow_conditions_check(lambda r: r * r, None, 1.0, PI2, 1.0, 1.0, None).n_branch
    check("chow crossing", abs(sq.crossing - PI2) <= 1e-10 * PI2)
    check("chow integral", abs(sq.integral - math.log(2) / PI2) <= 1e-8 and sq.integral_status == "convergent")
    slow = chow_conditions_check(lambda r: PI2 * r + r / math.log(r) ** 2, None, 1.0, PI2, 3.0, 3.0, 50.0).n_branch
    check("chow divergent", slow.integral_status == "divergent")
    lin = chow_conditions_check(lambda r: 5.0 * r, None, 1.0, PI2, 1.0, 1.0, 50.0)
    check("chow no crossing", lin.verdict is Verdict.INDETERMINATE and lin.n_branch.crossing is None)

    check("mollifier C", abs(mollifier_constant() - 2.25228) <= 1e-5)
    check("fujita p=2", fujita_classify(2, 1) is FujitaClass.BLOWUP_ALL_NONTRIVIAL)
    check("fujita p=4", fujita_classify(4, 1) is FujitaClass.SMALL_DATA_GLOBAL_LARGE_DATA_BLOWUP)
    check("fujita p=0.5", fujita_classify(0.5, 3) is FujitaClass.SUBLINEAR_GLOBAL_NONUNIQUE)
    check("white m=1.2", whole_space_noise_classify("white", 1.2, 1) is Verdict.BLOWUP_PREDICTED)
    check("white m=1.6", whole_space_noise_classify("white", 1.6, 1) is Verdict.INDETERMINATE)
    check("brownian m=2", whole_space_noise_classify("brownian", 2.0, 1) is Verdict.BLOWUP_PREDICTED)

    ws = GridSpec(-20.0, 20.0, 1024)
    check("G of constant", abs(kernel_weighted_moment(ws.sample(lambda x: 1.0 + 0 * x), 1.0) - 1.0) <= 1e-10)
    check("G of kernel", abs(kernel_weighted_moment(ws.sample(lambda x: heat_kernel(0.5, x)), 1.0) - heat_kernel(1.5, 0.0)) <= 1e-10)

    # deterministic linear case: the bound decays as exp(-2 lambda1 t) (u0, phi)^2
    gb = GridSpec(0.0, 1.0, 64)
    lam, phi = principal_eigenpair(gb)
    u0 = gb.sample(lambda x: np.sin(math.pi * x))
    res = run_ensemble(ModelSpec(), gb, NoiseModel.white(), SolverConfig(dt0=1e-4, t_end=0.2),
                       EnsembleConfig(2, 0, (0.0, 0.05, 0.1, 0.2), (SquaredEigenMoment(),)), u0)
    eta0 = inner_product(u0, phi) ** 2
    decay = kaplan_ode_solve(KaplanParams(lam, 0.0, 2 * lam, 2.0, eta0), 0.2)
    est, _ = res.series.column("eigen_moment_sq")
    check("eta(0) exact", est[0] == eta0)
    check("linear decay within 2%", all(abs(e / decay(t) - 1) <= 0.02 for t, e in zip(res.series.times, est)))
    return not failures, "all oracle examples reproduced" if not failures else "failed: " + ", ".join(failures)


# ---------------------------------------------------------------- 10, 11

DETERMINISM_CONFIG = """\
schema_version: 1
name: determinism
problem:
  domain: {kind: bounded, a: 0.0, b: 1.0}
  n: 32
model:
  drift: {kind: zero}
  diffusion: {kind: power_abs, C: 1.0, gamma: 2.0}
noise: {kind: correlated, covariance: constant, params: {c: 1.0}}
initial_condition: {family: scaled_eigenmode, params: {projection: 6.283185307179586}}
solver: {dt0: 0.0001, t_end: 0.02}
ensemble:
  m_paths: 64
  base_seed: 5
  record_times: [0.0, 0.005, 0.01, 0.015, 0.02]
  functionals:
    - {name: eigen_moment_sq}
    - {name: lp_moment, param: 2}
    - {name: mean_field}
oracles: [eigen_moment_threshold]
"""


def determinism():
    from .cli import main

    outputs = {}
    old = os.environ.get("SPDE_LAB_THREADS")
    try:
        with tempfile.TemporaryDirectory() as tmp:
            cfg_path = Path(tmp) / "det.yaml"
            cfg_path.write_text(DETERMINISM_CONFIG, encoding="utf-8")
            for label, threads in (("1a", "1"), ("4", "4"), ("1b", "1")):
                os.environ["SPDE_LAB_THREADS"] = threads
                out = Path(tmp) / f"store_{label}"
                code = main(["ensemble", "--config", str(cfg_path), "--out", str(out), "--quiet"])
                if code != 0:
                    return False, f"cmd_ensemble exited {code} with SPDE_LAB_THREADS={threads}"
                (run,) = list((out / "runs").iterdir())
                outputs[label] = (run / "series.csv").read_bytes()
    finally:
        if old is None:
            os.environ.pop("SPDE_LAB_THREADS", None)
        else:
            os.environ["SPDE_LAB_THREADS"] = old
    same = outputs["1a"] == outputs["1b"] == outputs["4"]
    return same, f"series.csv byte-identical across runs and thread counts: {same} ({len(outputs['4'])} bytes)"


def sublinear_global(m_paths: int = 100):
    g = GridSpec(-20.0, 20.0, 400)
    u0 = g.sample(lambda x: np.exp(-(x**2) / 2.0))
    model = ModelSpec(DriftSpec.power_odd(1.0, 0.5), DiffusionSpec.power_abs(1.0, 0.5))
    times = tuple(round(0.1 * k, 10) for k in range(21))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = run_ensemble(model, g, NoiseModel.scalar(), SolverConfig(dt0=1e-3, t_end=2.0),
                           EnsembleConfig(m_paths, 3, times, (SquaredEigenMoment(),)), u0, whole_space=True)
    est, _ = res.series.column("eigen_moment_sq")
    peak = float(np.max(est))
    bf = float(res.series.blown_fraction[-1])
    ok = math.isfinite(peak) and bf == 0.0
    return ok, f"sup_t E(u,phi)^2 = {peak:.4g}, blown fraction {bf:g}, truncation warnings {len(caught)}"


CRITERIA = [
    (1, "eigenpair accuracy", 1.0, eigenpair_accuracy),
    (2, "blowup-time quadrature", 1.0, blowup_time_quadrature),
    (3, "eigen-moment ODE comparison", 600.0, eigen_moment_comparison),
    (4, "linear closed-form moment", 60.0, linear_closed_form_moment),
    (5, "positivity", 60.0, positivity_suite),
    (6, "Fujita deterministic limit", 120.0, fujita_reproduction),
    (7, "mollifier calculus", 5.0, mollifier_suite),
    (8, "heat kernel suite", 30.0, kernel_suite),
    (9, "theory oracle examples", 5.0, theory_oracles),
    (10, "determinism across thread counts", 120.0, determinism),
    (11, "sublinear global existence", 120.0, sublinear_global),
]

QUICK = (1, 2, 7, 8, 9)


def run_criterion(number: int) -> CriterionResult:
    for num, title, budget, func in CRITERIA:
        if num == number:
            return _timed(num, title, budget, func)
    raise KeyError(f"no criterion {number}")


def run_suite(suite: str = "all", echo: bool = True) -> list[CriterionResult]:
    if suite == "all":
        numbers = [c[0] for c in CRITERIA]
    elif suite == "quick":
        numbers = list(QUICK)
    else:
        try:
            numbers = [int(s) for s in suite.split(",")]
        except ValueError:
            raise KeyError(f"unknown suite {suite!r}: use all, quick, or criterion numbers like 1,4") from None
    results = []
    for n in numbers:
        r = run_criterion(n)
        if echo:
            print(r.line(), flush=True)
        results.append(r)
    return results
