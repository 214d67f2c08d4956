"""Named oracles that can be run against an experiment configuration."""

from __future__ import annotations

from typing import Callable

from ..grid import principal_eigenpair, inner_product
from ..model import DiffusionKind, DriftKind
from ..noise import NoiseKind, covariance_bounds
from .classify import chow_conditions_check, fujita_classify, whole_space_noise_classify
from .concavity import concavity_certificate
from .inequalities import eps_moment_global_condition, interpolation_coeffs
from .kaplan import eigen_moment_threshold, eps_moment_threshold
from .reports import jsonable


class NotApplicable(Exception):
    pass


def _noise_q_range(cfg):
    """``(q1, q0)``: lower and upper bounds of the covariance on the closed domain."""
    kind = NoiseKind(cfg.noise.kind)
    if kind in (NoiseKind.SCALAR, NoiseKind.ADDITIVE):
        return 1.0, 1.0
    if kind is NoiseKind.CORRELATED:
        return covariance_bounds(cfg.noise_model().covariance, cfg.grid())
    raise NotApplicable("white noise has no bounded covariance function")


def _bounded(cfg):
    if cfg.whole_space:
        raise NotApplicable("needs a bounded domain")


def _power_drift(cfg):
    if cfg.drift.kind == DriftKind.ZERO.value:
        raise NotApplicable("needs a power drift")
    return cfg.drift.C0, cfg.drift.p


def _diffusion_bounds(cfg):
    b = cfg.model().diffusion.bounds
    if b is None:
        raise NotApplicable("needs a power-law diffusion envelope")
    return b


def _eigen_moment(cfg):
    _bounded(cfg)
    b = _diffusion_bounds(cfg)
    if not b.gamma > 1:
        raise NotApplicable("needs a superlinear lower diffusion exponent")
    # an explicit q1 lets white-noise runs be compared against the bound exploratorily
    q1 = cfg.oracle_params["q1"] if "q1" in cfg.oracle_params else _noise_q_range(cfg)[0]
    if not q1 > 0:
        raise NotApplicable("covariance is not bounded below by a positive constant")
    lam, phi = principal_eigenpair(cfg.grid())
    return eigen_moment_threshold(cfg.initial_field(), phi, b.gamma, q1, b.C1, lam)


def _eps_moment(cfg):
    _bounded(cfg)
    C0, p = _power_drift(cfg)
    if not p > 1:
        raise NotApplicable("needs p > 1")
    params = cfg.oracle_params
    q0 = _noise_q_range(cfg)[1] if cfg.noise.kind != "white" else params.get("q0")
    if q0 is None:
        raise NotApplicable("white noise: supply oracle_params.q0")
    if "C1" in params:
        C1 = params["C1"]
    else:
        b = _diffusion_bounds(cfg)
        if b.gamma1 != 1:
            raise NotApplicable("needs a linear upper bound on sigma or an explicit C1")
        C1 = b.C2
    lam, phi = principal_eigenpair(cfg.grid())
    return eps_moment_threshold(cfg.initial_field(), phi, params.get("eps", 0.5), p, params.get("q0", q0), C0, C1, lam)


def _eps_global(cfg):
    _, p = _power_drift(cfg)
    if "m" not in cfg.oracle_params:
        raise NotApplicable("needs oracle_params.m")
    return eps_moment_global_condition(cfg.oracle_params["m"], p, cfg.oracle_params.get("eps"))


def _concavity(cfg):
    _bounded(cfg)
    _, p = _power_drift(cfg)
    model = cfg.model()
    if model.diffusion.kind is DiffusionKind.ADDITIVE:
        sig, grad = model.diffusion.sigma_xt, model.diffusion.grad_sigma_xt
    elif model.diffusion.kind is DiffusionKind.ZERO:
        sig = grad = None
    else:
        raise NotApplicable("needs additive or zero diffusion")
    return concavity_certificate(cfg.initial_field(), sig, grad, p, cfg.oracle_params.get("t_horizon", 10.0))


def _fujita(cfg):
    _, p = _power_drift(cfg)
    return {"p": p, "d": 1, "class": fujita_classify(p, 1)}


def _whole_space(cfg):
    if not cfg.whole_space:
        raise NotApplicable("needs a whole-space problem")
    model = cfg.model()
    b = model.diffusion.bounds
    m = b.gamma if b is not None else None
    sub = None
    if b is not None and cfg.drift.kind != "zero" and cfg.drift.p < 1 and b.gamma1 < 1:
        sub = max(cfg.drift.p, b.gamma1)
    return {"noise": cfg.noise.kind, "m": m, "sublinear_p": sub,
            "verdict": whole_space_noise_classify(cfg.noise.kind, m, 1, sub)}


def _chow(cfg):
    _bounded(cfg)
    C0, p = _power_drift(cfg)
    lam, phi = principal_eigenpair(cfg.grid())
    F = lambda r: C0 * r**p
    G = None
    b = cfg.model().diffusion.bounds
    q1 = 0.0
    if b is not None and cfg.noise.kind != "white":
        q1, _ = _noise_q_range(cfg)
        G = lambda r: 0.5 * b.C1**2 * r**b.gamma
    r0 = cfg.oracle_params.get("r_scan_min", 1e-6)
    return chow_conditions_check(F, G, q1, lam, r0, r0, inner_product(cfg.initial_field(), phi))


def _interpolation(cfg):
    prm = cfg.oracle_params
    if not all(k in prm for k in ("r", "m", "n")):
        raise NotApplicable("needs oracle_params r, m, n")
    return interpolation_coeffs(prm["r"], prm["m"], prm["n"], prm.get("eps", 1.0))


ORACLES: dict[str, Callable] = {
    "eigen_moment_threshold": _eigen_moment,
    "eps_moment_threshold": _eps_moment,
    "eps_moment_global_condition": _eps_global,
    "concavity_certificate": _concavity,
    "fujita_classify": _fujita,
    "whole_space_noise_classify": _whole_space,
    "chow_conditions_check": _chow,
    "interpolation_coeffs": _interpolation,
}


def run_oracles(cfg, names=None) -> dict:
    """JSON-ready results of the named oracles (all of them when ``names`` is empty)."""
    out = {}
    for name in names or ORACLES:
        if name not in ORACLES:
            raise KeyError(f"unknown oracle {name!r}; valid: {sorted(ORACLES)}")
        try:
            out[name] = {"applicable": True, "result": jsonable(ORACLES[name](cfg))}
        except NotApplicable as exc:
            out[name] = {"applicable": False, "reason": str(exc)}
    return out
