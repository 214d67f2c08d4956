"""Experiment configuration files (YAML) and their translation into runtime objects."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

import numpy as np
import yaml

from .ensemble import EnsembleConfig, functional_from_name
from .grid import Field, GridSpec, inner_product, principal_eigenpair
from .integrator import SolverConfig
from .kernel import KernelConvention, heat_kernel
from .model import AMPLITUDE_FAMILIES, DiffusionBounds, DiffusionKind, DiffusionSpec, DriftSpec, ModelSpec, verify_bounds
from .noise import COVARIANCE_FAMILIES, NoiseKind, NoiseModel

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class DomainConfig:
    kind: str = "bounded"  # bounded | whole_space
    a: float = 0.0
    b: float = 1.0
    L: Optional[float] = None  # half-width of the truncation for whole_space

    def interval(self) -> tuple[float, float]:
        if self.kind == "whole_space":
            return -float(self.L), float(self.L)
        return float(self.a), float(self.b)


@dataclass(frozen=True)
class ProblemConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    n: int = 64


@dataclass(frozen=True)
class DriftConfig:
    kind: str = "zero"
    C0: float = 0.0
    p: float = 1.0


@dataclass(frozen=True)
class DiffusionConfig:
    kind: str = "zero"
    C: float = 0.0
    gamma: float = 1.0
    bounds: Optional[dict] = None  # {C1, C2, gamma, gamma1}
    family: Optional[str] = None  # additive amplitude family
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "white"
    covariance: Optional[str] = None
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class InitialCondition:
    family: str = "scaled_eigenmode"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EnsembleSection:
    m_paths: int = 100
    base_seed: int = 0
    record_times: tuple = ()
    functionals: tuple = ({"name": "eigen_moment_sq"},)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs"
    formats: tuple = ("csv", "json", "md")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    schema_version: int = SCHEMA_VERSION
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    drift: DriftConfig = field(default_factory=DriftConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    solver: SolverConfig = field(default_factory=SolverConfig)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    oracles: tuple = ()
    oracle_params: dict = field(default_factory=dict)
    output: OutputConfig = field(default_factory=OutputConfig)

    # ------------------------------------------------------------ serialisation

    def to_dict(self) -> dict:
        d = _plain(asdict(self))
        # group model sections the way the file is written
        d["model"] = {"drift": d.pop("drift"), "diffusion": d.pop("diffusion")}
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed: Optional[int] = None, paths: Optional[int] = None) -> "ExperimentConfig":
        ens = self.ensemble
        if seed is not None:
            ens = EnsembleSection(ens.m_paths, int(seed), ens.record_times, ens.functionals)
        if paths is not None:
            ens = EnsembleSection(int(paths), ens.base_seed, ens.record_times, ens.functionals)
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["ensemble"] = ens
        return ExperimentConfig(**d)

    # ------------------------------------------------------------ runtime objects

    def grid(self) -> GridSpec:
        a, b = self.problem.domain.interval()
        return GridSpec(a, b, self.problem.n)

    @property
    def whole_space(self) -> bool:
        return self.problem.domain.kind == "whole_space"

    def model(self) -> ModelSpec:
        dr = self.drift
        drift = DriftSpec(dr.kind, dr.C0, dr.p)
        df = self.diffusion
        if df.kind == DiffusionKind.ADDITIVE.value:
            sigma, grad = AMPLITUDE_FAMILIES[df.family](**df.params)
            diff = DiffusionSpec.additive(sigma, grad, label=df.family)
        else:
            bounds = DiffusionBounds(**df.bounds) if df.bounds else None
            diff = DiffusionSpec(df.kind, df.C, df.gamma, bounds)
        return ModelSpec(drift, diff)

    def noise_model(self) -> NoiseModel:
        nz = self.noise
        if nz.kind == NoiseKind.CORRELATED.value:
            q = COVARIANCE_FAMILIES[nz.covariance](**nz.params)
            return NoiseModel.correlated(q, label=nz.covariance)
        return NoiseModel(NoiseKind(nz.kind), label=nz.kind)

    def initial_field(self) -> Field:
        return build_initial_condition(self.initial_condition, self.grid())

    def ensemble_config(self) -> EnsembleConfig:
        e = self.ensemble
        funcs = tuple(functional_from_name(f["name"], f.get("param")) for f in e.functionals)
        return EnsembleConfig(e.m_paths, e.base_seed, e.record_times, funcs)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------- initial conditions

def _scaled_eigenmode(g: GridSpec, c: Optional[float] = None, projection: Optional[float] = None) -> Field:
    """``c * phi`` for the grid's principal eigenvector; ``projection`` fixes ``(u0, phi)`` instead."""
    _, phi = principal_eigenpair(g)
    if projection is not None:
        return phi * (projection / inner_product(phi, phi))
    return phi * (1.0 if c is None else c)


def _gaussian_bump(g: GridSpec, amp: float = 1.0, center: float = 0.0, width: float = 1.0) -> Field:
    return g.sample(lambda x: amp * np.exp(-((x - center) ** 2) / (2.0 * width**2)))


def _indicator(g: GridSpec, c: float = 1.0, radius: float = 1.0, center: float = 0.0) -> Field:
    return g.sample(lambda x: np.where(np.abs(x - center) < radius, c, 0.0))


def _sine(g: GridSpec, amp: float = 1.0, mode: int = 1) -> Field:
    return g.sample(lambda x: amp * np.sin(mode * math.pi * (x - g.a) / g.length))


def _heat_kernel_ic(g: GridSpec, amp: float = 1.0, t: float = 1.0, convention: str = "laplacian") -> Field:
    return g.sample(lambda x: amp * heat_kernel(t, x, KernelConvention(convention)))


def _custom(g: GridSpec, x: list, values: list) -> Field:
    """Linear interpolation of a table, zero outside it."""
    return g.sample(lambda nodes: np.interp(nodes, np.asarray(x, float), np.asarray(values, float), left=0.0, right=0.0))


IC_FAMILIES = {
    "scaled_eigenmode": _scaled_eigenmode,
    "gaussian_bump": _gaussian_bump,
    "indicator": _indicator,
    "sine": _sine,
    "heat_kernel": _heat_kernel_ic,
    "custom": _custom,
}


def build_initial_condition(ic: InitialCondition, g: GridSpec) -> Field:
    if ic.family not in IC_FAMILIES:
        raise ConfigError("initial_condition.family", f"unknown family {ic.family!r}; valid: {sorted(IC_FAMILIES)}")
    try:
        return IC_FAMILIES[ic.family](g, **ic.params)
    except TypeError as exc:
        raise ConfigError("initial_condition.params", str(exc)) from None


# ---------------------------------------------------------------- parsing

def _section(raw: dict, key: str, cls, path: str):
    val = raw.get(key, {})
    if val is None:
        val = {}
    if not isinstance(val, dict):
        raise ConfigError(path, "expected a mapping")
    known = {f.name for f in fields(cls)}
    extra = set(val) - known
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", f"unknown key; valid keys: {sorted(known)}")
    try:
        return cls(**{k: (tuple(v) if isinstance(v, list) and k not in ("x", "values") else v) for k, v in val.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    allowed = {"name", "schema_version", "problem", "model", "noise", "initial_condition", "solver",
               "ensemble", "oracles", "oracle_params", "output"}
    extra = set(raw) - allowed
    if extra:
        raise ConfigError(sorted(extra)[0], f"unknown section; valid sections: {sorted(allowed)}")

    prob = raw.get("problem", {}) or {}
    domain = _section(prob, "domain", DomainConfig, "problem.domain")
    if domain.kind not in ("bounded", "whole_space"):
        raise ConfigError("problem.domain.kind", f"expected bounded or whole_space, got {domain.kind!r}")
    if domain.kind == "whole_space" and not (domain.L and domain.L > 0):
        raise ConfigError("problem.domain.L", "whole_space needs a positive half-width L")
    n = prob.get("n", 64)
    if not isinstance(n, int) or n < 2:
        raise ConfigError("problem.n", f"expected an integer >= 2, got {n!r}")
    problem = ProblemConfig(domain, n)

    model = raw.get("model", {}) or {}
    drift = _section(model, "drift", DriftConfig, "model.drift")
    diffusion = _section(model, "diffusion", DiffusionConfig, "model.diffusion")
    noise = _section(raw, "noise", NoiseConfig, "noise")
    ic = _section(raw, "initial_condition", InitialCondition, "initial_condition")
    solver = _section(raw, "solver", SolverConfig, "solver")
    ens = _section(raw, "ensemble", EnsembleSection, "ensemble")
    ens = EnsembleSection(ens.m_paths, ens.base_seed, tuple(float(t) for t in ens.record_times),
                          tuple(dict(f) for f in ens.functionals))
    output = _section(raw, "output", OutputConfig, "output")
    oracles = tuple(raw.get("oracles", ()) or ())
    oracle_params = dict(raw.get("oracle_params", {}) or {})
    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        schema_version=version,
        problem=problem,
        drift=drift,
        diffusion=diffusion,
        noise=noise,
        initial_condition=ic,
        solver=solver,
        ensemble=ens,
        oracles=oracles,
        oracle_params=oracle_params,
        output=output,
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Build every runtime object once so bad values surface with a field path."""
    checks = [
        ("problem", cfg.grid),
        ("model.drift", lambda: DriftSpec(cfg.drift.kind, cfg.drift.C0, cfg.drift.p)),
        ("model.diffusion", cfg.model),
        ("noise", cfg.noise_model),
        ("initial_condition", cfg.initial_field),
        ("ensemble", cfg.ensemble_config),
    ]
    for path, build in checks:
        try:
            build()
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(path, str(exc)) from None
    if cfg.noise.kind == "correlated" and cfg.noise.covariance not in COVARIANCE_FAMILIES:
        raise ConfigError("noise.covariance", f"unknown covariance family; valid: {sorted(COVARIANCE_FAMILIES)}")
    if cfg.diffusion.kind == "additive" and cfg.diffusion.family not in AMPLITUDE_FAMILIES:
        raise ConfigError("model.diffusion.family", f"unknown amplitude family; valid: {sorted(AMPLITUDE_FAMILIES)}")
    report = verify_bounds(cfg.model().diffusion)
    if not report.passed:
        raise ConfigError(
            "model.diffusion.bounds",
            f"declared envelope violated by factor {report.worst_ratio:.6g} at u = {report.worst_u:g}",
        )
    from .theory.registry import ORACLES  # late import: the registry needs this module

    for i, name in enumerate(cfg.oracles):
        if name not in ORACLES:
            raise ConfigError(f"oracles[{i}]", f"unknown oracle {name!r}; valid: {sorted(ORACLES)}")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return config_from_dict(raw)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
