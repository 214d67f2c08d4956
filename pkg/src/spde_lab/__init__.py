"""Simulation and theory oracles for blowup of stochastic heat equations."""

__version__ = "0.1.0"

from .ensemble import EnsembleConfig, MomentSeries, run_ensemble
from .grid import Field, GridSpec, principal_eigenpair
from .integrator import PathResult, SolverConfig, simulate_path
from .model import DiffusionSpec, DriftSpec, ModelSpec
from .noise import NoiseModel, RngStream
