"""Spectral simulation of the damped, stochastically forced fractional NLS equation."""

__version__ = "0.1.0"

from ._validation import NumericalAbort, ParameterError
from .integrator import IntegratorConfig, ObservableSeries, TrajectoryBatch, run, run_ensemble, step
from .spectral import Basis, ModelParams, NoiseOperator, build_basis, estimate_G, hs_norms
from .stationary import (
    EnsembleStats,
    SweepResult,
    Tolerances,
    ensemble_stationary,
    gamma_sweep,
    kb_time_average,
    limit_conservation_check,
    mass_ode_check,
    moment_envelope_check,
    small_ball_and_atom_tests,
)

__all__ = [
    "Basis",
    "EnsembleStats",
    "IntegratorConfig",
    "ModelParams",
    "NoiseOperator",
    "NumericalAbort",
    "ObservableSeries",
    "ParameterError",
    "SweepResult",
    "Tolerances",
    "TrajectoryBatch",
    "build_basis",
    "ensemble_stationary",
    "estimate_G",
    "gamma_sweep",
    "hs_norms",
    "kb_time_average",
    "limit_conservation_check",
    "mass_ode_check",
    "moment_envelope_check",
    "run",
    "run_ensemble",
    "small_ball_and_atom_tests",
    "step",
]
