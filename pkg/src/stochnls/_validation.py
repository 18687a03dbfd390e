"""Input validation helpers shared by the functional API and the estimators."""

import numbers

import numpy as np


class ParameterError(ValueError):
    """Raised when a model, noise or integrator parameter is inadmissible."""


class NumericalAbort(RuntimeError):
    """Raised when a trajectory produces a non-finite state."""

    def __init__(self, message, time=None, trajectories=None):
        super().__init__(message)
        self.time = time
        self.trajectories = trajectories


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ParameterError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ParameterError(f"{name} must be {bound}, got {value!r}")
    return value


def check_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_field(coeffs, n_modes, name="field"):
    """Return ``coeffs`` as a complex array whose last axis has ``n_modes`` entries."""
    arr = np.asarray(coeffs)
    if arr.ndim == 0:
        raise ParameterError(f"{name} must be at least one-dimensional")
    if arr.shape[-1] != n_modes:
        raise ParameterError(
            f"{name} has {arr.shape[-1]} coefficients, basis has {n_modes} modes"
        )
    if not (np.issubdtype(arr.dtype, np.number)):
        raise ParameterError(f"{name} must be numeric, got dtype {arr.dtype}")
    return arr.astype(np.complex128, copy=False)


def check_grid_values(values, grid_points, name="values"):
    arr = np.asarray(values)
    if arr.ndim == 0 or arr.shape[-1] != grid_points:
        raise ParameterError(f"{name} must have {grid_points} grid values on its last axis")
    return arr.astype(np.complex128, copy=False)
