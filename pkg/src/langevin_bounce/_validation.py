"""Input validation helpers and exception types shared across the package."""

import numbers

import numpy as np


class DomainError(ValueError):
    """A parameter lies outside the region where the model is defined."""


class SimulationGuardError(RuntimeError):
    """A sampler or integrator tripped one of its runaway guards."""


class QuadratureError(RuntimeError):
    """Numerical integration did not reach its tolerance."""


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise DomainError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise DomainError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise DomainError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_int(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_state(x, u):
    """Validate a starting state of the killed process.

    The admissible set is ``{0} x (0, inf)`` union ``(0, inf) x R``: a particle
    sitting on the wall must be leaving it.
    """
    x = float(x)
    u = float(u)
    if not (np.isfinite(x) and np.isfinite(u)):
        raise DomainError(f"state ({x}, {u}) is not finite")
    if x < 0:
        raise DomainError(f"position must be >= 0, got {x}")
    if x == 0 and u <= 0:
        raise DomainError(
            f"state (0, {u}) is not admissible: on the wall the velocity must be > 0"
        )
    return x, u


def check_samples(samples, name="samples", min_size=1, positive=False):
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size < min_size:
        raise DomainError(f"{name} needs at least {min_size} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    if positive and np.any(arr <= 0):
        raise DomainError(f"{name} must be strictly positive")
    return arr
