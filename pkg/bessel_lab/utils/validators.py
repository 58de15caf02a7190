"""
Lab validators and error types
"""
import math
from typing import Optional, Sequence

import numpy as np

from bessel_lab.config.constants import ERROR_MESSAGES


class ValidationError(Exception):
    """Custom exception for validation errors"""
    pass


class DomainError(ValidationError):
    """Argument outside the domain of a function"""
    pass


class SpecError(ValidationError):
    """Inconsistent or invalid martingale specification"""
    pass


class UsageError(ValidationError):
    """Bad command-line usage or unknown experiment"""
    pass


class NumericError(Exception):
    """Series or quadrature failed to reach the requested tolerance"""

    def __init__(self, message: str, achieved: Optional[float] = None):
        self.achieved = achieved
        if achieved is not None:
            message = f"{message} (achieved tolerance {achieved:.3e})"
        super().__init__(message)


class HorizonNotReachedError(NumericError):
    """Simulation budget too small for the requested horizon"""

    def __init__(self, message: str, paths: Sequence[int] = ()):
        self.paths = list(paths)
        if self.paths:
            shown = ", ".join(str(p) for p in self.paths[:10])
            more = "" if len(self.paths) <= 10 else f", ... ({len(self.paths)} total)"
            message = f"{message}; offending paths: {shown}{more}"
        super().__init__(message)


def validate_mu(mu: float) -> bool:
    """
    Validates the Bessel index parameter

    Args:
        mu: Parameter, must lie in (0, 1)

    Returns:
        True if valid

    Raises:
        DomainError: If mu is outside (0, 1)
    """
    if mu is None or not isinstance(mu, (int, float)):
        raise DomainError("mu must be a number")

    if not 0.0 < mu < 1.0 or math.isnan(mu):
        raise DomainError(ERROR_MESSAGES["mu_range"])

    return True


def validate_nu(nu: float) -> bool:
    """Validates a Bessel order in (-1, 0)."""
    if not -1.0 < nu < 0.0:
        raise DomainError(f"{ERROR_MESSAGES['nu_range']}: got {nu}")
    return True


def validate_non_negative(value: float, name: str = "value") -> bool:
    """
    Validates that a scalar is finite and non-negative

    Raises:
        DomainError: If negative or NaN
    """
    if value is None or math.isnan(value) or value < 0:
        raise DomainError(f"{name}: {ERROR_MESSAGES['negative_argument']} (got {value})")
    return True


def validate_positive(value: float, name: str = "value") -> bool:
    """Validates that a scalar is strictly positive."""
    if value is None or math.isnan(value) or value <= 0:
        raise DomainError(f"{name} must be positive (got {value})")
    return True


def validate_time_window(t: float, horizon: float) -> bool:
    """
    Validates 0 <= t < horizon

    Args:
        t: Current time
        horizon: Terminal time

    Returns:
        True if valid

    Raises:
        DomainError: If t is outside [0, horizon)
    """
    if not 0.0 <= t < horizon:
        raise DomainError(f"Time {t} must satisfy 0 <= t < {horizon}")
    return True


def validate_grid_time(t: float, times: np.ndarray) -> int:
    """
    Validates that t lies on the path grid horizon and returns its index

    Args:
        t: Requested time
        times: Uniform time grid

    Returns:
        Index of the largest grid time <= t
    """
    if t < 0 or t > times[-1] * (1 + 1e-12):
        raise DomainError(f"Time {t} outside the simulated horizon [0, {times[-1]}]")
    dt = times[1] - times[0]
    return int(min(len(times) - 1, math.floor(t / dt + 1e-9)))


def validate_sample(sample: np.ndarray) -> bool:
    """Validates a non-empty finite sample."""
    if sample is None or np.size(sample) == 0:
        raise DomainError(ERROR_MESSAGES["empty_sample"])
    return True
