"""
Special functions for the Bessel transition kernel

Gamma via the Lanczos approximation, the regularized upper incomplete gamma
function (series / continued fraction), and the rescaled modified Bessel
function z^{-nu} I_nu(z) for orders in (-1, 0).
"""
import logging
import math

import numpy as np

from bessel_lab.config.constants import ERROR_MESSAGES, SPECFUN_CONFIG
from bessel_lab.models.schemas import BesselParams
from bessel_lab.utils.validators import (
    DomainError,
    NumericError,
    validate_non_negative,
    validate_nu,
    validate_positive,
)

logger = logging.getLogger(__name__)

# Lanczos coefficients, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _lanczos_sum(x: float) -> float:
    # x is the shifted argument (Gamma(x + 1))
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (x + i)
    return acc


def gamma_fn(x: float) -> float:
    """
    Gamma function on (0, 171.6]

    Args:
        x: Positive argument

    Returns:
        Gamma(x) with relative error below 1e-13

    Raises:
        DomainError: For non-positive or overflowing arguments
    """
    if math.isnan(x) or x <= 0.0 or x > SPECFUN_CONFIG["gamma_max_argument"]:
        raise DomainError(f"{ERROR_MESSAGES['gamma_domain']}: got {x}")

    if x < 0.5:
        # Reflection keeps the Lanczos sum in its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))

    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    # Split the power so t^(z + 1/2) does not overflow near the top of the range
    half = t ** (0.5 * (z + 0.5))
    return _SQRT_2PI * half * (half * math.exp(-t)) * _lanczos_sum(z)


def log_gamma(x: float) -> float:
    """Logarithm of Gamma(x) for x > 0 (no overflow limit)."""
    if math.isnan(x) or x <= 0.0:
        raise DomainError(f"log_gamma requires x > 0 (got {x})")

    if x < 0.5:
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)

    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    return _LOG_SQRT_2PI + (z + 0.5) * math.log(t) - t + math.log(_lanczos_sum(z))


def _lower_gamma_series(s: float, x: float) -> float:
    """Regularized lower incomplete gamma P(s, x) by its power series."""
    term = 1.0 / s
    total = term
    for n in range(1, SPECFUN_CONFIG["incomplete_gamma_max_iter"]):
        term *= x / (s + n)
        total += term
        if abs(term) < abs(total) * SPECFUN_CONFIG["incomplete_gamma_eps"]:
            return total * math.exp(-x + s * math.log(x) - log_gamma(s))
    raise NumericError(ERROR_MESSAGES["series_failed"], achieved=abs(term / total))


def _upper_gamma_fraction(s: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(s, x) by modified Lentz continued fraction."""
    tiny = SPECFUN_CONFIG["lentz_tiny"]
    eps = SPECFUN_CONFIG["incomplete_gamma_eps"]
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, SPECFUN_CONFIG["incomplete_gamma_max_iter"]):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return math.exp(-x + s * math.log(x) - log_gamma(s)) * h
    raise NumericError(ERROR_MESSAGES["series_failed"], achieved=abs(delta - 1.0))


def reg_upper_gamma(s: float, x: float) -> float:
    """
    Regularized upper incomplete gamma Q(s, x) = Gamma(s, x) / Gamma(s)

    Args:
        s: Shape, s > 0
        x: Argument, x >= 0

    Returns:
        Q(s, x) in [0, 1], absolute error below 1e-12

    Raises:
        DomainError: If s <= 0 or x < 0
    """
    validate_positive(s, "s")
    validate_non_negative(x, "x")

    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < s + 1.0:
        return max(0.0, 1.0 - _lower_gamma_series(s, x))
    return min(1.0, _upper_gamma_fraction(s, x))


def _bessel_series(nu: float, z: float) -> float:
    # 2^{-nu} sum_k (z^2/4)^k / (k! Gamma(nu + k + 1))
    quarter = 0.25 * z * z
    term = 1.0 / gamma_fn(nu + 1.0)
    total = term
    for k in range(SPECFUN_CONFIG["bessel_series_max_terms"]):
        term *= quarter / ((k + 1) * (nu + k + 1))
        total += term
        if term <= SPECFUN_CONFIG["bessel_series_rtol"] * total:
            break
    return 2.0 ** (-nu) * total


def _bessel_asymptotic_scaled(nu: float, z: float) -> float:
    """e^{-z} I_nu(z) from the large-argument expansion (valid for z > 30)."""
    four_nu2 = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    for k in range(1, 40):
        nxt = -term * (four_nu2 - (2 * k - 1) ** 2) / (8.0 * k * z)
        if abs(nxt) > abs(term):
            break
        term = nxt
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total / math.sqrt(2.0 * math.pi * z)


def bessel_i_scaled_exp(nu: float, z: float) -> float:
    """
    Exponentially damped rescaled Bessel function e^{-z} z^{-nu} I_nu(z)

    Finite for every z >= 0, used wherever the kernel multiplies by e^{-z}.
    """
    validate_nu(nu)
    validate_non_negative(z, "z")

    if z <= SPECFUN_CONFIG["bessel_series_cutoff"]:
        return math.exp(-z) * _bessel_series(nu, z)
    return _bessel_asymptotic_scaled(nu, z) * z ** (-nu)


def bessel_i_scaled(nu: float, z: float) -> float:
    """
    Rescaled modified Bessel function z^{-nu} I_nu(z), entire in z

    Args:
        nu: Order in (-1, 0)
        z: Argument, z >= 0

    Returns:
        The value; 2^{-nu} / Gamma(nu + 1) at z = 0

    Raises:
        DomainError: For nu outside (-1, 0), negative z, or overflow
    """
    validate_nu(nu)
    validate_non_negative(z, "z")

    if z <= SPECFUN_CONFIG["bessel_series_cutoff"]:
        return _bessel_series(nu, z)
    if z > SPECFUN_CONFIG["bessel_overflow_z"]:
        raise DomainError(f"bessel_i_scaled overflows for z = {z}; use bessel_i_scaled_exp")
    return math.exp(z) * _bessel_asymptotic_scaled(nu, z) * z ** (-nu)


def transition_density(params: BesselParams, t: float, x: float, y: float) -> float:
    """
    Transition density p(t; x, y) relative to the speed measure m(dy) = y^{1-2mu}/mu dy

    p = (mu / t) t^mu exp(-(x - y)^2 / (2t)) e^{-z} z^{mu} I_{-mu}(z),  z = xy / t

    Args:
        params: Process parameters
        t: Elapsed time, t > 0
        x: Start point, x >= 0
        y: End point, y >= 0

    Returns:
        Density value, symmetric in (x, y)
    """
    validate_positive(t, "t")
    validate_non_negative(x, "x")
    validate_non_negative(y, "y")

    mu = params.mu
    z = x * y / t
    return (
        (mu / t) * t ** mu
        * math.exp(-((x - y) ** 2) / (2.0 * t))
        * bessel_i_scaled_exp(params.nu, z)
    )


def speed_density(params: BesselParams, y):
    """Speed measure density y^{1-2mu} / mu (scalar or array), y > 0."""
    if np.any(np.asarray(y) <= 0):
        raise DomainError(f"Speed density requires y > 0 (got {y})")
    mu = params.mu
    return np.power(y, 1.0 - 2.0 * mu) / mu


def scale_fn(params: BesselParams, x):
    """Scale function s(x) = x^{2mu}, making R^{2mu} - L a martingale."""
    return np.power(x, 2.0 * params.mu)
