"""
Closed-form laws and conditional expectations

Reference values for the Monte Carlo checks: the generalized arcsine law of
the last zero, the Azema supermartingale Z, the conditional law of g given
the present, the meander law, the excursion Levy tail, barrier probabilities
and the terminal-local-time martingale X.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from bessel_lab.config.constants import QUADRATURE_CONFIG
from bessel_lab.core.specfun import gamma_fn, reg_upper_gamma, transition_density
from bessel_lab.models.schemas import BesselParams
from bessel_lab.utils.quadrature import beta_kernel_rule, quad_checked
from bessel_lab.utils.validators import (
    DomainError,
    NumericError,
    validate_non_negative,
    validate_positive,
    validate_time_window,
)

logger = logging.getLogger(__name__)


@dataclass
class ConditionalGLaw:
    """Law of g_mu(T) given F_t: an atom at g_mu(t) plus a density on (t, T)"""
    t: float
    horizon: float
    atom_weight: float
    atom_location: Optional[float]
    density: Callable[[float], float]

    @property
    def continuous_mass(self) -> float:
        return 1.0 - self.atom_weight


def lt_mean(params: BesselParams, t: float = 1.0) -> float:
    """E[L_t] = 2^mu t^mu / Gamma(1 - mu)."""
    return params.lt_scale * t ** params.mu


def level_local_time_mean(params: BesselParams, a: float, t: float = 1.0) -> float:
    """E_0[L_t^a] = int_0^t p(u; 0, a) du, the density taken against the speed measure."""
    validate_positive(a, "a")
    validate_positive(t, "t")
    return quad_checked(lambda u: transition_density(params, u, 0.0, a) if u > 0 else 0.0, 0.0, t)


def z_supermartingale(params: BesselParams, r, t: float, T: float = 1.0):
    """
    Z_t = P(g_mu(T) > t | F_t) = Q(mu, R_t^2 / (2 (T - t)))

    Args:
        params: Process parameters
        r: Current value(s) R_t
        t: Current time, 0 <= t < T
        T: Horizon

    Returns:
        Value in [0, 1] (array if r is an array)
    """
    validate_time_window(t, T)
    tau = T - t
    func = np.vectorize(lambda x: reg_upper_gamma(params.mu, x * x / (2.0 * tau)), otypes=[float])
    out = func(r)
    return out if np.ndim(r) else float(out)


def theta_mu(params: BesselParams, x):
    """Tail weight Q(mu, x^2 / 2) of the meander decomposition (equals Z with T - t = 1)."""
    func = np.vectorize(lambda v: reg_upper_gamma(params.mu, v * v / 2.0), otypes=[float])
    out = func(x)
    return out if np.ndim(x) else float(out)


def gmu_density(params: BesselParams, s):
    """Generalized arcsine density sin(pi mu)/pi s^{mu-1} (1-s)^{-mu} on (0, 1), zero outside."""
    s = np.asarray(s, dtype=float)
    mu = params.mu
    inside = (s > 0) & (s < 1)
    safe = np.where(inside, s, 0.5)
    out = np.where(inside, params.beta_constant * safe ** (mu - 1.0) * (1.0 - safe) ** (-mu), 0.0)
    return out if out.ndim else float(out)


def gmu_cdf(params: BesselParams, s):
    """CDF of Beta(mu, 1 - mu)."""
    return special.betainc(params.mu, 1.0 - params.mu, np.clip(s, 0.0, 1.0))


def conditional_g_law(
    params: BesselParams,
    r: float,
    t: float,
    T: float = 1.0,
    g_t: Optional[float] = None,
) -> ConditionalGLaw:
    """
    Conditional law of g_mu(T) given R_t = r and the last zero g_t before t

    The atom 1 - Z sits at g_t; the density on (t, T) is
    sin(pi mu)/pi (u - t)^{mu-1} (T - u)^{-mu} exp(-r^2 / (2 (u - t))).
    """
    validate_non_negative(r, "r")
    validate_time_window(t, T)
    z = z_supermartingale(params, r, t, T)
    mu = params.mu
    const = params.beta_constant

    def density(u: float) -> float:
        if not t < u < T:
            return 0.0
        return const * (u - t) ** (mu - 1.0) * (T - u) ** (-mu) * math.exp(-r * r / (2.0 * (u - t)))

    return ConditionalGLaw(t=t, horizon=T, atom_weight=1.0 - z, atom_location=g_t, density=density)


def conditional_h_integral(
    params: BesselParams,
    h: Callable[[float], float],
    r: float,
    t: float,
    T: float = 1.0,
) -> float:
    """
    sin(pi mu)/pi int_0^1 h(t + z (T - t)) exp(-r^2 / (2 z (T - t))) z^{mu-1} (1 - z)^{-mu} dz

    Equals E[h(g_mu(T)) 1{g_mu(T) > t} | R_t = r]; for h = 1 it reproduces Z_t.

    Raises:
        NumericError: If the quadrature does not reach 1e-8
    """
    validate_non_negative(r, "r")
    validate_time_window(t, T)
    tau = T - t
    mu = params.mu
    c = r * r / (2.0 * tau)

    def integrand(z: float) -> float:
        if z <= 0.0:
            return 0.0 if c > 0 else h(t)
        return h(t + z * tau) * math.exp(-c / z)

    value = quad_checked(integrand, 0.0, 1.0, epsabs=1e-10, weight="alg", wvar=(mu - 1.0, -mu))
    return params.beta_constant * value


def meander_law() -> Tuple[Callable, Callable]:
    """Rayleigh density and CDF of the terminal meander value."""
    def density(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, x * np.exp(-0.5 * x * x), 0.0)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-0.5 * x * x), 0.0)

    return density, cdf


def meander_expectation(f: Callable[[float], float], scale: float) -> float:
    """E[f(scale * m)] for a Rayleigh variable m."""
    validate_non_negative(scale, "scale")
    return quad_checked(lambda z: z * math.exp(-0.5 * z * z) * f(scale * z), 0.0, np.inf)


def levy_tail(params: BesselParams, x):
    """Excursion-length tail n_mu([x, inf)) = x^{-mu} / (2^mu Gamma(1 + mu))."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("Excursion length must be positive")
    out = params.c_mu * x ** (-params.mu)
    return out if out.ndim else float(out)


def truncate_phi(phi: Callable[[float], float], u: float) -> Callable[[float], float]:
    """phi_u: equal to phi below u, +inf from u on."""
    def truncated(x: float) -> float:
        return phi(x) if x < u else math.inf
    return truncated


def barrier_integral(
    params: BesselParams,
    phi: Callable[[float], float],
    lower: float,
    upper: float,
    points: Optional[Sequence[float]] = None,
) -> float:
    """int_lower^upper phi(x)^{-2 mu} dx (phi may be +inf, contributing zero)."""
    if upper <= lower:
        return 0.0
    mu = params.mu

    def integrand(x: float) -> float:
        value = phi(x)
        return 0.0 if math.isinf(value) else value ** (-2.0 * mu)

    if math.isinf(upper):
        return quad_checked(integrand, lower, upper, epsabs=1e-10)
    inner = None if points is None else [p for p in points if lower < p < upper]
    return quad_checked(integrand, lower, upper, epsabs=1e-10, points=inner or None)


def hitting_probability(
    params: BesselParams,
    phi: Callable[[float], float],
    u: float = math.inf,
    points: Optional[Sequence[float]] = None,
) -> float:
    """
    P(exists t <= tau_u : R_t > phi(L_t)) = 1 - exp(-int_0^u phi(x)^{-2 mu} dx)

    Args:
        params: Process parameters
        phi: Positive barrier as a function of local time
        u: Local-time horizon (inf for the whole path)
        points: Discontinuities of phi, passed to the quadrature

    Returns:
        Probability; 1 when the integral diverges
    """
    validate_positive(u, "u")
    try:
        integral = barrier_integral(params, phi, 0.0, u, points)
    except NumericError as e:
        if math.isinf(u):
            logger.warning(f"⚠️ Barrier integral did not converge, treating as divergent: {e}")
            return 1.0
        raise
    if not np.isfinite(integral) or integral > QUADRATURE_CONFIG["divergence_cap"]:
        return 1.0
    return -math.expm1(-integral)


def martingale_X_closed_form(params: BesselParams, r, l, t: float, T: float = 1.0):
    """
    X_t = E[L_T | F_t] = l + (mu 2^mu / Gamma(1-mu)) int_0^{T-t} s^{mu-1} exp(-r^2/(2s)) ds

    Evaluated through the incomplete gamma recurrence:
    X_t = l + 2^mu tau^mu e^{-x} / Gamma(1-mu) - r^{2mu} Q(1-mu, x),  x = r^2 / (2 tau).
    """
    validate_time_window(t, T)
    mu = params.mu
    tau = T - t
    lead = params.lt_scale * tau ** mu

    def single(rv: float, lv: float) -> float:
        if rv == 0.0:
            return lv + lead
        x = rv * rv / (2.0 * tau)
        return lv + lead * math.exp(-x) - rv ** (2.0 * mu) * reg_upper_gamma(1.0 - mu, x)

    out = np.vectorize(single, otypes=[float])(r, l)
    return out if out.ndim else float(out)


def martingale_X_quadrature(params: BesselParams, r: float, l: float, t: float, T: float = 1.0) -> float:
    """Direct quadrature of the X kernel (cross-check for the closed form)."""
    validate_time_window(t, T)
    mu = params.mu
    tau = T - t
    value = quad_checked(
        lambda s: math.exp(-r * r / (2.0 * s)) if s > 0 else float(r == 0.0),
        0.0, tau, epsabs=1e-12, weight="alg", wvar=(mu - 1.0, 0.0),
    )
    return l + mu * 2.0 ** mu / gamma_fn(1.0 - mu) * value


def beta_kernel_expectation(params: BesselParams, g_values: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """
    sin(pi mu)/pi int_0^1 G(z) z^{mu-1} (1-z)^{-mu} dz by Gauss-Jacobi, vectorized

    g_values maps the node vector (n,) to an array (..., n).
    """
    nodes, weights = beta_kernel_rule(params.mu)
    return params.beta_constant * (g_values(nodes) @ weights)
