"""
Quadrature helpers on top of QUADPACK (scipy.integrate.quad)
"""
import logging
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from bessel_lab.config.constants import ERROR_MESSAGES, QUADRATURE_CONFIG
from bessel_lab.utils.validators import NumericError

logger = logging.getLogger(__name__)


def quad_checked(
    func: Callable[[float], float],
    a: float,
    b: float,
    epsabs: Optional[float] = None,
    epsrel: Optional[float] = None,
    points: Optional[Sequence[float]] = None,
    weight: Optional[str] = None,
    wvar: Optional[Tuple[float, float]] = None,
) -> float:
    """
    Adaptive Gauss-Kronrod quadrature that raises instead of warning

    weight="alg" with wvar=(alpha, beta) integrates func(x) (x-a)^alpha (b-x)^beta
    with the endpoint singularities handled analytically (QAWS).

    Raises:
        NumericError: With the achieved error estimate when QUADPACK reports failure
    """
    epsabs = QUADRATURE_CONFIG["epsabs"] if epsabs is None else epsabs
    epsrel = QUADRATURE_CONFIG["epsrel"] if epsrel is None else epsrel
    kwargs = dict(epsabs=epsabs, epsrel=epsrel, limit=QUADRATURE_CONFIG["limit"], full_output=1)
    if weight is not None:
        kwargs.update(weight=weight, wvar=wvar)
    elif points is not None:
        kwargs.update(points=list(points))

    result = integrate.quad(func, a, b, **kwargs)
    value, abserr = result[0], result[1]
    if len(result) > 3:
        # QUADPACK flagged a problem; accept only if the error estimate is still small
        if not np.isfinite(value) or abserr > max(100 * epsabs, 100 * epsrel * abs(value)):
            logger.warning(f"⚠️ Quadrature on [{a}, {b}] failed: {result[3]}")
            raise NumericError(ERROR_MESSAGES["quadrature_failed"], achieved=abserr)
    return value


@lru_cache(maxsize=64)
def beta_kernel_rule(mu: float, n_nodes: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Jacobi rule for int_0^1 z^{mu-1} (1-z)^{-mu} g(z) dz

    Returns:
        (nodes in (0, 1), weights); the weights sum to Gamma(mu) Gamma(1-mu)
    """
    n_nodes = n_nodes or QUADRATURE_CONFIG["gauss_jacobi_nodes"]
    x, w = special.roots_jacobi(n_nodes, -mu, mu - 1.0)
    # z = (1 + x) / 2: the Jacobi weight maps onto the kernel with factor 2^{alpha+beta+1} = 1
    return 0.5 * (1.0 + x), w
