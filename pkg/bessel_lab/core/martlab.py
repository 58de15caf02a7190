"""
Martingale laboratory

Balayage martingales F(L) - f(L) R^{2mu}, Doob's maximal identity, barrier
crossing, optional stopping at the last zero, the meander-orthogonality of
X^f, the decomposition of M-hat and the Azema projection.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Union

import numpy as np

from bessel_lab.config.constants import ACCEPTANCE_THRESHOLDS, ERROR_MESSAGES
from bessel_lab.core import laws
from bessel_lab.core.pathsim import PathGrid, make_stream
from bessel_lab.core.randomtimes import last_zero_before, running_last_zero
from bessel_lab.core.specfun import gamma_fn, transition_density
from bessel_lab.core.stats import ks_report, moment_report
from bessel_lab.models.schemas import BesselParams, StatReport
from bessel_lab.utils.quadrature import quad_checked
from bessel_lab.utils.validators import (
    HorizonNotReachedError,
    SpecError,
    validate_positive,
    validate_time_window,
)

logger = logging.getLogger(__name__)

Paths = Union[PathGrid, Iterable[PathGrid]]


def _as_list(paths: Paths) -> List[PathGrid]:
    return [paths] if isinstance(paths, PathGrid) else list(paths)


def _iter_batches(paths: Paths) -> Iterator[PathGrid]:
    return iter([paths]) if isinstance(paths, PathGrid) else iter(paths)


@dataclass
class BalayageSpec:
    """
    A pair (F, f) with F(x) = F(0) + int_0^x f(z) dz; both callables must accept arrays
    """
    F: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    @property
    def initial_value(self) -> float:
        return float(self.F(np.array([0.0]))[0])

    def check_consistency(self, points: Sequence[float] = (0.5, 1.0, 2.0), tol: float = 1e-6) -> bool:
        """
        Verifies F(x) - F(0) = int_0^x f on a few points

        Raises:
            SpecError: If the relation fails
        """
        f0 = self.initial_value
        for x in points:
            integral = quad_checked(lambda z: float(self.f(np.array([z]))[0]), 0.0, x, epsabs=1e-10)
            lhs = float(self.F(np.array([x]))[0]) - f0
            if abs(lhs - integral) > tol * max(1.0, abs(integral)):
                raise SpecError(f"{ERROR_MESSAGES['spec_inconsistent']} at x = {x}: {lhs} vs {integral}")
        return True


def identity_spec() -> BalayageSpec:
    """F(x) = x, f = 1: the martingale L - R^{2mu}."""
    return BalayageSpec(F=lambda x: np.asarray(x, dtype=float), f=lambda x: np.ones_like(x, dtype=float), name="identity")


def exponential_spec(theta: float) -> BalayageSpec:
    """F(x) = exp(-theta x): the martingale e^{-theta L} (1 + theta R^{2mu})."""
    validate_positive(theta, "theta")
    return BalayageSpec(
        F=lambda x: np.exp(-theta * np.asarray(x, dtype=float)),
        f=lambda x: -theta * np.exp(-theta * np.asarray(x, dtype=float)),
        name=f"exponential({theta:g})",
    )


def barrier_spec(
    params: BesselParams,
    phi: Callable[[float], float],
    u: float,
    points: Optional[Sequence[float]] = None,
    table_size: int = 2001,
) -> BalayageSpec:
    """
    Doob-construction spec for the truncated barrier phi_u

    F(x) = 1 - exp(-int_x^u phi^{-2mu}),  f(x) = -exp(-int_x^u phi^{-2mu}) phi(x)^{-2mu} (x < u),
    both zero from u on. The inner integral is tabulated on [0, u].
    """
    validate_positive(u, "u")
    mu = params.mu
    grid = np.linspace(0.0, u, table_size)
    knots = sorted(set(list(points or [])) | {0.0, u})
    # Integral from 0 to each grid point, summed piecewise between discontinuities
    cumulative = np.zeros(table_size)
    for i in range(1, table_size):
        cumulative[i] = cumulative[i - 1] + laws.barrier_integral(params, phi, grid[i - 1], grid[i], knots)
    tail = cumulative[-1] - cumulative
    phi_vec = np.vectorize(lambda x: phi(x) if x < u else math.inf, otypes=[float])

    def remaining(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < u, np.interp(x, grid, tail), 0.0)

    def F(x):
        return -np.expm1(-remaining(x))

    def f(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            weight = np.where(x < u, np.power(phi_vec(x), -2.0 * mu), 0.0)
        return -np.exp(-remaining(x)) * weight

    return BalayageSpec(F=F, f=f, name=f"barrier(u={u:g})")


def balayage_martingale(path: PathGrid, spec: BalayageSpec) -> np.ndarray:
    """M_t = F(L_t) - f(L_t) R_t^{2mu} on the grid, shape (P, n+1)."""
    return spec.F(path.l) - spec.f(path.l) * np.power(path.r, 2.0 * path.params.mu)


def _tau_index(path: PathGrid, u: float) -> np.ndarray:
    above = path.l > u
    reached = above.any(axis=1)
    short = np.nonzero(~reached)[0]
    if short.size:
        raise HorizonNotReachedError(
            ERROR_MESSAGES["tau_not_reached"],
            paths=(short + path.batch_index * path.n_paths).tolist(),
        )
    return np.argmax(above, axis=1)


def doob_supremum(path: PathGrid, spec: BalayageSpec, u: float, allow_censored: bool = False) -> np.ndarray:
    """
    sup of the balayage martingale over [0, tau_u] per path

    With allow_censored, paths that have not reached tau_u give NaN instead of an error.

    Raises:
        SpecError: If the martingale is negative
        HorizonNotReachedError: If some path has not reached tau_u
    """
    m = balayage_martingale(path, spec)
    if m.min() < -1e-9:
        raise SpecError(f"{ERROR_MESSAGES['negative_martingale']} (min {m.min():.3e})")
    if allow_censored:
        above = path.l > u
        reached = above.any(axis=1)
        k = np.where(reached, np.argmax(above, axis=1), path.n_steps)
        if not reached.all():
            logger.warning(f"⚠️ {int((~reached).sum())} paths censored before tau_{u:g}")
    else:
        k = _tau_index(path, u)
        reached = np.ones(path.n_paths, dtype=bool)
    mask = np.arange(m.shape[1])[None, :] <= k[:, None]
    sup = np.where(mask, m, -np.inf).max(axis=1)
    return np.where(reached, sup, np.nan)


def doob_maximal_report(
    suprema: np.ndarray,
    x: float,
    mu: float,
    experiment_id: str = "doob-maximal",
    seed: int = 0,
    a_multipliers: Sequence[float] = (1.5, 2.0, 4.0),
) -> List[StatReport]:
    """
    P(S > a) against x/a for a grid of levels, plus x/S ~ Uniform(0, 1)

    Censored paths (NaN suprema) are left out; every report carries their count.
    """
    suprema = np.asarray(suprema, dtype=float)
    finite = np.isfinite(suprema)
    dropped = int(np.count_nonzero(~finite))
    if dropped:
        logger.warning(f"⚠️ Doob identity evaluated without {dropped} censored paths")
    suprema = suprema[finite]
    reports = []
    for k in a_multipliers:
        a = k * x
        reports.append(moment_report(
            (suprema > a).astype(float), min(1.0, x / a), experiment_id, mu, seed,
            label=f"P(sup M > {k:g} x)",
        ))
    reports.append(ks_report(
        x / suprema, lambda v: np.clip(v, 0.0, 1.0), ACCEPTANCE_THRESHOLDS["ks_default"],
        experiment_id, mu, seed, label="x / sup M ~ Uniform(0, 1)", target=0.5,
    ))
    return [r.model_copy(update={"dropped": dropped}) for r in reports]


def doob_maximal_check(
    paths: Paths,
    spec: BalayageSpec,
    u: float,
    allow_censored: bool = False,
    **kwargs,
) -> List[StatReport]:
    """
    Doob's maximal identity for a positive balayage martingale vanishing after tau_u

    Batches are consumed one at a time, so paths may be a lazy stream.

    Returns:
        One report per level a plus the uniformity KS report
    """
    suprema = []
    mu = None
    for p in _iter_batches(paths):
        mu = p.params.mu
        suprema.append(doob_supremum(p, spec, u, allow_censored))
    return doob_maximal_report(np.concatenate(suprema), spec.initial_value, mu, **kwargs)


def barrier_crossing_samples(
    path: PathGrid,
    phi: Callable[[float], float],
    u: float,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Whether R exceeds phi(L) before tau_u, per path

    Between grid points the crossing is completed with the Brownian-bridge
    probability exp(-2 (b - r_k)(b - r_{k+1}) / dt) when an rng is given.

    Raises:
        HorizonNotReachedError: For paths neither crossed nor past tau_u
    """
    phi_vec = np.vectorize(phi, otypes=[float])
    above = path.l > u
    reached = above.any(axis=1)
    k_tau = np.where(reached, np.argmax(above, axis=1), path.n_steps)
    cols = np.arange(path.n_steps + 1)[None, :]
    active = cols <= k_tau[:, None]

    barrier = phi_vec(path.l)
    crossed = ((path.r > barrier) & active).any(axis=1)
    if rng is not None:
        b = barrier[:, :-1]
        gap = np.maximum(b - path.r[:, :-1], 0.0) * np.maximum(b - path.r[:, 1:], 0.0)
        prob = np.exp(-2.0 * gap / path.dt)
        jumps = (rng.random(prob.shape) < prob) & active[:, 1:]
        crossed |= jumps.any(axis=1)

    undetermined = np.nonzero(~crossed & ~reached)[0]
    if undetermined.size:
        raise HorizonNotReachedError(
            ERROR_MESSAGES["tau_not_reached"],
            paths=(undetermined + path.batch_index * path.n_paths).tolist(),
        )
    return crossed


def barrier_crossing_check(
    paths: Paths,
    phi: Callable[[float], float],
    u: float,
    points: Optional[Sequence[float]] = None,
    seed: int = 0,
    experiment_id: str = "hitting-barrier",
    label: Optional[str] = None,
) -> StatReport:
    """
    Empirical crossing frequency against 1 - exp(-int_0^u phi^{-2mu})

    Batches are consumed one at a time; each draws its bridge completions
    from the stream keyed by (seed + 1, batch index).
    """
    hits = []
    params = None
    for p in _iter_batches(paths):
        params = p.params
        hits.append(barrier_crossing_samples(p, phi, u, make_stream(seed + 1, p.batch_index)))
    target = laws.hitting_probability(params, phi, u, points)
    return moment_report(
        np.concatenate(hits).astype(float), target, experiment_id, params.mu, seed, label=label or f"u={u:g}",
    )


def stopped_h_value(params: BesselParams, h: Callable[[np.ndarray], np.ndarray], g, T: float = 1.0) -> np.ndarray:
    """
    M^h at the last zero: sin(pi mu)/pi int_0^1 h(g + z (T - g)) z^{mu-1} (1-z)^{-mu} dz

    Vectorized over g by Gauss-Jacobi quadrature; h must accept arrays.
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))
    return laws.beta_kernel_expectation(
        params, lambda z: h(g[:, None] + z[None, :] * (T - g[:, None]))
    )


@dataclass
class StoppingGap:
    gap_estimate: float
    closed_form_gap: float
    std_error: float
    samples: np.ndarray = field(repr=False)


def closed_form_stopping_gap(params: BesselParams, h: Callable[[np.ndarray], np.ndarray], T: float = 1.0) -> float:
    """E[M^h_g - h(g)] with g ~ T Beta(mu, 1 - mu)."""
    def gap(s):
        g = T * s
        return stopped_h_value(params, h, g, T) - h(g)
    return float(laws.beta_kernel_expectation(params, gap))


def optional_stopping_gap(paths: Paths, h: Callable[[np.ndarray], np.ndarray], T: Optional[float] = None) -> StoppingGap:
    """
    Gap between M^h stopped at g_mu(T) and h(g_mu(T)) (non-zero since g is not a stopping time)
    """
    batches = _as_list(paths)
    params = batches[0].params
    T = batches[0].horizon if T is None else T
    g = np.concatenate([last_zero_before(p, T) for p in batches])
    samples = stopped_h_value(params, h, g, T) - h(g)
    return StoppingGap(
        gap_estimate=float(samples.mean()),
        closed_form_gap=closed_form_stopping_gap(params, h, T),
        std_error=float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0,
        samples=samples,
    )


@dataclass
class XfSpec:
    """f with its first two derivatives (all vectorized)"""
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    name: str = "f"


def xf_value(spec: XfSpec, r_terminal: np.ndarray, g: np.ndarray, T: float = 1.0) -> np.ndarray:
    """X^f = f(R_T) - f(0) - R_T f'(R_T) + (T - g) f''(R_T)."""
    r = np.asarray(r_terminal, dtype=float)
    return spec.f(r) - spec.f(np.zeros_like(r)) - r * spec.df(r) + (T - g) * spec.d2f(r)


def xf_orthogonality(
    paths: Paths,
    spec: XfSpec,
    w: Callable[[np.ndarray, np.ndarray], np.ndarray],
    experiment_id: str = "xf-orthogonality",
    seed: int = 0,
) -> StatReport:
    """E[X^f w(g, L_T)] = 0 for bounded w, since X^f only sees the meander."""
    batches = _as_list(paths)
    values = []
    for p in batches:
        g = last_zero_before(p)
        values.append(xf_value(spec, p.r[:, -1], g, p.horizon) * w(g, p.l[:, -1]))
    return moment_report(np.concatenate(values), 0.0, experiment_id, batches[0].params.mu, seed, label=spec.name)


@dataclass
class MhatTerms:
    conditional: float
    meander: float
    excursion: float

    @property
    def value(self) -> float:
        return self.conditional - self.meander - self.excursion


def mhat_decomposition(
    params: BesselParams,
    f: Callable[[float], float],
    r: float,
    t: float,
    g_t: float,
    T: float = 1.0,
    as_printed: bool = False,
) -> MhatTerms:
    """
    The martingale M-hat_t = E[f(R_T) | F_t] - (meander term) - (excursion term)

      conditional = int m(dz) f(z) p(T - t; r, z)
      meander     = (1 - theta_mu(r / sqrt(T - t))) E[f(m sqrt(T - g_t))]
      excursion   = sin(pi mu)/pi int_0^1 w^{mu-1} (1-w)^{-mu} e^{-r^2/(2w(T-t))} E[f(m sqrt((T-t)(1-w)))] dw

    with m Rayleigh. as_printed swaps in the alternative weights theta_mu and w^{-mu}.
    """
    validate_time_window(t, T)
    mu = params.mu
    tau = T - t

    conditional = expected_terminal(params, f, r, tau)

    theta = laws.theta_mu(params, r / math.sqrt(tau))
    weight = theta if as_printed else 1.0 - theta
    meander = weight * laws.meander_expectation(f, math.sqrt(max(T - g_t, 0.0)))

    c = r * r / (2.0 * tau)
    alpha = -mu if as_printed else mu - 1.0

    def inner(w: float) -> float:
        damp = math.exp(-c / w) if w > 0 else float(c == 0.0)
        if damp == 0.0:
            return 0.0
        return damp * laws.meander_expectation(f, math.sqrt(tau * (1.0 - w)))

    excursion = params.beta_constant * quad_checked(inner, 0.0, 1.0, epsabs=1e-10, weight="alg", wvar=(alpha, -mu))
    return MhatTerms(conditional=conditional, meander=meander, excursion=excursion)


def expected_terminal(params: BesselParams, f: Callable[[float], float], r: float, tau: float) -> float:
    """E[f(R_{t+tau}) | R_t = r] = int f(z) p(tau; r, z) m(dz)."""
    mu = params.mu
    upper = r + 40.0 * math.sqrt(tau)
    # m(dz) p = z^{1-2mu} / mu * p; the power is handled by the algebraic weight
    return quad_checked(
        lambda z: f(z) * transition_density(params, tau, r, z) / mu,
        0.0, upper, epsabs=1e-11, weight="alg", wvar=(1.0 - 2.0 * mu, 0.0),
    )


def azema_projection(path: PathGrid, spec: BalayageSpec) -> np.ndarray:
    """
    Lambda_t = 2^mu Gamma(1+mu) f(L_t) (t - g_mu(t))^mu - F(L_t) on the grid, shape (P, n+1)
    """
    mu = path.params.mu
    age = np.maximum(path.times[None, :] - running_last_zero(path), 0.0)
    return 2.0 ** mu * gamma_fn(1.0 + mu) * spec.f(path.l) * np.power(age, mu) - spec.F(path.l)
