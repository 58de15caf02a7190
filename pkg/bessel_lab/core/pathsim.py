"""
Path simulation on a uniform time grid

Two constructions:
  - direct: exact transition sampling through the Poisson mixture of Gamma
    laws; each step whose bridge touches zero gets its first and last zero
    and its local time drawn from the exact bridge laws;
  - time change: reflected Brownian motion gamma = S - beta in its own clock u,
    mapped by R = (2 mu gamma)^{1/(2 mu)}, L = 2 mu S, t(u) = int (2 mu gamma)^{1/mu - 2} du.

Paths are produced in batches: every array has a leading path axis.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import special
from scipy.integrate import trapezoid

from bessel_lab.config.constants import ERROR_MESSAGES, SIM_DEFAULTS
from bessel_lab.models.schemas import BesselParams, Construction, SimConfig
from bessel_lab.utils.validators import (
    DomainError,
    HorizonNotReachedError,
    NumericError,
    validate_positive,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass
class PathGrid:
    """A batch of simulated (R, L) paths on a shared uniform grid"""
    params: BesselParams
    times: np.ndarray  # (n + 1,)
    r: np.ndarray  # (P, n + 1)
    l: np.ndarray  # (P, n + 1)
    interval_min: np.ndarray  # (P, n), 0 where the path is known to touch zero inside
    zero_threshold: float
    construction: Construction
    clock: Optional[np.ndarray] = None  # (P, n + 1), u-clock of the time change
    seed: int = 0
    batch_index: int = 0
    meta: dict = field(default_factory=dict)
    # (P, n) first / last zero inside each step, NaN where the step stays positive
    zero_first: Optional[np.ndarray] = None
    zero_last: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.r.shape[0]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def zero_points(self) -> np.ndarray:
        return self.r <= self.zero_threshold

    def zero_intervals(self) -> np.ndarray:
        return self.interval_min <= self.zero_threshold

    def path(self, i: int) -> "PathGrid":
        """One-path view (keeps the leading axis)."""
        sl = slice(i, i + 1)
        return PathGrid(
            params=self.params,
            times=self.times,
            r=self.r[sl],
            l=self.l[sl],
            interval_min=self.interval_min[sl],
            zero_threshold=self.zero_threshold,
            construction=self.construction,
            clock=_rows(self.clock, sl),
            seed=self.seed,
            batch_index=self.batch_index,
            meta=dict(self.meta),
            zero_first=_rows(self.zero_first, sl),
            zero_last=_rows(self.zero_last, sl),
        )


def _rows(values: Optional[np.ndarray], sl: slice) -> Optional[np.ndarray]:
    return None if values is None else values[sl]


def make_stream(seed: int, batch_index: int = 0) -> np.random.Generator:
    """Counter-based random stream keyed by (seed, batch index)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(batch_index,)))
    )


def sample_gamma(rng: np.random.Generator, shape: np.ndarray) -> np.ndarray:
    """
    Gamma(shape, 1) draws; shapes below one are boosted through
    Gamma(shape) = Gamma(shape + 1) * U^{1/shape}
    """
    shape = np.asarray(shape, dtype=float)
    small = shape < 1.0
    draws = rng.standard_gamma(np.where(small, shape + 1.0, shape))
    u = rng.random(shape.shape)
    with np.errstate(divide="ignore"):
        boost = np.where(small, u ** (1.0 / shape), 1.0)
    return draws * boost


def sample_bessel_transition(
    params: BesselParams,
    x: ArrayLike,
    dt: float,
    rng: np.random.Generator,
) -> ArrayLike:
    """
    Exact draw of R_{t+dt} given R_t = x

    N ~ Poisson(x^2 / (2 dt)), S = 2 dt Gamma(delta/2 + N), return sqrt(S).

    Args:
        params: Process parameters
        x: Current value(s), >= 0
        dt: Time step, > 0
        rng: Random stream

    Returns:
        Next value(s), same shape as x
    """
    validate_positive(dt, "dt")
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0):
        raise DomainError("Bessel process values must be non-negative")

    n = rng.poisson(xs * xs / (2.0 * dt))
    s = 2.0 * dt * sample_gamma(rng, 0.5 * params.delta + n)
    out = np.sqrt(s)
    return out if np.ndim(x) else float(out)


def bridge_zero_probability(params: BesselParams, x: np.ndarray, y: np.ndarray, dt: float) -> np.ndarray:
    """
    Probability that the bridge from x to y over dt touches zero

    Ratio of the killed to the reflected transition: 1 - I_mu(z) / I_{-mu}(z), z = xy/dt.
    """
    z = x * y / dt
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = special.ive(params.mu, z) / special.ive(-params.mu, z)
    ratio = np.where(z > 0, ratio, 0.0)
    return np.clip(1.0 - ratio, 0.0, 1.0)


def sample_log_gig(mu: float, a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    log T for T with density proportional to t^{mu-1} exp(-a/t - b t), a, b > 0

    log T is log-concave; draws use the universal log-concave rejection
    sampler (envelope min(1, e^{1-x}) around the mode on each side).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    root_ab = np.sqrt(a * b)
    mode = np.log((mu + np.sqrt(mu * mu + 4.0 * a * b)) / (2.0 * b))
    h_mode = mu * mode - a * np.exp(-mode) - b * np.exp(mode)
    log_norm = (
        math.log(2.0) + 0.5 * mu * (np.log(a) - np.log(b))
        + np.log(special.kve(mu, 2.0 * root_ab)) - 2.0 * root_ab
    )
    width = np.exp(log_norm - h_mode)  # 1 / density at the mode

    out = np.empty(a.shape)
    pending = np.arange(a.size)
    rounds = 0
    while pending.size:
        rounds += 1
        if rounds > SIM_DEFAULTS["rejection_max_rounds"]:
            raise NumericError("Log-concave rejection sampler did not terminate")
        m = pending.size
        u = rng.uniform(0.0, 2.0, m)
        v = rng.random(m)
        sign = np.where(rng.random(m) < 0.5, -1.0, 1.0)
        tail = u > 1.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            x = np.where(tail, 1.0 - np.log(u - 1.0), u)
            height = np.where(tail, v * (u - 1.0), v)
            y = mode[pending] + sign * x * width[pending]
            h = mu * y - a[pending] * np.exp(-y) - b[pending] * np.exp(y)
            accept = np.log(height) <= h - h_mode[pending]
        out[pending[accept]] = y[accept]
        pending = pending[~accept]
    return out


def sample_bridge_last_zero(
    params: BesselParams,
    x: np.ndarray,
    y: np.ndarray,
    dt: ArrayLike,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Offset in [0, dt] of the last zero of the bridge from x to y over dt,
    conditioned to touch zero

    The offset is dt T / (1 + T) with T generalized inverse Gaussian,
    density proportional to t^{mu-1} exp(-x^2/(2 dt t) - y^2 t/(2 dt)).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = x * x / (2.0 * dt)
    b = y * y / (2.0 * dt)
    t = np.full(x.shape, np.inf)  # b = 0: the bridge ends at zero
    from_zero = (a == 0.0) & (b > 0.0)
    general = (a > 0.0) & (b > 0.0)
    if from_zero.any():
        t[from_zero] = sample_gamma(rng, np.full(int(from_zero.sum()), params.mu)) / b[from_zero]
    if general.any():
        t[general] = np.exp(sample_log_gig(params.mu, a[general], b[general], rng))
    return np.where(np.isinf(t), dt, dt * t / (1.0 + t))


def sample_bridge_first_zero(
    params: BesselParams,
    x: np.ndarray,
    y: np.ndarray,
    dt: ArrayLike,
    rng: np.random.Generator,
) -> np.ndarray:
    """Offset of the first zero: the reversed bridge's last zero, read backwards."""
    return dt - sample_bridge_last_zero(params, y, x, dt, rng)


def kanter_function(mu: float, u: np.ndarray) -> np.ndarray:
    """Kanter's A(u) = [sin(mu u)^mu sin((1-mu) u)^(1-mu) / sin u]^{1/(1-mu)} on (0, pi)."""
    return (
        np.power(np.sin(mu * u), mu / (1.0 - mu))
        * np.sin((1.0 - mu) * u)
        / np.power(np.sin(u), 1.0 / (1.0 - mu))
    )


def sample_bridge_local_time(params: BesselParams, length: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Local time at zero of the bridge from 0 to 0 over each length

    L = length^mu C (E / A(U))^{1-mu}, C = 2^mu Gamma(1 + mu) / Gamma(1 - mu),
    with E ~ Gamma(2 - mu) and U on (0, pi) with density proportional to
    A(u)^{-(1-mu)}: the inverse local time is a stable subordinator
    size-biased by S^{-mu}.
    """
    mu = params.mu
    length = np.asarray(length, dtype=float)
    a_zero = (mu ** mu * (1.0 - mu) ** (1.0 - mu)) ** (1.0 / (1.0 - mu))

    u = np.empty(length.shape)
    pending = np.arange(length.size)
    rounds = 0
    while pending.size:
        rounds += 1
        if rounds > SIM_DEFAULTS["rejection_max_rounds"]:
            raise NumericError("Kanter angle sampler did not terminate")
        draw = rng.uniform(0.0, math.pi, pending.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.power(kanter_function(mu, draw) / a_zero, -(1.0 - mu))
        accept = rng.random(pending.size) < np.nan_to_num(ratio, nan=0.0)
        u[pending[accept]] = draw[accept]
        pending = pending[~accept]

    e = rng.standard_gamma(2.0 - mu, length.shape)
    scale = 2.0 ** mu * math.exp(special.gammaln(1.0 + mu) - special.gammaln(1.0 - mu))
    return np.power(length, mu) * scale * np.power(e / kanter_function(mu, u), 1.0 - mu)


def default_zero_threshold_direct(params: BesselParams, dt: float, epsilon: float) -> float:
    # Three one-step standard deviations from zero, never below the occupation window
    k = SIM_DEFAULTS["zero_sigma_multiplier"]
    return max(k * math.sqrt(params.delta * dt), epsilon)


def default_zero_threshold_time_change(params: BesselParams, du: float) -> float:
    k = SIM_DEFAULTS["zero_sigma_multiplier"]
    return (2.0 * params.mu * k * math.sqrt(du)) ** (1.0 / (2.0 * params.mu))


def simulate_direct(
    params: BesselParams,
    cfg: SimConfig,
    batch_index: int = 0,
    n_paths: Optional[int] = None,
) -> PathGrid:
    """
    Simulates a batch of paths by exact transition sampling

    With bridge detection on, a step is a zero step iff its bridge touches
    zero; its first and last zeros and its local time come from the exact
    bridge laws, so l is exact in law and the zero threshold defaults to 0.
    Without it, zeros come from the 3-sigma band and l from occupation of
    [0, eps].

    Args:
        params: Process parameters
        cfg: Grid, horizon, seed and estimator settings
        batch_index: Index of the batch within the run (selects the random stream)
        n_paths: Paths in this batch (defaults to min(batch_size, n_paths))

    Returns:
        PathGrid with r, l, clock, interval minima and per-step zero times
    """
    n_paths = n_paths or min(cfg.batch_size, cfg.n_paths)
    rng = make_stream(cfg.seed, batch_index)
    dt = cfg.dt
    n = cfg.n_steps
    times = np.linspace(0.0, cfg.horizon, n + 1)

    r = np.zeros((n_paths, n + 1))
    interval_min = np.empty((n_paths, n))
    d_l = np.zeros((n_paths, n))
    zero_first = np.full((n_paths, n), np.nan)
    zero_last = np.full((n_paths, n), np.nan)
    for k in range(n):
        x = r[:, k]
        y = sample_bessel_transition(params, x, dt, rng)
        r[:, k + 1] = y
        imin = np.minimum(x, y)
        if cfg.bridge_zero_detection:
            hit = np.nonzero(rng.random(n_paths) < bridge_zero_probability(params, x, y, dt))[0]
            if hit.size:
                imin[hit] = 0.0
                first = sample_bridge_first_zero(params, x[hit], y[hit], dt, rng)
                # The rest of the step is a bridge from zero to y
                rest = np.maximum(dt - first, 0.0)
                span = np.zeros(hit.size)
                open_rest = rest > 0.0
                span[open_rest] = sample_bridge_last_zero(
                    params, np.zeros(int(open_rest.sum())), y[hit][open_rest], rest[open_rest], rng,
                )
                zero_first[hit, k] = times[k] + first
                zero_last[hit, k] = times[k] + first + span
                d_l[hit, k] = sample_bridge_local_time(params, span, rng)
        interval_min[:, k] = imin

    if cfg.bridge_zero_detection:
        threshold = cfg.zero_threshold or 0.0
    else:
        threshold = cfg.zero_threshold or default_zero_threshold_direct(params, dt, cfg.epsilon)
    path = PathGrid(
        params=params,
        times=times,
        r=r,
        l=np.zeros_like(r),
        interval_min=interval_min,
        zero_threshold=threshold,
        construction=Construction.DIRECT,
        seed=cfg.seed,
        batch_index=batch_index,
        meta={"epsilon": cfg.epsilon, "exact_local_time": cfg.bridge_zero_detection},
    )
    if cfg.bridge_zero_detection:
        path.l[:, 1:] = np.cumsum(d_l, axis=1)
        path.zero_first = zero_first
        path.zero_last = zero_last
    else:
        path.l = estimate_local_time_occupation(path, cfg.epsilon)
    path.clock = direct_clock(path)
    return path


def power_integral(a: np.ndarray, b: np.ndarray, p: float, step: float) -> np.ndarray:
    """int over one step of x^p, x linear from a to b (flat-segment limit when a ~ b)."""
    q = p + 1.0
    diff = b - a
    close = np.abs(diff) <= 1e-12 * (a + b)
    with np.errstate(divide="ignore", invalid="ignore"):
        general = step * (np.power(b, q) - np.power(a, q)) / (q * diff)
        flat = step * np.power(0.5 * (a + b), p)
    return np.where(close, flat, general)


def direct_clock(path: PathGrid) -> np.ndarray:
    """
    u-clock of the direct construction: u(t) = int_0^t R_s^{2(2 mu - 1)} ds

    R^2 is taken linear over each step, so the integrand R^{4 mu - 2} =
    (R^2)^{2 mu - 1} integrates in closed form and the singularity at a
    zero endpoint stays integrable for every mu.
    """
    mu = path.params.mu
    sq = np.square(path.r)
    inc = power_integral(sq[:, :-1], sq[:, 1:], 2.0 * mu - 1.0, path.dt)
    clock = np.zeros_like(path.r)
    clock[:, 1:] = np.cumsum(inc, axis=1)
    return clock


def default_u_budget(params: BesselParams, t_horizon: float) -> float:
    """u-budget large enough for the clock to pass t_horizon on practically every path."""
    factor = (
        SIM_DEFAULTS["u_budget_factor_low_mu"]
        if params.mu < 0.5
        else SIM_DEFAULTS["u_budget_factor_high_mu"]
    )
    return (factor * t_horizon) ** (2.0 * params.mu)


def clock_increment(params: BesselParams, a: np.ndarray, b: np.ndarray, du: float) -> np.ndarray:
    """
    int over one u-step of (2 mu gamma)^{1/mu - 2}, gamma linear from a to b

    When gamma vanishes at both ends the step is replaced by a tent with the
    mean height of a Brownian bridge maximum.
    """
    mu = params.mu
    p = 1.0 / mu - 2.0
    scale = (2.0 * mu) ** p
    peak = math.sqrt(math.pi * du / 8.0)
    tent = scale * du * peak ** p / (p + 1.0)
    both_zero = (a + b) == 0.0
    return np.where(both_zero, tent, scale * power_integral(a, b, p, du))


def simulate_time_change(
    params: BesselParams,
    cfg: SimConfig,
    t_horizon: float = 1.0,
    t_steps: Optional[int] = None,
    batch_index: int = 0,
    n_paths: Optional[int] = None,
) -> PathGrid:
    """
    Builds (R, L) from reflected Brownian motion through the inverse clock

    cfg.horizon is the u-budget and cfg.n_steps the number of u-steps; the
    output is resampled right-continuously onto a uniform t-grid of t_steps
    steps over [0, t_horizon].

    Raises:
        HorizonNotReachedError: If some path's clock stays below t_horizon
    """
    n_paths = n_paths or min(cfg.batch_size, cfg.n_paths)
    t_steps = t_steps or max(2, cfg.n_steps // SIM_DEFAULTS["time_change_oversampling"])
    rng = make_stream(cfg.seed, batch_index)
    mu = params.mu
    du = cfg.horizon / cfg.n_steps
    sqrt_du = math.sqrt(du)
    gamma_threshold = SIM_DEFAULTS["zero_sigma_multiplier"] * sqrt_du
    dt_out = t_horizon / t_steps
    targets = np.arange(t_steps + 1) * dt_out
    tol = 1e-9 * dt_out

    gamma_out = np.zeros((n_paths, t_steps + 1))
    s_out = np.zeros((n_paths, t_steps + 1))
    clock_out = np.zeros((n_paths, t_steps + 1))
    zc_out = np.zeros((n_paths, t_steps + 1), dtype=np.int64)

    beta_last = np.zeros(n_paths)
    s_last = np.zeros(n_paths)
    gamma_last = np.zeros(n_paths)
    t_last = np.zeros(n_paths)
    zc_last = np.ones(n_paths, dtype=np.int64)  # u = 0 is a zero
    next_j = np.zeros(n_paths, dtype=np.int64)

    u_done = 0
    chunk = SIM_DEFAULTS["u_chunk"]
    while u_done < cfg.n_steps and np.any(next_j <= t_steps):
        m = min(chunk, cfg.n_steps - u_done)
        beta = beta_last[:, None] + np.cumsum(rng.standard_normal((n_paths, m)) * sqrt_du, axis=1)
        s = np.maximum(s_last[:, None], np.maximum.accumulate(beta, axis=1))
        gamma = s - beta
        prev = np.concatenate([gamma_last[:, None], gamma[:, :-1]], axis=1)
        tt = t_last[:, None] + np.cumsum(clock_increment(params, prev, gamma, du), axis=1)
        zc = zc_last[:, None] + np.cumsum(gamma <= gamma_threshold, axis=1)

        # Prepend the carried state so every target has a left neighbour
        ext_t = np.concatenate([t_last[:, None], tt], axis=1)
        ext_gamma = np.concatenate([gamma_last[:, None], gamma], axis=1)
        ext_s = np.concatenate([s_last[:, None], s], axis=1)
        ext_zc = np.concatenate([zc_last[:, None], zc], axis=1)
        ext_u = (u_done + np.arange(m + 1)) * du

        for p in range(n_paths):
            j0 = next_j[p]
            if j0 > t_steps:
                continue
            j1 = min(t_steps + 1, int(np.searchsorted(targets, tt[p, -1] + tol, side="right")))
            if j1 <= j0:
                continue
            idx = np.searchsorted(ext_t[p], targets[j0:j1] + tol, side="right") - 1
            gamma_out[p, j0:j1] = ext_gamma[p, idx]
            s_out[p, j0:j1] = ext_s[p, idx]
            clock_out[p, j0:j1] = ext_u[idx]
            zc_out[p, j0:j1] = ext_zc[p, idx]
            next_j[p] = j1

        beta_last = beta[:, -1]
        s_last = s[:, -1]
        gamma_last = gamma[:, -1]
        t_last = tt[:, -1]
        zc_last = zc[:, -1]
        u_done += m

    short = np.nonzero(next_j <= t_steps)[0]
    if short.size:
        logger.error(f"❌ Time-change clock short of t = {t_horizon} on {short.size} paths")
        raise HorizonNotReachedError(
            f"{ERROR_MESSAGES['horizon_not_reached']} (u-budget {cfg.horizon})",
            paths=(short + batch_index * cfg.batch_size).tolist(),
        )

    r = np.power(2.0 * mu * gamma_out, 1.0 / (2.0 * mu))
    touched = zc_out[:, 1:] > zc_out[:, :-1]
    interval_min = np.where(touched, 0.0, np.minimum(r[:, :-1], r[:, 1:]))

    return PathGrid(
        params=params,
        times=targets,
        r=r,
        l=2.0 * mu * s_out,
        interval_min=interval_min,
        zero_threshold=cfg.zero_threshold or default_zero_threshold_time_change(params, du),
        construction=Construction.TIME_CHANGE,
        clock=clock_out,
        seed=cfg.seed,
        batch_index=batch_index,
        meta={"u_budget": cfg.horizon, "u_steps": cfg.n_steps},
    )


def estimate_local_time_occupation(path: PathGrid, epsilon: float) -> np.ndarray:
    """
    Local time at zero from the occupation of [0, eps]

    L_t ~ mu (2 - 2 mu) eps^{2 mu - 2} int_0^t 1{R_u <= eps} du  (left-point rule)

    Returns:
        (P, n + 1) non-decreasing array starting at 0
    """
    validate_positive(epsilon, "epsilon")
    mu = path.params.mu
    c = mu * (2.0 - 2.0 * mu) * epsilon ** (2.0 * mu - 2.0)
    occupied = (path.r[:, :-1] <= epsilon) * np.diff(path.times)
    l = np.zeros_like(path.r)
    l[:, 1:] = c * np.cumsum(occupied, axis=1)
    return l


def estimate_level_local_time(path: PathGrid, a: float, epsilon: float) -> np.ndarray:
    """
    Local time at level a > eps, from the window occupation

    L_t^a ~ mu a^{2 mu - 1} / (2 eps) int_0^t 1{|R_u - a| <= eps} du  (left-point rule)

    Returns:
        (P, n + 1) non-decreasing array starting at 0

    Raises:
        DomainError: If the window reaches zero (a <= eps)
    """
    validate_positive(epsilon, "epsilon")
    if a <= epsilon:
        raise DomainError(f"Level a = {a} must exceed the window epsilon = {epsilon}")
    mu = path.params.mu
    window = (np.abs(path.r[:, :-1] - a) <= epsilon) * np.diff(path.times)
    l = np.zeros_like(path.r)
    l[:, 1:] = mu * a ** (2.0 * mu - 1.0) / (2.0 * epsilon) * np.cumsum(window, axis=1)
    return l


def generalized_occupation(
    path: PathGrid,
    a: float,
    epsilon: float,
    weight: Callable[[np.ndarray], np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Both sides of the time-dependent occupation formula, localized at level a

    int_0^T w(u) 1{|R_u - a| <= eps} du  against  (1/mu) a^{1-2mu} 2 eps int_0^T w(u) dL_u^a,

    the level local time on the right taken from the half-width window.

    Returns:
        (lhs, rhs), one value per path
    """
    validate_positive(epsilon, "epsilon")
    mu = path.params.mu
    w = weight(path.times[:-1])
    lhs = ((np.abs(path.r[:, :-1] - a) <= epsilon) * np.diff(path.times)) @ w
    d_la = np.diff(estimate_level_local_time(path, a, 0.5 * epsilon), axis=1)
    rhs = a ** (1.0 - 2.0 * mu) * 2.0 * epsilon / mu * (d_la @ w)
    return lhs, rhs


def _pairs(values: Optional[np.ndarray]) -> Optional[np.ndarray]:
    return None if values is None else values.reshape(values.shape[0], -1, 2)


def coarsen(path: PathGrid) -> PathGrid:
    """Every other grid point of a path batch with an even number of steps."""
    if path.n_steps % 2:
        raise DomainError(f"Coarsening needs an even number of steps (got {path.n_steps})")
    first, last = _pairs(path.zero_first), _pairs(path.zero_last)
    return PathGrid(
        params=path.params,
        times=path.times[::2],
        r=path.r[:, ::2],
        l=path.l[:, ::2],
        interval_min=_pairs(path.interval_min).min(axis=2),
        zero_threshold=path.zero_threshold,
        construction=path.construction,
        clock=None if path.clock is None else path.clock[:, ::2],
        seed=path.seed,
        batch_index=path.batch_index,
        meta=dict(path.meta),
        zero_first=None if first is None else np.fmin(first[:, :, 0], first[:, :, 1]),
        zero_last=None if last is None else np.fmax(last[:, :, 0], last[:, :, 1]),
    )


def occupation_refinement(path: PathGrid, epsilon: float) -> Dict[str, np.ndarray]:
    """
    Two-level refinement of the occupation estimator of L at the horizon

    The coarse level uses (eps, 2 dt) on every other grid point, the fine
    level (eps / 2, dt) on the full grid; both are compared with the path's
    own l. The bias is of order eps^{2 mu}, which sets the extrapolation
    weight (2^{2 mu} fine - coarse) / (2^{2 mu} - 1).

    Returns:
        Per-path arrays keyed exact, coarse, fine and extrapolated
    """
    validate_positive(epsilon, "epsilon")
    coarse = estimate_local_time_occupation(coarsen(path), epsilon)[:, -1]
    fine = estimate_local_time_occupation(path, 0.5 * epsilon)[:, -1]
    gain = 2.0 ** (2.0 * path.params.mu)
    return {
        "exact": path.l[:, -1].copy(),
        "coarse": coarse,
        "fine": fine,
        "extrapolated": (gain * fine - coarse) / (gain - 1.0),
    }


def rescaled_occupation(path: PathGrid, f: Callable[[np.ndarray], np.ndarray], n: float) -> np.ndarray:
    """
    n^delta int_0^T f(n R_u) du, converging to (1/mu) int_0^inf f(x) x^{1-2mu} dx * L_T
    """
    validate_positive(n, "n")
    values = f(n * path.r)
    return n ** path.params.delta * trapezoid(values, path.times, axis=1)


def dump_paths(path: PathGrid, directory: Union[str, Path]) -> Path:
    """
    Writes one CSV per batch: a comment row with params and seed, then
    columns path, time, r, l, clock
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    target = directory / f"paths_mu{path.params.mu:g}_seed{path.seed}_batch{path.batch_index:05d}.csv"

    n_paths, n_points = path.r.shape
    frame = pd.DataFrame({
        "path": np.repeat(np.arange(n_paths), n_points),
        "time": np.tile(path.times, n_paths),
        "r": path.r.ravel(),
        "l": path.l.ravel(),
        "clock": (path.clock if path.clock is not None else np.full_like(path.r, np.nan)).ravel(),
    })
    with open(target, "w", encoding="utf-8") as fh:
        fh.write(
            f"# mu={path.params.mu} delta={path.params.delta} seed={path.seed} "
            f"batch={path.batch_index} construction={path.construction.value}\n"
        )
        frame.to_csv(fh, index=False, float_format="%.10g")

    logger.info(f"✅ Dumped {n_paths} paths to {target}")
    return target
