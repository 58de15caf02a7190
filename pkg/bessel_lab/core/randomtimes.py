"""
Random times and pathwise functionals extracted from simulated paths

All functions act on a PathGrid batch and return one value per path; times
that do not occur within the horizon are NaN.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import special

from bessel_lab.core.pathsim import PathGrid
from bessel_lab.utils.validators import validate_grid_time, validate_positive

logger = logging.getLogger(__name__)


@dataclass
class RandomTimesRecord:
    """Random times and functionals for a batch of paths"""
    horizon: float
    g: np.ndarray
    meander: np.ndarray
    r_terminal: np.ndarray
    l_terminal: np.ndarray
    compensator: np.ndarray
    rho: np.ndarray
    hitting: Dict[float, np.ndarray] = field(default_factory=dict)
    local_time_at_hitting: Dict[float, np.ndarray] = field(default_factory=dict)
    inverse_local_time: Dict[float, np.ndarray] = field(default_factory=dict)


def running_last_zero(path: PathGrid) -> np.ndarray:
    """
    g(t) = sup{s <= t : R_s = 0} at every grid time

    A grid point counts as a zero when R is within the zero band. A zero
    step contributes its sampled last zero when the path carries one, its
    left end otherwise.
    """
    times = path.times
    n = path.n_steps
    markers = np.where(path.zero_points(), times[None, :], -np.inf)
    inside = times[None, :n] if path.zero_last is None else np.where(
        np.isfinite(path.zero_last), path.zero_last, times[None, :n]
    )
    interval_marks = np.where(path.zero_intervals(), inside, -np.inf)
    markers[:, 1:] = np.maximum(markers[:, 1:], interval_marks)
    return np.maximum.accumulate(markers, axis=1)


def last_zero_before(path: PathGrid, T: Optional[float] = None) -> np.ndarray:
    """
    Last zero g_mu(T) before T

    Args:
        path: Path batch
        T: Time within the horizon (defaults to the horizon)

    Returns:
        (P,) array with values in [0, T]
    """
    T = path.horizon if T is None else T
    k = validate_grid_time(T, path.times)
    return running_last_zero(path)[:, k]


def meander_terminal(path: PathGrid, T: Optional[float] = None) -> np.ndarray:
    """R_T / sqrt(T - g_mu(T)); zero when the path sits at zero at T."""
    T = path.horizon if T is None else T
    k = validate_grid_time(T, path.times)
    gap = path.times[k] - last_zero_before(path, T)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = path.r[:, k] / np.sqrt(gap)
    return np.where(gap > 0, m, 0.0)


def first_hitting(path: PathGrid, a: float) -> np.ndarray:
    """
    First hitting time T_a of level a > 0, linearly interpolated inside the
    crossing interval; NaN where the level is not reached.
    """
    validate_positive(a, "a")
    above = path.r >= a
    reached = above.any(axis=1)
    k1 = np.argmax(above, axis=1)
    k0 = np.maximum(k1 - 1, 0)
    rows = np.arange(path.n_paths)
    r0 = path.r[rows, k0]
    r1 = path.r[rows, k1]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.clip((a - r0) / (r1 - r0), 0.0, 1.0)
    t = path.times[k0] + frac * path.dt
    return np.where(reached, t, np.nan)


def value_at(path: PathGrid, values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Per-path linear interpolation of a (P, n+1) array at times t (NaN passes through)."""
    t = np.asarray(t, dtype=float)
    out = np.full(path.n_paths, np.nan)
    ok = np.isfinite(t)
    if not ok.any():
        return out
    pos = np.clip(t[ok] / path.dt, 0.0, path.n_steps)
    k0 = np.minimum(np.floor(pos).astype(np.int64), path.n_steps - 1)
    frac = pos - k0
    rows = np.nonzero(ok)[0]
    out[ok] = (1.0 - frac) * values[rows, k0] + frac * values[rows, k0 + 1]
    return out


def inverse_local_time(path: PathGrid, u: float) -> np.ndarray:
    """tau_u = inf{t : L_t > u}; NaN where L stays below u."""
    above = path.l > u
    reached = above.any(axis=1)
    k = np.argmax(above, axis=1)
    return np.where(reached, path.times[k], np.nan)


def pseudo_stopping_index(path: PathGrid, T: Optional[float] = None) -> np.ndarray:
    """Grid index of rho (see pseudo_stopping_time)."""
    T = path.horizon if T is None else T
    k_t = validate_grid_time(T, path.times)
    g = last_zero_before(path, T)
    times = path.times[: k_t + 1]
    before = times[None, :] < g[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = path.r[:, : k_t + 1] / np.sqrt(T - times)[None, :]
    ratio = np.where(before, ratio, -np.inf)
    # Last time attaining the maximum: argmax of the reversed rows
    last = k_t - np.argmax(ratio[:, ::-1], axis=1)
    return np.where(before.any(axis=1), last, 0)


def pseudo_stopping_time(path: PathGrid, T: Optional[float] = None) -> np.ndarray:
    """
    rho = sup{t < g_mu(T) : R_t / sqrt(T - t) = sup_{s < g_mu(T)} R_s / sqrt(T - s)}

    Returns:
        (P,) array; 0 when g_mu(T) = 0
    """
    return path.times[pseudo_stopping_index(path, T)]


def extract_excursions(path: PathGrid) -> List[np.ndarray]:
    """
    Lengths of complete excursions away from zero, one array per path

    An excursion spans the grid between two consecutive zero-touching
    intervals; the final excursion running into the horizon is dropped.
    With sampled zero times it runs from the last zero of one zero step to
    the first zero of the next.
    """
    zero = path.zero_intervals()
    exact = path.zero_first is not None and path.zero_last is not None
    out = []
    for p, row in enumerate(zero):
        idx = np.nonzero(row)[0]
        if exact:
            lengths = path.zero_first[p, idx[1:]] - path.zero_last[p, idx[:-1]]
            out.append(lengths[np.isfinite(lengths) & (lengths > 0)])
            continue
        gaps = np.diff(idx)
        out.append(gaps[gaps >= 2] * path.dt)
    return out


def _zero_span_kernel(path: PathGrid, T: float, k: int) -> np.ndarray:
    """
    Mean of (T - u)^{-mu} over each zero step's [first, last] span

    Local time inside a span spreads like Beta(mu, mu), so the mean is
    (T - first)^{-mu} 2F1(mu, mu; 2 mu; (last - first) / (T - first)).
    """
    mu = path.params.mu
    first = path.zero_first[:, :k]
    last = path.zero_last[:, :k]
    with np.errstate(divide="ignore", invalid="ignore"):
        reach = T - first
        ratio = np.clip((last - first) / reach, 0.0, 1.0)
        kernel = np.power(reach, -mu) * special.hyp2f1(mu, mu, 2.0 * mu, ratio)
    return np.where(np.isfinite(kernel), kernel, 0.0)


def compensator_terminal(path: PathGrid, T: Optional[float] = None) -> np.ndarray:
    """
    A_T = c_mu int_0^T dL_u (T - u)^{-mu}

    With sampled zero times each step's L increment sits on its
    [first, last] zero span; otherwise it is taken uniform over the step.
    The kernel is integrated in closed form either way, so the singularity
    at u = T stays exact.
    """
    T = path.horizon if T is None else T
    k = validate_grid_time(T, path.times)
    mu = path.params.mu
    times = path.times[: k + 1]
    d_l = np.diff(path.l[:, : k + 1], axis=1)
    if path.zero_first is not None and path.zero_last is not None:
        return path.params.c_mu * np.sum(d_l * _zero_span_kernel(path, T, k), axis=1)
    left = np.power(np.maximum(T - times[:-1], 0.0), 1.0 - mu)
    right = np.power(np.maximum(T - times[1:], 0.0), 1.0 - mu)
    weights = (left - right) / ((1.0 - mu) * np.diff(times))
    return path.params.c_mu * d_l @ weights


def extract_random_times(
    path: PathGrid,
    T: Optional[float] = None,
    levels: Sequence[float] = (),
    local_levels: Sequence[float] = (),
) -> RandomTimesRecord:
    """Collects the standard random times of a batch in one record."""
    T = path.horizon if T is None else T
    k = validate_grid_time(T, path.times)
    record = RandomTimesRecord(
        horizon=T,
        g=last_zero_before(path, T),
        meander=meander_terminal(path, T),
        r_terminal=path.r[:, k].copy(),
        l_terminal=path.l[:, k].copy(),
        compensator=compensator_terminal(path, T),
        rho=pseudo_stopping_time(path, T),
    )
    for a in levels:
        hit = first_hitting(path, a)
        record.hitting[a] = hit
        record.local_time_at_hitting[a] = value_at(path, path.l, hit)
    for u in local_levels:
        record.inverse_local_time[u] = inverse_local_time(path, u)

    missing = sum(int(np.isnan(v).sum()) for v in record.hitting.values())
    if missing:
        logger.warning(f"⚠️ {missing} hitting times not reached within horizon {path.horizon}")
    return record
