"""
Statistics for the acceptance checks: KS distances, moment comparisons and
report construction
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats as sps

from bessel_lab.config.constants import ACCEPTANCE_THRESHOLDS, CSV_COLUMNS
from bessel_lab.models.schemas import StatReport, TestKind
from bessel_lab.utils.validators import validate_sample

logger = logging.getLogger(__name__)


def _finite(sample) -> np.ndarray:
    sample = np.asarray(sample, dtype=float).ravel()
    dropped = int(np.count_nonzero(~np.isfinite(sample)))
    if dropped:
        logger.warning(f"⚠️ Dropping {dropped} non-finite values from sample")
    return sample[np.isfinite(sample)]


def ks_statistic(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """
    One-sample Kolmogorov-Smirnov distance sup |F_n - F|

    Args:
        sample: Observations
        cdf: Vectorized reference CDF

    Returns:
        Distance in [0, 1]

    Raises:
        DomainError: If the sample is empty
    """
    sample = _finite(sample)
    validate_sample(sample)
    distance = float(sps.kstest(sample, cdf).statistic)
    if distance >= ACCEPTANCE_THRESHOLDS["ks_degenerate"]:
        logger.warning(f"⚠️ KS distance {distance:.3f}: sample looks degenerate against the reference law")
    return distance


def ks_two_sample(a, b) -> float:
    """Two-sample KS distance between empirical CDFs."""
    a = _finite(a)
    b = _finite(b)
    validate_sample(a)
    validate_sample(b)
    return float(sps.ks_2samp(a, b).statistic)


@dataclass
class MomentAccumulator:
    """Mergeable count / sum / sum-of-squares"""
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, samples) -> "MomentAccumulator":
        samples = _finite(samples)
        self.count += samples.size
        self.total += float(samples.sum())
        self.total_sq += float(np.square(samples).sum())
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        return MomentAccumulator(
            self.count + other.count,
            self.total + other.total,
            self.total_sq + other.total_sq,
        )

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def std_error(self) -> float:
        if self.count < 2:
            return math.nan
        var = (self.total_sq - self.count * self.mean ** 2) / (self.count - 1)
        return math.sqrt(max(var, 0.0) / self.count)


def moment_report(
    samples,
    target: float,
    experiment_id: str,
    mu: float,
    seed: int = 0,
    label: str = "",
    se_multiplier: Optional[float] = None,
) -> StatReport:
    """
    Compares a sample mean with its target: pass iff |mean - target| <= k SE
    """
    samples = _finite(samples)
    validate_sample(samples)
    k = se_multiplier or ACCEPTANCE_THRESHOLDS["moment_se_multiplier"]
    acc = MomentAccumulator().add(samples)
    se = acc.std_error if samples.size > 1 else 0.0
    return StatReport(
        experiment_id=experiment_id,
        mu=mu,
        n_paths=samples.size,
        estimate=acc.mean,
        std_error=se,
        target=target,
        kind=TestKind.MOMENT,
        label=label,
        seed=seed,
        passed=bool(abs(acc.mean - target) <= k * se),
    )


def relative_moment_report(
    samples,
    target: float,
    relative_tolerance: float,
    experiment_id: str,
    mu: float,
    seed: int = 0,
    label: str = "",
) -> StatReport:
    """Mean within a relative band of the target, or within 3 SE."""
    report = moment_report(samples, target, experiment_id, mu, seed, label)
    close = abs(report.estimate - target) <= relative_tolerance * abs(target)
    return report.model_copy(update={"passed": report.passed or close, "tolerance": relative_tolerance})


def refinement_report(
    exact,
    coarse,
    fine,
    experiment_id: str,
    mu: float,
    seed: int = 0,
    label: str = "",
) -> StatReport:
    """
    Two-level convergence check of an estimator against exact per-path values

    The estimate is the fine-level bias and the tolerance the coarse-level
    bias; passes iff refining does not move the mean away from the exact value.
    """
    exact = np.asarray(exact, dtype=float)
    fine_gap = _finite(np.asarray(fine, dtype=float) - exact)
    coarse_gap = _finite(np.asarray(coarse, dtype=float) - exact)
    validate_sample(fine_gap)
    validate_sample(coarse_gap)
    acc = MomentAccumulator().add(fine_gap)
    coarse_bias = abs(float(np.mean(coarse_gap)))
    return StatReport(
        experiment_id=experiment_id,
        mu=mu,
        n_paths=fine_gap.size,
        estimate=acc.mean,
        std_error=acc.std_error if fine_gap.size > 1 else 0.0,
        target=0.0,
        tolerance=coarse_bias,
        kind=TestKind.MOMENT,
        label=label,
        seed=seed,
        passed=bool(abs(acc.mean) <= coarse_bias),
    )


def ks_report(
    sample,
    cdf: Callable[[np.ndarray], np.ndarray],
    threshold: float,
    experiment_id: str,
    mu: float,
    seed: int = 0,
    label: str = "",
    target: float = math.nan,
) -> StatReport:
    """Distribution test: pass iff the KS distance is at most the threshold."""
    sample = _finite(sample)
    distance = ks_statistic(sample, cdf)
    return StatReport(
        experiment_id=experiment_id,
        mu=mu,
        n_paths=sample.size,
        estimate=float(np.mean(sample)),
        std_error=float(np.std(sample, ddof=1) / math.sqrt(sample.size)) if sample.size > 1 else 0.0,
        target=target,
        ks_distance=distance,
        ks_threshold=threshold,
        kind=TestKind.DISTRIBUTION,
        label=label,
        seed=seed,
        passed=bool(distance <= threshold),
    )


def two_sample_report(
    a, b, threshold: float, experiment_id: str, mu: float, seed: int = 0, label: str = ""
) -> StatReport:
    """Two-sample distribution test (estimate and target are the two means)."""
    a = _finite(a)
    b = _finite(b)
    distance = ks_two_sample(a, b)
    return StatReport(
        experiment_id=experiment_id,
        mu=mu,
        n_paths=a.size + b.size,
        estimate=float(np.mean(a)),
        target=float(np.mean(b)),
        ks_distance=distance,
        ks_threshold=threshold,
        kind=TestKind.DISTRIBUTION,
        label=label,
        seed=seed,
        passed=bool(distance <= threshold),
    )


def correlation_report(
    a, b, bound: float, experiment_id: str, mu: float, seed: int = 0, label: str = ""
) -> StatReport:
    """Sample correlation with |corr| <= bound as the pass rule."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    keep = np.isfinite(a) & np.isfinite(b)
    a, b = a[keep], b[keep]
    validate_sample(a)
    corr = float(np.corrcoef(a, b)[0, 1])
    return StatReport(
        experiment_id=experiment_id,
        mu=mu,
        n_paths=a.size,
        estimate=corr,
        std_error=1.0 / math.sqrt(a.size),
        target=0.0,
        tolerance=bound,
        kind=TestKind.MOMENT,
        label=label,
        seed=seed,
        passed=bool(abs(corr) <= bound),
    )


def identity_report(
    estimate: float,
    target: float,
    tolerance: float,
    experiment_id: str,
    mu: float,
    label: str = "",
    kind: TestKind = TestKind.IDENTITY,
) -> StatReport:
    """Deterministic identity: pass iff |estimate - target| <= tolerance."""
    return StatReport(
        experiment_id=experiment_id,
        mu=mu,
        n_paths=0,
        estimate=estimate,
        target=target,
        tolerance=tolerance,
        kind=kind,
        label=label,
        passed=bool(abs(estimate - target) <= tolerance),
    )


def histogram_table(
    sample,
    cdf: Callable[[np.ndarray], np.ndarray],
    bins: int = 50,
    edges: Optional[Sequence[float]] = None,
) -> pd.DataFrame:
    """
    Empirical vs theoretical densities per bin

    The theoretical column is the bin average (F(right) - F(left)) / width.
    """
    sample = _finite(sample)
    validate_sample(sample)
    if edges is None:
        edges = np.linspace(sample.min(), sample.max(), bins + 1)
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(sample, bins=edges)
    width = np.diff(edges)
    empirical = counts / (sample.size * width)
    theoretical = np.diff(cdf(edges)) / width
    return pd.DataFrame(
        np.column_stack([edges[:-1], edges[1:], empirical, theoretical]),
        columns=CSV_COLUMNS,
    )
