"""
Tests for random-time extraction on hand-built paths
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, special, stats

# Add root directory to path
root_dir = Path(__file__).parent.parent
sys.path.append(str(root_dir))

from bessel_lab.core.laws import lt_mean
from bessel_lab.core.pathsim import PathGrid, simulate_direct
from bessel_lab.core.randomtimes import (
    compensator_terminal,
    extract_excursions,
    extract_random_times,
    first_hitting,
    inverse_local_time,
    last_zero_before,
    meander_terminal,
    pseudo_stopping_time,
    running_last_zero,
    value_at,
)
from bessel_lab.models.schemas import BesselParams, Construction, SimConfig
from bessel_lab.utils.validators import DomainError


def make_grid(r, l=None, mu=0.5, horizon=1.0, zero_threshold=0.01):
    """PathGrid from explicit rows; interval minima from the endpoints"""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    l = np.zeros_like(r) if l is None else np.atleast_2d(np.asarray(l, dtype=float))
    return PathGrid(
        params=BesselParams(mu=mu),
        times=np.linspace(0.0, horizon, r.shape[1]),
        r=r,
        l=l,
        interval_min=np.minimum(r[:, :-1], r[:, 1:]),
        zero_threshold=zero_threshold,
        construction=Construction.DIRECT,
    )


# Fixtures
@pytest.fixture
def two_zeros():
    """Zeros at t = 0 and t = 0.5 on a grid of step 0.25"""
    return make_grid([[0.0, 1.0, 0.0, 1.0, 2.0]])


@pytest.fixture(scope="module")
def paths():
    """4000 direct paths at mu = 1/4 on 200 steps"""
    cfg = SimConfig(n_steps=200, horizon=1.0, seed=31, n_paths=4_000, batch_size=4_000)
    return simulate_direct(BesselParams(mu=0.25), cfg)


class TestLastZero:
    """Tests for g_mu(t)"""

    def test_running_last_zero(self, two_zeros):
        """Zero intervals contribute their left end"""
        np.testing.assert_allclose(running_last_zero(two_zeros)[0], [0.0, 0.0, 0.5, 0.5, 0.5])

    def test_last_zero_before(self, two_zeros):
        """g at the horizon and at an intermediate time"""
        assert last_zero_before(two_zeros)[0] == 0.5
        assert last_zero_before(two_zeros, 0.25)[0] == 0.0

    def test_bridge_detected_zero(self):
        """An interval flagged as touching zero moves g to its left end"""
        grid = make_grid([[0.0, 1.0, 1.0, 1.0, 1.0]])
        grid.interval_min[0, 2] = 0.0
        assert last_zero_before(grid)[0] == 0.5

    def test_sampled_last_zero(self):
        """A step carrying a sampled last zero contributes that time"""
        grid = make_grid([[0.0, 1.0, 1.0, 1.0, 1.0]], zero_threshold=0.0)
        grid.interval_min[0, 2] = 0.0
        grid.zero_first = np.full((1, 4), np.nan)
        grid.zero_last = np.full((1, 4), np.nan)
        grid.zero_first[0, 2] = 0.55
        grid.zero_last[0, 2] = 0.6
        np.testing.assert_allclose(running_last_zero(grid)[0], [0.0, 0.0, 0.0, 0.6, 0.6])
        assert meander_terminal(grid)[0] == pytest.approx(1.0 / math.sqrt(0.4))

    def test_outside_horizon(self, two_zeros):
        """Times beyond the simulated horizon are rejected"""
        with pytest.raises(DomainError):
            last_zero_before(two_zeros, 2.0)


class TestMeanderAndHitting:
    """Tests for pathwise functionals"""

    def test_meander_terminal(self, two_zeros):
        """R_T / sqrt(T - g) with g = 1/2"""
        assert meander_terminal(two_zeros)[0] == pytest.approx(2.0 / math.sqrt(0.5))

    def test_meander_at_zero(self):
        """A path at zero at T gives a zero meander"""
        grid = make_grid([[0.0, 1.0, 0.0]])
        assert meander_terminal(grid)[0] == 0.0

    def test_first_hitting_interpolates(self):
        """Crossing inside an interval is linearly interpolated"""
        grid = make_grid([[0.0, 0.5, 1.5, 1.0, 0.2], [0.0, 0.1, 0.2, 0.1, 0.0]])
        hit = first_hitting(grid, 1.0)
        assert hit[0] == pytest.approx(0.375)
        assert math.isnan(hit[1])

    def test_value_at(self):
        """Linear interpolation of a per-path array, NaN passes through"""
        grid = make_grid([[0.0, 1.0, 2.0, 3.0, 4.0]] * 2)
        out = value_at(grid, grid.r, np.array([0.375, np.nan]))
        assert out[0] == pytest.approx(1.5)
        assert math.isnan(out[1])

    def test_inverse_local_time(self):
        """tau_u is the first grid time with L above u"""
        grid = make_grid([[0.0] * 5], l=[[0.0, 0.1, 0.2, 0.3, 0.4]])
        assert inverse_local_time(grid, 0.15)[0] == 0.5
        assert math.isnan(inverse_local_time(grid, 1.0)[0])


class TestCompensator:
    """Tests for A_T = c_mu int dL (T - u)^{-mu}"""

    @pytest.mark.parametrize("mu", [0.25, 0.5, 0.75])
    def test_linear_local_time(self, mu):
        """For L_t = t the kernel integrates exactly to c_mu T^{1-mu} / (1 - mu)"""
        times = np.linspace(0.0, 1.0, 101)
        grid = make_grid([np.zeros(101)], l=[times], mu=mu)
        expected = grid.params.c_mu / (1.0 - mu)
        assert compensator_terminal(grid)[0] == pytest.approx(expected, rel=1e-12)

    def test_zero_span_kernel(self):
        """Local time on a [first, last] span is weighted by the Beta(mu, mu) mean of the kernel"""
        mu = 0.5
        grid = make_grid([[0.0, 1.0, 1.0]], l=[[0.0, 0.3, 0.3]], mu=mu, zero_threshold=0.0)
        grid.interval_min[0, 0] = 0.0
        grid.zero_first = np.array([[0.1, np.nan]])
        grid.zero_last = np.array([[0.4, np.nan]])
        # Arcsine spread on [0.1, 0.4], kernel (1 - u)^{-1/2}
        spread = integrate.quad(
            lambda s: (0.9 - 0.3 * s) ** -0.5, 0.0, 1.0, weight="alg", wvar=(mu - 1.0, mu - 1.0),
        )[0] / special.beta(mu, mu)
        expected = grid.params.c_mu * 0.3 * spread
        assert compensator_terminal(grid)[0] == pytest.approx(expected, rel=1e-8)

    def test_no_local_time(self, two_zeros):
        """Flat L gives a zero compensator"""
        assert compensator_terminal(two_zeros)[0] == 0.0


class TestPseudoStoppingAndExcursions:
    """Tests for rho and the excursion extraction"""

    def test_rho_without_zero(self):
        """rho is 0 when g_mu(T) = 0"""
        grid = make_grid([[0.0, 1.0, 2.0, 3.0, 4.0]])
        assert pseudo_stopping_time(grid)[0] == 0.0

    def test_rho_before_last_zero(self):
        """rho maximizes R_t / sqrt(T - t) before g"""
        grid = make_grid([[0.0, 1.0, 0.5, 0.0, 0.0]])
        # g = 1.0 (path at zero at T); ratios 0, 1/sqrt(0.75), 0.5/sqrt(0.5), 0
        assert pseudo_stopping_time(grid)[0] == pytest.approx(0.25)

    def test_excursion_lengths(self):
        """Complete excursions between zero intervals, the running one dropped"""
        grid = make_grid([[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]], horizon=0.8)
        lengths = extract_excursions(grid)
        # zero intervals at 0, 1, 3, 4, 5: one complete excursion of two steps
        np.testing.assert_allclose(lengths[0], [0.2])


    def test_excursion_lengths_from_zero_times(self):
        """With sampled zero times an excursion runs from one step's last zero to the next step's first"""
        grid = make_grid([[0.0, 1.0, 1.0, 1.0, 1.0]], zero_threshold=0.0)
        grid.interval_min[0, [0, 2]] = 0.0
        grid.zero_first = np.array([[0.0, np.nan, 0.6, np.nan]])
        grid.zero_last = np.array([[0.1, np.nan, 0.7, np.nan]])
        np.testing.assert_allclose(extract_excursions(grid)[0], [0.5])


class TestRecord:
    """Tests for the combined extraction"""

    def test_extract_random_times(self):
        """Record carries every functional per path"""
        grid = make_grid(
            [[0.0, 0.5, 1.5, 1.0, 0.2], [0.0, 0.1, 0.0, 0.1, 0.3]],
            l=[[0.0, 0.1, 0.2, 0.2, 0.2], [0.0, 0.1, 0.2, 0.3, 0.4]],
        )
        record = extract_random_times(grid, levels=[1.0], local_levels=[0.15])
        assert record.horizon == 1.0
        assert record.g.shape == (2,)
        np.testing.assert_allclose(record.r_terminal, [0.2, 0.3])
        np.testing.assert_allclose(record.l_terminal, [0.2, 0.4])
        assert record.hitting[1.0][0] == pytest.approx(0.375)
        assert math.isnan(record.hitting[1.0][1])
        assert record.local_time_at_hitting[1.0][0] == pytest.approx(0.15)
        np.testing.assert_allclose(record.inverse_local_time[0.15], [0.5, 0.5])


class TestLawsAtReducedScale:
    """Random times of simulated paths against their laws, at test scale with fixed seeds"""

    def test_last_zero_beta(self, paths):
        """g_mu(1) ~ Beta(mu, 1 - mu)"""
        g = last_zero_before(paths)
        assert stats.kstest(g, stats.beta(0.25, 0.75).cdf).statistic < 0.035

    def test_meander_rayleigh(self, paths):
        """R_1 / sqrt(1 - g) is Rayleigh and uncorrelated with g"""
        m = meander_terminal(paths)
        assert stats.kstest(m, stats.rayleigh.cdf).statistic < 0.035
        assert abs(np.corrcoef(m, last_zero_before(paths))[0, 1]) < 0.06

    def test_local_time_mean(self, paths):
        """E[L_1] = 2^mu / Gamma(1 - mu) within four standard errors"""
        l = paths.l[:, -1]
        se = l.std(ddof=1) / math.sqrt(l.size)
        assert abs(l.mean() - lt_mean(paths.params)) <= 4.0 * se

    def test_compensator_exponential(self, paths):
        """A_1 ~ Exp(1)"""
        assert stats.kstest(compensator_terminal(paths), stats.expon.cdf).statistic < 0.04


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
