"""
Tests for the path simulators
"""
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from scipy import stats

# Add root directory to path
root_dir = Path(__file__).parent.parent
sys.path.append(str(root_dir))

from bessel_lab.core.laws import level_local_time_mean, lt_mean
from bessel_lab.core.pathsim import (
    PathGrid,
    bridge_zero_probability,
    clock_increment,
    coarsen,
    default_u_budget,
    default_zero_threshold_direct,
    direct_clock,
    dump_paths,
    estimate_level_local_time,
    estimate_local_time_occupation,
    generalized_occupation,
    kanter_function,
    make_stream,
    occupation_refinement,
    power_integral,
    rescaled_occupation,
    sample_bessel_transition,
    sample_bridge_first_zero,
    sample_bridge_last_zero,
    sample_bridge_local_time,
    sample_gamma,
    sample_log_gig,
    simulate_direct,
    simulate_time_change,
)
from bessel_lab.core.specfun import transition_density
from bessel_lab.models.schemas import BesselParams, Construction, SimConfig
from bessel_lab.services.simulation_service import SimulationService
from bessel_lab.utils.quadrature import quad_checked
from bessel_lab.utils.validators import DomainError, HorizonNotReachedError


# Fixtures
@pytest.fixture
def half():
    """Reflected Brownian motion case"""
    return BesselParams(mu=0.5)


@pytest.fixture
def small_config():
    """A small direct-simulation configuration"""
    return SimConfig(n_steps=200, horizon=1.0, seed=7, n_paths=16, batch_size=16)


def flat_grid(params, r, horizon=1.0):
    """PathGrid with given r rows and zero local time"""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    times = np.linspace(0.0, horizon, r.shape[1])
    return PathGrid(
        params=params,
        times=times,
        r=r,
        l=np.zeros_like(r),
        interval_min=np.minimum(r[:, :-1], r[:, 1:]),
        zero_threshold=0.01,
        construction=Construction.DIRECT,
    )


class TestRandomStreams:
    """Tests for the per-batch random streams"""

    def test_reproducible(self):
        """Same seed and batch index give the same draws"""
        a = make_stream(11, 3).random(5)
        b = make_stream(11, 3).random(5)
        np.testing.assert_array_equal(a, b)

    def test_batches_differ(self):
        """Different batch indices give different draws"""
        a = make_stream(11, 0).random(5)
        b = make_stream(11, 1).random(5)
        assert not np.allclose(a, b)


class TestSamplers:
    """Tests for the exact transition sampler"""

    def test_gamma_small_shape_mean(self):
        """Boosted Gamma draws keep mean equal to the shape"""
        rng = make_stream(1)
        draws = sample_gamma(rng, np.full(200_000, 0.3))
        assert draws.mean() == pytest.approx(0.3, abs=0.01)
        assert np.all(draws >= 0)

    def test_transition_second_moment(self):
        """E[R_{t+dt}^2 | R_t = x] = x^2 + delta dt"""
        params = BesselParams(mu=0.25)
        rng = make_stream(2)
        y = sample_bessel_transition(params, np.ones(200_000), 0.5, rng)
        assert np.mean(y ** 2) == pytest.approx(1.0 + params.delta * 0.5, abs=0.03)

    def test_scalar_input(self, half):
        """A scalar start gives a scalar draw"""
        value = sample_bessel_transition(half, 0.5, 0.1, make_stream(3))
        assert isinstance(value, float)
        assert value >= 0

    def test_negative_start(self, half):
        """Negative values are rejected"""
        with pytest.raises(DomainError):
            sample_bessel_transition(half, np.array([-0.1]), 0.1, make_stream(3))

    def test_bridge_probability_range(self, half):
        """Bridge touching probability is 1 from zero and decays with xy / dt"""
        x = np.array([0.0, 0.1, 1.0, 3.0])
        p = bridge_zero_probability(half, x, np.full(4, 1.0), 0.01)
        assert p[0] == 1.0
        assert np.all((p >= 0) & (p <= 1))
        assert np.all(np.diff(p) <= 0)
        assert p[-1] < 1e-6

    def test_bridge_probability_reflected_bm(self, half):
        """At mu = 1/2 the touching probability is 1 - tanh(xy / dt)"""
        x, y, dt = np.array([0.3]), np.array([0.2]), 0.1
        assert bridge_zero_probability(half, x, y, dt)[0] == pytest.approx(1.0 - math.tanh(0.3 * 0.2 / dt), rel=1e-10)


class TestBridgeSamplers:
    """Tests for the exact bridge laws behind the direct construction"""

    @pytest.mark.parametrize("a,b", [(0.8, 0.3), (0.01, 4.0), (6.0, 6.0)])
    def test_log_gig_law(self, a, b):
        """exp of the draws is sqrt(a/b) times a geninvgauss(mu, 2 sqrt(ab)) variable"""
        mu = 0.25
        draws = np.exp(sample_log_gig(mu, np.full(10_000, a), np.full(10_000, b), make_stream(4)))
        law = stats.geninvgauss(mu, 2.0 * math.sqrt(a * b), scale=math.sqrt(a / b))
        assert stats.kstest(draws, law.cdf).statistic < 0.025

    def test_last_zero_range(self):
        """Offsets lie in [0, dt]; a bridge ending at zero has its last zero at dt"""
        params = BesselParams(mu=0.25)
        x = np.array([0.0, 0.3, 0.1, 0.5])
        y = np.array([0.2, 0.4, 0.0, 0.0])
        offset = sample_bridge_last_zero(params, x, y, 0.1, make_stream(5))
        assert np.all((offset >= 0.0) & (offset <= 0.1))
        assert offset[2] == 0.1
        assert offset[3] == 0.1

    def test_first_zero_from_zero(self):
        """A bridge starting at zero has its first zero at 0"""
        y = np.array([0.2, 0.5, 1.0])
        offset = sample_bridge_first_zero(BesselParams(mu=0.25), np.zeros(3), y, 0.1, make_stream(6))
        np.testing.assert_allclose(offset, 0.0, atol=1e-15)

    def test_kanter_function(self):
        """A increases on (0, pi) from (mu^mu (1 - mu)^{1-mu})^{1/(1-mu)}"""
        mu = 0.25
        values = kanter_function(mu, np.linspace(1e-6, math.pi - 1e-3, 200))
        assert values[0] == pytest.approx((mu ** mu * (1.0 - mu) ** (1.0 - mu)) ** (1.0 / (1.0 - mu)), rel=1e-6)
        assert np.all(np.diff(values) > 0)

    def test_local_time_rayleigh(self, half):
        """At mu = 1/2 the local time of the bridge over D is Rayleigh with scale sqrt(D)"""
        draws = sample_bridge_local_time(half, np.full(20_000, 0.5), make_stream(7))
        assert stats.kstest(draws / math.sqrt(0.5), stats.rayleigh.cdf).statistic < 0.015

    def test_local_time_empty_span(self):
        """A span of length zero carries no local time"""
        assert sample_bridge_local_time(BesselParams(mu=0.25), np.zeros(3), make_stream(8)).max() == 0.0


class TestDirectConstruction:
    """Tests for the direct simulator"""

    def test_shapes_and_invariants(self, half, small_config):
        """Paths start at zero, stay non-negative and carry non-decreasing local time"""
        path = simulate_direct(half, small_config)
        assert path.r.shape == (16, 201)
        assert path.interval_min.shape == (16, 200)
        assert np.all(path.r[:, 0] == 0.0)
        assert np.all(path.r >= 0)
        assert np.all(path.l[:, 0] == 0.0)
        assert np.all(np.diff(path.l, axis=1) >= 0)
        assert np.all(path.interval_min <= np.minimum(path.r[:, :-1], path.r[:, 1:]))
        assert path.construction == Construction.DIRECT

    def test_deterministic(self, half, small_config):
        """Same configuration reproduces the same paths"""
        a = simulate_direct(half, small_config, batch_index=2)
        b = simulate_direct(half, small_config, batch_index=2)
        np.testing.assert_array_equal(a.r, b.r)
        np.testing.assert_array_equal(a.interval_min, b.interval_min)

    def test_default_zero_threshold(self, half):
        """Threshold is three one-step deviations, floored at epsilon"""
        assert default_zero_threshold_direct(half, 1e-2, 0.02) == pytest.approx(0.3)
        assert default_zero_threshold_direct(half, 1e-8, 0.02) == 0.02

    def test_zero_times_inside_steps(self, small_config):
        """First and last zeros exist exactly on touched steps and lie inside them"""
        path = simulate_direct(BesselParams(mu=0.25), small_config)
        touched = path.interval_min == 0.0
        assert touched.any()
        np.testing.assert_array_equal(np.isfinite(path.zero_first), touched)
        np.testing.assert_array_equal(np.isfinite(path.zero_last), touched)
        left = np.broadcast_to(path.times[:-1], touched.shape)[touched]
        right = np.broadcast_to(path.times[1:], touched.shape)[touched]
        first, last = path.zero_first[touched], path.zero_last[touched]
        assert np.all(left - 1e-12 <= first)
        assert np.all(first <= last)
        assert np.all(last <= right + 1e-12)

    def test_local_time_carried_by_zero_steps(self, small_config):
        """L grows only on steps whose bridge touches zero"""
        path = simulate_direct(BesselParams(mu=0.25), small_config)
        d_l = np.diff(path.l, axis=1)
        assert np.all(d_l >= 0.0)
        assert np.all(d_l[path.interval_min > 0.0] == 0.0)
        assert d_l.sum() > 0.0

    def test_zero_rules(self, half, small_config):
        """Bridge detection gives a zero threshold of 0 and exact zero times; the band rule gives neither"""
        exact = simulate_direct(half, small_config)
        assert exact.zero_threshold == 0.0
        assert exact.meta["exact_local_time"]
        band_cfg = small_config.model_copy(update={"bridge_zero_detection": False})
        band = simulate_direct(half, band_cfg)
        assert band.zero_threshold == pytest.approx(default_zero_threshold_direct(half, band_cfg.dt, band_cfg.epsilon))
        assert band.zero_first is None
        assert not band.meta["exact_local_time"]

    def test_explicit_zero_threshold(self, half, small_config):
        """An explicit level replaces the bridge default"""
        path = simulate_direct(half, small_config.model_copy(update={"zero_threshold": 0.05}))
        assert path.zero_threshold == 0.05

    def test_direct_clock_half(self, half, small_config):
        """At mu = 1/2 the u-clock of the direct construction is t itself"""
        path = simulate_direct(half, small_config)
        np.testing.assert_allclose(path.clock, np.broadcast_to(path.times, path.clock.shape), rtol=1e-10, atol=1e-12)

    def test_direct_clock_increasing(self, small_config):
        """The clock starts at 0, stays finite and never decreases"""
        path = simulate_direct(BesselParams(mu=0.25), small_config)
        assert np.all(path.clock[:, 0] == 0.0)
        assert np.all(np.isfinite(path.clock))
        assert np.all(np.diff(path.clock, axis=1) >= 0.0)

    def test_path_view(self, half, small_config):
        """path(i) keeps the leading axis"""
        grid = simulate_direct(half, small_config)
        single = grid.path(3)
        assert single.n_paths == 1
        np.testing.assert_array_equal(single.r[0], grid.r[3])


class TestTimeChangeConstruction:
    """Tests for the time-change simulator"""

    def test_clock_is_identity_at_half(self, half):
        """For mu = 1/2 the integrand is 1 so the clock increments equal du"""
        a = np.array([0.0, 0.0, 0.3, 1.0])
        b = np.array([0.0, 0.2, 0.3, 0.5])
        np.testing.assert_allclose(clock_increment(half, a, b, 0.01), 0.01, rtol=1e-12)

    def test_clock_flat_segment(self):
        """A flat segment integrates to du (2 mu a)^{1/mu - 2}"""
        params = BesselParams(mu=0.25)
        inc = clock_increment(params, np.array([0.4]), np.array([0.4]), 0.01)
        assert inc[0] == pytest.approx(0.01 * (0.5 * 0.4) ** 2.0, rel=1e-12)

    def test_power_integral(self):
        """Exact integral of x^p for x linear over the step, including the flat limit"""
        value = power_integral(np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 2.0]), 0.5, 0.1)
        expected = [0.1 / 1.5, 0.1 * (3.0 ** 1.5 - 1.0) / (1.5 * 2.0), 0.1 * math.sqrt(2.0)]
        np.testing.assert_allclose(value, expected, rtol=1e-12)

    def test_direct_clock_flat(self):
        """A path held at r has clock r^{4 mu - 2} t"""
        grid = flat_grid(BesselParams(mu=0.75), np.full((1, 11), 2.0))
        np.testing.assert_allclose(direct_clock(grid)[0], 2.0 * grid.times, rtol=1e-12)

    def test_u_budget(self):
        """Budget grows like (k T)^{2 mu}"""
        assert default_u_budget(BesselParams(mu=0.25), 1.0) == pytest.approx(20.0)
        assert default_u_budget(BesselParams(mu=0.5), 1.0) == pytest.approx(4.0)

    def test_output_grid_half(self, half):
        """At mu = 1/2, R is reflected BM and the u-clock tracks t"""
        cfg = SimulationService(workers=1).time_change_config(half, 4, 50, 1.0, 1, 4)
        path = simulate_time_change(half, cfg, t_horizon=1.0, t_steps=50)
        du = cfg.horizon / cfg.n_steps
        assert path.r.shape == (4, 51)
        assert np.all(path.r >= 0)
        assert np.all(np.diff(path.l, axis=1) >= 0)
        np.testing.assert_allclose(path.clock, np.broadcast_to(path.times, path.clock.shape), atol=2 * du)
        assert path.construction == Construction.TIME_CHANGE

    def test_budget_too_small(self, half):
        """A short u-budget reports the offending paths"""
        cfg = SimConfig(n_steps=100, horizon=0.01, seed=1, n_paths=3, batch_size=3)
        with pytest.raises(HorizonNotReachedError) as exc:
            simulate_time_change(half, cfg, t_horizon=1.0, t_steps=10)
        assert exc.value.paths == [0, 1, 2]


class TestLocalTimeEstimators:
    """Tests for the occupation-based estimators"""

    def test_occupation_at_zero(self, half):
        """A path sitting at zero accumulates L_t = mu (2 - 2 mu) eps^{2mu - 2} t"""
        grid = flat_grid(half, np.zeros((2, 11)))
        l = estimate_local_time_occupation(grid, 0.1)
        np.testing.assert_allclose(l[:, -1], 0.5 * 1.0 * 0.1 ** -1.0)
        assert np.all(l[:, 0] == 0.0)

    def test_level_local_time(self, half):
        """A path sitting at level a accumulates mu a^{2mu-1} t / (2 eps)"""
        grid = flat_grid(half, np.full((1, 11), 1.0))
        value = estimate_level_local_time(grid, 1.0, 0.05)
        assert value.shape == (1, 11)
        assert value[0, 0] == 0.0
        np.testing.assert_allclose(value[0], 0.5 / (2.0 * 0.05) * grid.times)

    def test_level_window_reaching_zero(self, half):
        """A window that reaches zero is refused"""
        grid = flat_grid(half, np.full((1, 11), 0.05))
        with pytest.raises(DomainError):
            estimate_level_local_time(grid, 0.05, 0.05)

    def test_generalized_occupation_ramp(self, half):
        """A linear ramp through the level balances both sides"""
        grid = flat_grid(half, np.linspace(0.0, 1.0, 100_001))
        lhs, rhs = generalized_occupation(grid, 0.5, 0.01, lambda t: np.exp(-t))
        assert lhs[0] == pytest.approx(0.02 * math.exp(-0.5), rel=3e-3)
        assert rhs[0] == pytest.approx(lhs[0], rel=3e-3)

    def test_coarsen(self, half):
        """Every other point; interval minima and zero times merge pairwise"""
        grid = flat_grid(half, [[0.0, 1.0, 2.0, 1.0, 0.5]])
        grid.zero_first = np.array([[0.1, np.nan, np.nan, 0.9]])
        grid.zero_last = np.array([[0.2, np.nan, np.nan, 0.95]])
        coarse = coarsen(grid)
        np.testing.assert_allclose(coarse.times, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(coarse.r[0], [0.0, 2.0, 0.5])
        np.testing.assert_allclose(coarse.interval_min[0], [0.0, 0.5])
        np.testing.assert_allclose(coarse.zero_first[0], [0.1, 0.9])
        np.testing.assert_allclose(coarse.zero_last[0], [0.2, 0.95])

    def test_coarsen_odd_steps(self, half):
        """An odd number of steps cannot be paired"""
        with pytest.raises(DomainError):
            coarsen(flat_grid(half, [[0.0, 1.0, 2.0, 1.0]]))

    def test_rescaled_occupation(self, half):
        """Constant f integrates to n^delta f T"""
        grid = flat_grid(half, np.zeros((1, 11)))
        value = rescaled_occupation(grid, lambda x: np.ones_like(x), 4.0)
        assert value[0] == pytest.approx(4.0 ** half.delta)


def time_change_batches(params, seed, n_batches=4, t_steps=100):
    """Time-change paths in batches of 500 to bound memory"""
    cfg = SimulationService(workers=1).time_change_config(params, 500 * n_batches, t_steps, 1.0, seed, 500)
    return [simulate_time_change(params, cfg, 1.0, t_steps, batch_index=i) for i in range(n_batches)]


class TestLawsAtReducedScale:
    """Simulated laws against closed forms, at test scale with fixed seeds"""

    def test_transition_from_zero(self):
        """R_dt^2 / (2 dt) ~ Gamma(1 - mu) from zero"""
        params = BesselParams(mu=0.25)
        y = sample_bessel_transition(params, np.zeros(20_000), 0.3, make_stream(21))
        assert stats.kstest(y ** 2 / 0.6, stats.gamma(1.0 - params.mu).cdf).statistic < 0.015

    def test_transition_against_density(self):
        """Empirical CDF of one step from x = 0.7 matches the integrated density"""
        params = BesselParams(mu=0.25)
        x, dt = 0.7, 0.3
        y = sample_bessel_transition(params, np.full(20_000, x), dt, make_stream(22))
        for level in (0.3, 0.6, 0.9, 1.3, 2.0):
            cdf = quad_checked(
                lambda z: transition_density(params, dt, x, z) * z ** (1.0 - 2.0 * params.mu) / params.mu,
                0.0, level,
            )
            assert np.mean(y <= level) == pytest.approx(cdf, abs=0.015)

    @pytest.mark.parametrize("n_steps", [5, 100])
    def test_local_time_mean(self, n_steps):
        """E[L_1] = 2^mu / Gamma(1 - mu) from the bridge local time, on fine and coarse grids"""
        params = BesselParams(mu=0.25)
        cfg = SimConfig(n_steps=n_steps, horizon=1.0, seed=23, n_paths=4_000, batch_size=4_000)
        l = simulate_direct(params, cfg).l[:, -1]
        se = l.std(ddof=1) / math.sqrt(l.size)
        assert abs(l.mean() - lt_mean(params)) <= 4.0 * se

    def test_level_local_time_mean(self, half):
        """The window estimate of E[L_1^a] at a = 1/2 is within 5% of its quadrature"""
        cfg = SimConfig(n_steps=200, horizon=1.0, seed=25, n_paths=8_000, batch_size=4_000)
        paths = [simulate_direct(half, cfg, batch_index=i) for i in range(2)]
        values = np.concatenate([estimate_level_local_time(p, 0.5, 0.05)[:, -1] for p in paths])
        assert values.mean() == pytest.approx(level_local_time_mean(half, 0.5), rel=0.05)
        lhs, rhs = generalized_occupation(paths[0], 0.5, 0.05, lambda t: np.exp(-t))
        assert lhs.mean() == pytest.approx(rhs.mean(), rel=0.10)

    def test_occupation_refinement(self):
        """Halving eps and dt moves the occupation estimate of L toward the exact local time"""
        params = BesselParams(mu=0.25)
        cfg = SimConfig(n_steps=400, horizon=1.0, seed=26, n_paths=3_000, batch_size=3_000)
        out = occupation_refinement(simulate_direct(params, cfg), 0.1)
        coarse_bias = np.mean(out["coarse"] - out["exact"])
        fine_bias = np.mean(out["fine"] - out["exact"])
        assert abs(fine_bias) < abs(coarse_bias)
        assert abs(np.mean(out["extrapolated"] - out["exact"])) < abs(fine_bias)

    def test_time_change_local_time_mean(self, half):
        """E[L_1] from the time-change construction at mu = 1/2"""
        l = np.concatenate([p.l[:, -1] for p in time_change_batches(half, 27)])
        se = l.std(ddof=1) / math.sqrt(l.size)
        # The discrete running maximum undershoots by O(sqrt(du))
        assert abs(l.mean() - lt_mean(half)) <= 4.0 * se + 0.04 * lt_mean(half)

    def test_time_change_terminal_law(self):
        """At mu = 3/4 the time-change R_1^2 / 2 is Gamma(1 - mu)"""
        params = BesselParams(mu=0.75)
        r = np.concatenate([p.r[:, -1] for p in time_change_batches(params, 28)])
        assert stats.kstest(r ** 2 / 2.0, stats.gamma(1.0 - params.mu).cdf).statistic < 0.06


class TestDumpPaths:
    """Tests for the CSV path dump"""

    def test_writes_csv(self, half, small_config, tmp_path):
        """One row per path and grid point below a comment header"""
        grid = simulate_direct(half, small_config)
        target = dump_paths(grid, tmp_path)
        assert target.exists()
        header = target.read_text(encoding="utf-8").splitlines()[0]
        assert header.startswith("# mu=0.5")
        frame = pd.read_csv(target, comment="#")
        assert list(frame.columns) == ["path", "time", "r", "l", "clock"]
        assert len(frame) == 16 * 201


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
