"""
Tests for the martingale laboratory
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add root directory to path
root_dir = Path(__file__).parent.parent
sys.path.append(str(root_dir))

from bessel_lab.core import martlab
from bessel_lab.core.pathsim import PathGrid
from bessel_lab.models.schemas import BesselParams, Construction
from bessel_lab.utils.validators import HorizonNotReachedError, SpecError


def make_grid(r, l, mu=0.5, horizon=1.0):
    """PathGrid from explicit rows"""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    l = np.atleast_2d(np.asarray(l, dtype=float))
    return PathGrid(
        params=BesselParams(mu=mu),
        times=np.linspace(0.0, horizon, r.shape[1]),
        r=r,
        l=l,
        interval_min=np.minimum(r[:, :-1], r[:, 1:]),
        zero_threshold=0.01,
        construction=Construction.DIRECT,
    )


# Fixtures
@pytest.fixture(params=[0.25, 0.5, 0.75])
def params(request):
    """Process parameters across the usual sweep"""
    return BesselParams(mu=request.param)


@pytest.fixture
def excursion_grid():
    """One path leaving zero, returning, and accumulating local time"""
    return make_grid([[0.0, 1.0, 0.0, 0.0]], [[0.0, 0.0, 0.5, 1.0]])


class TestBalayageSpecs:
    """Tests for (F, f) specifications"""

    def test_identity_spec(self):
        """F(x) = x, f = 1 is consistent"""
        spec = martlab.identity_spec()
        assert spec.check_consistency()
        assert spec.initial_value == 0.0

    def test_exponential_spec(self):
        """F = exp(-theta x) with f = F' is consistent"""
        spec = martlab.exponential_spec(2.0)
        assert spec.check_consistency()
        assert spec.initial_value == 1.0

    def test_inconsistent_spec(self):
        """A mismatched pair is rejected"""
        spec = martlab.BalayageSpec(F=lambda x: 2.0 * np.asarray(x), f=lambda x: np.ones_like(x))
        with pytest.raises(SpecError):
            spec.check_consistency()

    def test_barrier_spec(self, params):
        """Constant barrier: F(0) = 1 - exp(-u b^{-2mu}), zero from u on"""
        b, u = 1.5, 1.0
        spec = martlab.barrier_spec(params, lambda _: b, u, table_size=201)
        weight = b ** (-2.0 * params.mu)
        assert spec.initial_value == pytest.approx(-math.expm1(-u * weight), rel=1e-10)
        assert spec.F(np.array([1.2]))[0] == 0.0
        assert spec.f(np.array([0.3]))[0] == pytest.approx(-math.exp(-0.7 * weight) * weight, rel=1e-10)
        assert spec.check_consistency(points=(0.25, 0.5))


class TestBalayageMartingales:
    """Tests for balayage martingales and Doob's maximal identity"""

    def test_identity_martingale(self, excursion_grid):
        """M = L - R^{2mu}"""
        m = martlab.balayage_martingale(excursion_grid, martlab.identity_spec())
        np.testing.assert_allclose(m[0], [0.0, -1.0, 0.5, 1.0])

    def test_doob_supremum(self, excursion_grid):
        """Supremum of e^{-L}(1 + R) up to tau_u"""
        sup = martlab.doob_supremum(excursion_grid, martlab.exponential_spec(1.0), 0.6)
        assert sup[0] == pytest.approx(2.0)

    def test_doob_not_reached(self, excursion_grid):
        """Paths short of tau_u raise, or give NaN when censoring is allowed"""
        spec = martlab.exponential_spec(1.0)
        with pytest.raises(HorizonNotReachedError):
            martlab.doob_supremum(excursion_grid, spec, 5.0)
        assert math.isnan(martlab.doob_supremum(excursion_grid, spec, 5.0, allow_censored=True)[0])

    def test_negative_martingale(self, excursion_grid):
        """Doob's identity needs a positive martingale"""
        with pytest.raises(SpecError):
            martlab.doob_supremum(excursion_grid, martlab.identity_spec(), 0.6)

    def test_maximal_report_on_exact_sample(self):
        """x / U with U uniform satisfies P(S > a) = x / a"""
        u = (np.arange(1000) + 0.5) / 1000
        reports = martlab.doob_maximal_report(0.5 / u, 0.5, 0.5)
        assert len(reports) == 4
        assert all(r.passed for r in reports)

    def test_maximal_report_counts_censored(self):
        """Censored suprema are left out and counted on every report"""
        u = (np.arange(1000) + 0.5) / 1000
        suprema = np.concatenate([0.5 / u, np.full(7, np.nan)])
        reports = martlab.doob_maximal_report(suprema, 0.5, 0.5)
        assert all(r.dropped == 7 for r in reports)
        assert all(r.n_paths == 1000 for r in reports)

    def test_maximal_check_streams_batches(self, excursion_grid):
        """Batches are read from a generator; a censored batch shows up as dropped"""
        short = make_grid([[0.0, 1.0, 0.0, 0.0]], [[0.0, 0.0, 0.1, 0.2]])
        spec = martlab.exponential_spec(1.0)
        reports = martlab.doob_maximal_check(
            (grid for grid in (excursion_grid, short)), spec, 0.6, allow_censored=True, experiment_id="doob-maximal",
        )
        assert len(reports) == 4
        assert all(r.dropped == 1 and r.n_paths == 1 for r in reports)
        assert all(r.experiment_id == "doob-maximal" for r in reports)

    def test_maximal_check_needs_tau(self, excursion_grid):
        """Without censoring a short batch is an error"""
        short = make_grid([[0.0, 1.0, 0.0, 0.0]], [[0.0, 0.0, 0.1, 0.2]])
        with pytest.raises(HorizonNotReachedError):
            martlab.doob_maximal_check(iter([excursion_grid, short]), martlab.exponential_spec(1.0), 0.6)


class TestBarrierCrossing:
    """Tests for barrier crossing detection"""

    def test_crossing_and_survival(self):
        """One path crosses before tau_u, the other reaches tau_u below the barrier"""
        grid = make_grid(
            [[0.0, 1.5, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0]],
            [[0.0, 0.0, 0.3, 0.7], [0.0, 0.0, 0.3, 0.7]],
        )
        crossed = martlab.barrier_crossing_samples(grid, lambda _: 1.0, 0.5)
        np.testing.assert_array_equal(crossed, [True, False])

    def test_undetermined_path(self):
        """A path neither crossing nor reaching tau_u is reported"""
        grid = make_grid([[0.0, 0.5, 0.0, 0.0]], [[0.0, 0.0, 0.1, 0.2]])
        with pytest.raises(HorizonNotReachedError) as exc:
            martlab.barrier_crossing_samples(grid, lambda _: 1.0, 0.5)
        assert exc.value.paths == [0]

    def test_crossing_check_streams_batches(self):
        """Frequencies pool over a stream of batches and compare with 1 - exp(-u phi^{-2mu})"""
        def batches():
            for index in range(2):
                grid = make_grid(
                    [[0.0, 1.5, 0.0, 0.0], [0.0, 0.1, 0.0, 0.0]],
                    [[0.0, 0.0, 0.3, 0.7], [0.0, 0.0, 0.3, 0.7]],
                    horizon=0.01,
                )
                grid.batch_index = index
                yield grid

        report = martlab.barrier_crossing_check(batches(), lambda _: 1.0, 0.5, seed=3, label="unit barrier")
        assert report.n_paths == 4
        assert report.estimate == 0.5
        assert report.target == pytest.approx(-math.expm1(-0.5), rel=1e-8)
        assert report.label == "unit barrier"
        assert report.experiment_id == "hitting-barrier"
        assert report.seed == 3


class TestOptionalStopping:
    """Tests for M^h stopped at the last zero"""

    def test_stopped_value(self, params):
        """h = 1 stays 1; h(x) = x gives g + mu (T - g)"""
        g = np.array([0.0, 0.3, 0.9])
        np.testing.assert_allclose(martlab.stopped_h_value(params, lambda x: np.ones_like(x), g), 1.0, rtol=1e-12)
        np.testing.assert_allclose(
            martlab.stopped_h_value(params, lambda x: x, g), g + params.mu * (1.0 - g), rtol=1e-12
        )

    def test_closed_form_gap(self, params):
        """E[M^h_g - h(g)] = mu (1 - mu) for h(x) = x"""
        gap = martlab.closed_form_stopping_gap(params, lambda x: x)
        assert gap == pytest.approx(params.mu * (1.0 - params.mu), rel=1e-10)

    def test_pathwise_gap(self):
        """Per-path gap is mu (T - g)"""
        grid = make_grid([[0.0, 1.0, 0.0, 1.0, 2.0]], [[0.0] * 5])
        result = martlab.optional_stopping_gap(grid, lambda x: x)
        assert result.samples[0] == pytest.approx(0.5 * 0.5)
        assert result.closed_form_gap == pytest.approx(0.25)


class TestMeanderOrthogonality:
    """Tests for X^f"""

    def test_xf_square(self):
        """f(x) = x^2 gives X^f = 2 (T - g) - R_T^2"""
        spec = martlab.XfSpec(f=lambda x: x ** 2, df=lambda x: 2 * x, d2f=lambda x: 2 * np.ones_like(x))
        value = martlab.xf_value(spec, np.array([1.2]), np.array([0.4]))
        assert value[0] == pytest.approx(2 * 0.6 - 1.44)

    def test_xf_report(self):
        """Orthogonality report is labelled by f"""
        spec = martlab.XfSpec(f=lambda x: x ** 2, df=lambda x: 2 * x, d2f=lambda x: 2 * np.ones_like(x), name="x^2")
        grid = make_grid([[0.0, 1.0, 0.0, 1.0, 2.0], [0.0, 0.5, 0.7, 0.1, 0.0]], [[0.0] * 5] * 2)
        report = martlab.xf_orthogonality(grid, spec, lambda g, l: np.ones_like(g))
        assert report.label == "x^2"
        assert report.n_paths == 2


class TestMhat:
    """Tests for the M-hat decomposition"""

    def test_expected_terminal(self, params):
        """E[R_{t+tau}^2 | R_t = r] = r^2 + delta tau and total mass is one"""
        assert martlab.expected_terminal(params, lambda z: 1.0, 0.6, 0.5) == pytest.approx(1.0, abs=1e-8)
        assert martlab.expected_terminal(params, lambda z: z * z, 0.6, 0.5) == pytest.approx(
            0.36 + params.delta * 0.5, rel=1e-8
        )

    def test_constant_function_vanishes(self, params):
        """For f = 1 the three terms cancel"""
        terms = martlab.mhat_decomposition(params, lambda z: 1.0, 0.7, 0.4, 0.2)
        assert terms.value == pytest.approx(0.0, abs=1e-6)

    def test_vanishes_at_zero(self, params):
        """At a zero the meander term drops and the excursion term equals E[R_T^2]"""
        terms = martlab.mhat_decomposition(params, lambda z: z * z, 0.0, 0.4, 0.4)
        assert terms.meander == pytest.approx(0.0, abs=1e-12)
        assert terms.excursion == pytest.approx(params.delta * 0.6, rel=1e-6)
        assert terms.value == pytest.approx(0.0, abs=1e-6)

    def test_alternative_weights_differ(self):
        """The alternative weighting does not cancel for f = 1"""
        params = BesselParams(mu=0.5)
        terms = martlab.mhat_decomposition(params, lambda z: 1.0, 0.7, 0.4, 0.2, as_printed=True)
        assert abs(terms.value) > 1e-3


class TestAzemaProjection:
    """Tests for the Azema projection"""

    def test_at_zeros(self, excursion_grid):
        """At zeros the age vanishes and Lambda = -F(L)"""
        lam = martlab.azema_projection(excursion_grid, martlab.identity_spec())
        assert lam[0, 0] == 0.0
        assert lam[0, 3] == pytest.approx(-1.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
