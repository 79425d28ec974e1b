import numpy as np
import pytest

from fedgame import ConfigurationError, StatisticsError
from fedgame.meanest import (MeanGameSpec, deviation_mse, foc_residuals,
                             mc_mse, mc_mse_fixed, mc_scale_grid,
                             nash_equilibrium, optimal_scale,
                             penalty_of_anarchy, posterior, truthful_mse,
                             weighted_mse)

TWO = MeanGameSpec.fixed(mus=(1.0, -1.0), sigma=1.0)
HET = MeanGameSpec.bayesian(sigmas=(1.0, 2.0, 0.5), n_samples=4, tau=1.0,
                            tau0=2.0)


class TestFixedClosedForms:
    def test_truthful_mse(self):
        # (mu_bar - mu_1)^2 + sigma^2/N = 1 + 0.5
        assert truthful_mse(TWO, 0) == pytest.approx(1.5, abs=1e-15)
        assert truthful_mse(TWO, 1) == pytest.approx(1.5, abs=1e-15)

    def test_deviation_mse_at_one_is_truthful(self):
        assert deviation_mse(TWO, 0, 1.0) == truthful_mse(TWO, 0)

    def test_deviation_mse_at_optimum(self):
        # c* = (1 + 1*1*2) / (1 + 1) = 1.5 and the MSE drops by
        # (sigma^2/N - mu_1(mu_1 - mu_bar))^2 / (mu_1^2 + sigma^2) = 0.125
        assert deviation_mse(TWO, 0, 1.5) == pytest.approx(1.375, abs=1e-15)

    def test_optimal_scale_profitable(self):
        best = optimal_scale(TWO, 0)
        assert best.profitable
        assert best.c_star == pytest.approx(1.5, abs=1e-15)
        assert best.mse == pytest.approx(1.375, abs=1e-15)
        # the quadratic in c is minimized there: neighbours are worse
        assert deviation_mse(TWO, 0, 1.4) > best.mse
        assert deviation_mse(TWO, 0, 1.6) > best.mse

    def test_unprofitable_when_noise_dominates(self):
        # mu_i (mu_i - mu_bar) = 1 < sigma^2/N = 4.5: floor at c = 1
        noisy = MeanGameSpec.fixed(mus=(1.0, -1.0), sigma=3.0)
        best = optimal_scale(noisy, 0)
        assert not best.profitable
        assert best.c_star == 1.0
        assert best.mse == truthful_mse(noisy, 0)

    def test_identical_means_leave_nothing_to_gain(self):
        same = MeanGameSpec.fixed(mus=(1.0, 1.0), sigma=1.0)
        assert not optimal_scale(same, 0).profitable

    def test_noiseless_limit_of_optimal_scale(self):
        crisp = MeanGameSpec.fixed(mus=(1.0, -1.0), sigma=1e-9)
        assert optimal_scale(crisp, 0).c_star == pytest.approx(3.0, rel=1e-6)


class TestFixedMonteCarlo:
    def test_truthful_mse_agrees(self):
        est, err = mc_mse_fixed(TWO, [1.0, 1.0], 0, draws=200000, seed=31)
        assert abs(est - 1.5) < 4 * err
        assert 0 < err < 0.02

    def test_deviation_mse_agrees(self):
        est, err = mc_mse_fixed(TWO, [1.5, 1.0], 0, draws=200000, seed=31)
        assert abs(est - 1.375) < 4 * err

    def test_scale_grid_recovers_optimum(self):
        grid = [1.0, 1.25, 1.5, 1.75, 2.0]
        mses, errs = mc_scale_grid(TWO, 0, grid, draws=200000, seed=31)
        assert int(np.argmin(mses)) == 2
        for c, est, err in zip(grid, mses, errs):
            assert abs(est - deviation_mse(TWO, 0, c)) < 4 * err

    def test_draw_floor(self):
        with pytest.raises(StatisticsError):
            mc_mse_fixed(TWO, [1.0, 1.0], 0, draws=29, seed=1)
        with pytest.raises(StatisticsError):
            mc_scale_grid(TWO, 0, [1.0], draws=10, seed=1)

    def test_weights_shape_checked(self):
        with pytest.raises(ConfigurationError):
            mc_mse_fixed(TWO, [1.0, 1.0, 1.0], 0, draws=100, seed=1)


class TestPosterior:
    def test_symmetric_unit_case(self):
        # tau = tau0 = tau_j = 1, two clients: beta = 0.4, precision 1.6,
        # mean = (x_0 + 0.2 x_1) / 1.6
        spec = MeanGameSpec.bayesian(sigmas=(1.0, 1.0), n_samples=1, tau=1.0,
                                     tau0=1.0)
        mean, var = posterior(spec, 0, [1.0, 1.0])
        assert mean == pytest.approx(0.75, abs=1e-15)
        assert var == pytest.approx(0.625, abs=1e-15)
        mean, _ = posterior(spec, 0, [1.0, 0.0])
        assert mean == pytest.approx(1.0 / 1.6, abs=1e-15)

    def test_infinite_population_precision_limit(self):
        # tau -> inf recovers the fully pooled mean
        spec = MeanGameSpec.bayesian(sigmas=(1.0, 2.0), n_samples=4,
                                     tau=1e12, tau0=2.0)
        xbars = [1.0, -0.5]
        taus = spec.taus
        pooled = float(taus @ xbars) / (spec.tau0 + float(taus.sum()))
        mean, _ = posterior(spec, 0, xbars)
        assert mean == pytest.approx(pooled, rel=1e-6)

    def test_report_shape_checked(self):
        with pytest.raises(ConfigurationError):
            posterior(HET, 0, [1.0, 2.0])


class TestWeightedMse:
    def test_zero_weights_give_prior_variance(self):
        # the estimate is identically zero, so the error is the marginal
        # variance of the client mean 1/tau + 1/tau0
        weights = np.zeros(HET.n_clients)
        assert weighted_mse(HET, weights, 0) == pytest.approx(1.5, abs=1e-14)

    def test_truthful_unit_case(self):
        spec = MeanGameSpec.bayesian(sigmas=(1.0, 1.0), n_samples=1, tau=1.0,
                                     tau0=1.0)
        assert weighted_mse(spec, [1.0, 1.0], 0) == pytest.approx(1.0, abs=1e-14)

    def test_monte_carlo_agrees_at_truthful_weights(self):
        ones = np.ones(HET.n_clients)
        est, err = mc_mse(HET, ones, 0, draws=200000, seed=41)
        assert abs(est - weighted_mse(HET, ones, 0)) < 4 * err

    def test_monte_carlo_agrees_at_equilibrium(self):
        scales, errors = nash_equilibrium(HET)
        est, err = mc_mse(HET, scales, 1, draws=200000, seed=41)
        assert abs(est - errors[1]) < 4 * err

    def test_draw_floor_and_shapes(self):
        with pytest.raises(StatisticsError):
            mc_mse(HET, np.ones(3), 0, draws=10, seed=1)
        with pytest.raises(ConfigurationError):
            weighted_mse(HET, [1.0, 1.0], 0)
        with pytest.raises(ConfigurationError):
            mc_mse(HET, np.ones(2), 0, draws=100, seed=1)


class TestNashEquilibrium:
    def test_first_order_conditions_vanish(self):
        scales, _ = nash_equilibrium(HET)
        assert np.max(np.abs(foc_residuals(HET, scales))) < 1e-12
        # and they do not vanish away from the equilibrium
        assert np.max(np.abs(foc_residuals(HET, np.ones(3)))) > 1e-3

    def test_equilibrium_errors_match_weighted_mse(self):
        # the closed-form error vector must agree with evaluating the
        # general MSE formula at the equilibrium weights
        scales, errors = nash_equilibrium(HET)
        for i in range(HET.n_clients):
            assert errors[i] == pytest.approx(weighted_mse(HET, scales, i),
                                              rel=1e-12)

    def test_homogeneous_closed_form(self):
        # three equal clients with N rho = 1.5: c = N rho (tau + tau0)
        # / (tau (N rho + tau0)) = 4.5 / 3.5
        spec = MeanGameSpec.bayesian(sigmas=(2.0, 2.0, 2.0), n_samples=4,
                                     tau=1.0, tau0=2.0)
        scales, _ = nash_equilibrium(spec)
        assert np.allclose(scales, 9.0 / 7.0, rtol=1e-14)

    def test_over_reporting_scales_exceed_one_under_heterogeneity(self):
        scales, _ = nash_equilibrium(HET)
        assert scales.shape == (3,)
        # more precise clients carry larger equilibrium weights
        order = np.argsort(HET.taus)
        assert np.array_equal(np.argsort(scales), order)


class TestPenaltyOfAnarchy:
    def test_limit_fields(self):
        report = penalty_of_anarchy(HET)
        assert report.eq_error_limit == pytest.approx(3.0, abs=1e-15)
        assert report.truthful_error_limit == pytest.approx(1.0, abs=1e-15)
        assert report.ratio == pytest.approx(3.0, abs=1e-14)

    def test_finite_errors_approach_limits(self):
        spec = MeanGameSpec.bayesian(sigmas=(1.0,) * 4096, n_samples=1,
                                     tau=2.0, tau0=3.0)
        report = penalty_of_anarchy(spec)
        assert report.eq_errors.mean() == pytest.approx(1.25, abs=0.01)
        assert report.truthful_errors.mean() == pytest.approx(0.5, abs=0.01)
        assert report.penalized

    def test_high_heterogeneity_condition(self):
        # needs tau^2 + tau_j tau < tau_j tau0 for every client
        assert not penalty_of_anarchy(HET).high_heterogeneity
        sharp = MeanGameSpec.bayesian(sigmas=(1.0, 0.5), n_samples=4, tau=1.0,
                                      tau0=2.0)
        assert penalty_of_anarchy(sharp).high_heterogeneity

    def test_consistency_with_direct_formulas(self):
        report = penalty_of_anarchy(HET)
        _, eq_errors = nash_equilibrium(HET)
        assert np.array_equal(report.eq_errors, eq_errors)
        ones = np.ones(3)
        for i in range(3):
            assert report.truthful_errors[i] == weighted_mse(HET, ones, i)


class TestSpecValidation:
    def test_fixed_constructor(self):
        with pytest.raises(ConfigurationError):
            MeanGameSpec.fixed(mus=(1.0,), sigma=1.0)
        with pytest.raises(ConfigurationError):
            MeanGameSpec.fixed(mus=(1.0, 2.0), sigma=0.0)

    def test_bayesian_constructor(self):
        with pytest.raises(ConfigurationError):
            MeanGameSpec.bayesian(sigmas=(1.0,), n_samples=1, tau=1.0, tau0=1.0)
        with pytest.raises(ConfigurationError):
            MeanGameSpec.bayesian(sigmas=(1.0, -1.0), n_samples=1, tau=1.0,
                                  tau0=1.0)
        with pytest.raises(ConfigurationError):
            MeanGameSpec.bayesian(sigmas=(1.0, 1.0), n_samples=0, tau=1.0,
                                  tau0=1.0)
        with pytest.raises(ConfigurationError):
            MeanGameSpec.bayesian(sigmas=(1.0, 1.0), n_samples=1, tau=0.0,
                                  tau0=1.0)

    def test_variant_gating(self):
        with pytest.raises(ConfigurationError):
            truthful_mse(HET, 0)
        with pytest.raises(ConfigurationError):
            nash_equilibrium(TWO)
        with pytest.raises(ConfigurationError):
            posterior(TWO, 0, [1.0, 1.0])

    def test_client_range(self):
        with pytest.raises(ConfigurationError):
            truthful_mse(TWO, 2)
        with pytest.raises(ConfigurationError):
            weighted_mse(HET, np.ones(3), -1)
