import math

import numpy as np
import pytest
from scipy.stats import chi2, kstest

from stepstress import (
    LinearHypothesis,
    ModelParams,
    cell_probabilities,
    compute_sandwich,
    fit_mdpde,
    power_at_point,
    power_contiguous,
    wald_chi2_statistic,
    wald_test,
    z_statistic,
    z_test,
)
from stepstress.hypothesis import normal_cdf
from stepstress.simulation import replication_rng, sample_counts

H_THETA1 = LinearHypothesis(m=(0.0, 1.0), d=0.03, alpha=0.05)


class TestZStatistic:
    def test_zero_when_null_holds_exactly(self, electronic_mle):
        t1 = electronic_mle.params_hat.theta1
        hyp = LinearHypothesis(m=(0.0, 1.0), d=t1)
        assert z_statistic(electronic_mle, hyp) == pytest.approx(0.0, abs=1e-12)
        assert not z_test(electronic_mle, hyp).reject

    def test_scaling_invariance(self, electronic_mle):
        base = LinearHypothesis(m=(1.0, 2.0), d=0.01)
        scaled = LinearHypothesis(m=(5.0, 10.0), d=0.05)
        assert z_statistic(electronic_mle, base) == pytest.approx(
            z_statistic(electronic_mle, scaled), rel=1e-12
        )
        negated = LinearHypothesis(m=(-1.0, -2.0), d=-0.01)
        assert z_test(electronic_mle, base).reject == z_test(electronic_mle, negated).reject

    def test_empirical_level_under_null(self, sim_plan, sim_params):
        pi = cell_probabilities(sim_params, sim_plan)
        rejections = used = 0
        for r in range(1000):
            counts = sample_counts(pi, 180, replication_rng(51, r))
            fit = fit_mdpde(counts, sim_plan, 0.0)
            if not fit.converged:
                continue
            used += 1
            rejections += z_test(fit, H_THETA1).reject
        assert used >= 990
        assert 0.03 <= rejections / used <= 0.07

    def test_null_distribution_is_standard_normal(self, sim_plan, sim_params):
        pi = cell_probabilities(sim_params, sim_plan)
        for beta in (0.0, 0.5, 1.0):
            zs = []
            for r in range(1000):
                counts = sample_counts(pi, 10_000, replication_rng(52, r))
                fit = fit_mdpde(counts, sim_plan, beta)
                if fit.converged:
                    zs.append(z_statistic(fit, H_THETA1))
            assert len(zs) >= 990
            assert kstest(zs, "norm").pvalue > 0.01

    def test_consistency_against_fixed_alternative(self, sim_plan):
        alt = ModelParams(0.003, 0.04)
        pi = cell_probabilities(alt, sim_plan)
        rates = []
        for n in (200, 2000, 20000):
            rej = used = 0
            for r in range(200):
                counts = sample_counts(pi, n, replication_rng(53, r))
                fit = fit_mdpde(counts, sim_plan, 0.0)
                if not fit.converged:
                    continue
                used += 1
                rej += z_test(fit, H_THETA1).reject
            rates.append(rej / used)
        assert rates[0] < rates[-1]
        assert rates[-1] > 0.99

    def test_report_serialization(self, electronic_mle):
        report = z_test(electronic_mle, H_THETA1)
        d = report.to_dict()
        assert set(d) >= {"statistic", "p_value", "alpha", "reject", "hypothesis", "beta", "N"}
        assert d["hypothesis"]["m"] == [0.0, 1.0]


class TestWaldChi2:
    def test_rank_one_reduces_to_z_squared(self, electronic_mle):
        z = z_statistic(electronic_mle, H_THETA1)
        q = wald_chi2_statistic(electronic_mle, [[0.0, 1.0]], [0.03])
        assert q == pytest.approx(z**2, rel=1e-12)

    def test_zero_at_exact_null(self, electronic_mle):
        p = electronic_mle.params_hat
        q = wald_chi2_statistic(electronic_mle, np.eye(2), [p.theta0, p.theta1])
        assert q == pytest.approx(0.0, abs=1e-15)

    def test_rank_deficient_matrix_rejected(self, electronic_mle):
        with pytest.raises(ValueError, match="rank"):
            wald_chi2_statistic(electronic_mle, [[1.0, 0.0], [2.0, 0.0]], [0.0, 0.0])

    def test_null_distribution_is_chi2(self, conditioned_plan, conditioned_params):
        # needs the well-conditioned design: with near-collinear parameters the
        # joint quadratic form approaches its chi-square limit only at larger N
        pi = cell_probabilities(conditioned_params, conditioned_plan)
        d = [conditioned_params.theta0, conditioned_params.theta1]
        qs = []
        for r in range(1000):
            counts = sample_counts(pi, 10_000, replication_rng(54, r))
            fit = fit_mdpde(counts, conditioned_plan, 0.0)
            if fit.converged:
                qs.append(wald_chi2_statistic(fit, np.eye(2), d))
        assert len(qs) >= 990
        assert kstest(qs, chi2(df=2).cdf).pvalue > 0.01

    def test_wald_report(self, electronic_mle):
        report = wald_test(electronic_mle, np.eye(2), [2e-5, 0.03], alpha=0.05)
        assert report.df == 2
        assert report.p_value == pytest.approx(chi2.sf(report.statistic, 2), rel=1e-12)


class TestPowerApproximations:
    def test_contiguous_level_recovery_at_zero_shift(self, electronic_mle):
        assert power_contiguous(electronic_mle, H_THETA1, (0.0, 0.0)) == pytest.approx(0.05, rel=1e-9)

    def test_contiguous_saturates(self, electronic_mle):
        assert power_contiguous(electronic_mle, H_THETA1, (0.0, 1e6)) == 1.0

    def test_point_power_printed_form_at_null_boundary(self, sim_plan, sim_params):
        # substituting m^T theta* -> d into the printed display leaves 2(1 - Phi(1))
        close = ModelParams(sim_params.theta0, 0.03 + 1e-15)
        value = power_at_point(sim_params, H_THETA1, close, n_units=180, plan=sim_plan, beta=0.0)
        assert value == pytest.approx(2 * (1 - normal_cdf(1.0)), abs=1e-6)

    def test_point_power_monotone_in_n(self, sim_plan, sim_params):
        alt = ModelParams(0.003, 0.035)
        values = [
            power_at_point(sim_params, H_THETA1, alt, n_units=n, plan=sim_plan, beta=0.0, corrected=True)
            for n in (50, 200, 800, 3200)
        ]
        assert all(a < b or b == 1.0 for a, b in zip(values, values[1:]))

    def test_point_power_saturates_at_strong_alternative(self, sim_plan, sim_params):
        # covariance at the null model; the alternative only shifts the mean
        alt = ModelParams(0.003, 0.6)
        value = power_at_point(sim_params, H_THETA1, alt, n_units=180, plan=sim_plan, beta=0.0, corrected=True)
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_corrected_point_power_matches_monte_carlo(self, sim_plan, sim_params):
        # mild alternative at a larger N, where the normal approximation holds;
        # compare against the exact two-sided normal power through the same shift
        alt = ModelParams(0.003, 0.035)
        n = 5000
        sigma = compute_sandwich(alt, sim_plan, 0.0)
        m = np.array([0.0, 1.0])
        shift = math.sqrt(n / (m @ sigma @ m)) * (0.035 - 0.03)
        exact = (1 - normal_cdf(1.959963985 - shift)) + normal_cdf(-1.959963985 - shift)
        pi = cell_probabilities(alt, sim_plan)
        rej = used = 0
        for r in range(400):
            counts = sample_counts(pi, n, replication_rng(55, r))
            fit = fit_mdpde(counts, sim_plan, 0.0)
            if not fit.converged:
                continue
            used += 1
            rej += z_test(fit, H_THETA1).reject
        assert used >= 396
        assert rej / used == pytest.approx(exact, abs=0.06)
        # the capped approximation is an upper envelope of the exact power
        approx = power_at_point(alt, H_THETA1, alt, n_units=n, plan=sim_plan, beta=0.0, corrected=True)
        assert approx >= exact - 1e-12


class TestHypothesisValidation:
    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError):
            LinearHypothesis(m=(0.0, 0.0), d=0.0)

    def test_alpha_domain(self):
        with pytest.raises(ValueError):
            LinearHypothesis(m=(0.0, 1.0), d=0.0, alpha=1.5)
