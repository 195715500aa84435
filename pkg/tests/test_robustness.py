import math

import numpy as np
import pytest

from stepstress import (
    FitConfig,
    LinearHypothesis,
    ModelParams,
    cell_probabilities,
    fit_mdpde,
    if_divergence_scan,
    if_estimator,
    if_ztest,
    info_matrices,
)
from conftest import random_params, random_plan


def refit_derivative(params, plan, beta, cell, eps=1e-4):
    """Definitional IF oracle: contaminate the model vector and refit.

    (theta_hat(p_eps) - theta_hat(pi)) / eps with p_eps = (1-eps) pi + eps
    on the contaminated cell; the clean fit recovers params exactly.
    """
    pi = cell_probabilities(params, plan)
    p_eps = (1 - eps) * pi
    p_eps[cell - 1] += eps
    cfg = FitConfig(beta=beta, initial_params=params, gradient_tolerance=1e-12)
    fit = fit_mdpde(p_eps * plan.n_units, plan, cfg)
    assert fit.converged
    return (fit.params_hat.as_array() - params.as_array()) / eps


class TestIfEstimator:
    def test_model_average_is_zero(self, sim_plan, sim_params):
        pi = cell_probabilities(sim_params, sim_plan)
        for beta in (0.0, 0.5, 1.0):
            total = sum(
                pi[j - 1] * if_estimator(j, sim_params, sim_plan, beta)
                for j in range(1, sim_plan.n_cells + 1)
            )
            assert np.all(np.abs(total) < 1e-10)

    def test_matches_refit_derivative_on_simulation_setup(self, sim_plan, sim_params):
        value = if_estimator(3, sim_params, sim_plan, 0.5)
        oracle = refit_derivative(sim_params, sim_plan, 0.5, 3)
        assert np.linalg.norm(value - oracle) / np.linalg.norm(oracle) < 1e-2

    def test_matches_refit_derivative_random_scenarios(self):
        rng = np.random.default_rng(61)
        checked = 0
        while checked < 20:
            plan = random_plan(rng, min_levels=2)
            params = random_params(rng, plan)
            try:
                info_matrices(params, plan, 0.0)
            except Exception:
                continue
            beta = float(rng.choice([0.0, 0.25, 0.5, 1.0]))
            cell = int(rng.integers(1, plan.n_cells + 1))
            value = if_estimator(cell, params, plan, beta)
            if np.linalg.norm(value) < 1e-8:
                continue
            oracle = refit_derivative(params, plan, beta, cell)
            assert np.linalg.norm(value - oracle) / np.linalg.norm(oracle) < 1e-2
            checked += 1

    def test_finite_for_cell_contamination_both_betas(self, sim_plan, sim_params):
        for beta in (0.0, 1.0):
            value = if_estimator(3, sim_params, sim_plan, beta)
            assert np.all(np.isfinite(value))

    def test_cell_index_validation(self, sim_plan, sim_params):
        with pytest.raises(ValueError):
            if_estimator(0, sim_params, sim_plan, 0.5)
        with pytest.raises(ValueError):
            if_estimator(sim_plan.n_cells + 1, sim_params, sim_plan, 0.5)


class TestIfZtest:
    def test_linear_in_estimator_if(self, sim_plan, sim_params):
        hyp = LinearHypothesis(m=(0.0, 1.0), d=0.03)
        beta, n = 0.5, 180
        J, K = info_matrices(sim_params, sim_plan, beta)
        Jinv = np.linalg.inv(J)
        sigma = Jinv @ K @ Jinv
        m = np.array(hyp.m)
        scale = math.sqrt(n / (m @ sigma @ m))
        for cell in (1, 3, 7, sim_plan.n_cells):
            expected = scale * float(m @ if_estimator(cell, sim_params, sim_plan, beta))
            assert if_ztest(cell, sim_params, sim_plan, beta, hyp, n) == pytest.approx(
                expected, rel=1e-12
            )

    def test_zero_when_orthogonal_to_m(self, sim_plan, sim_params):
        beta = 0.5
        cell = 3
        est_if = if_estimator(cell, sim_params, sim_plan, beta)
        orth = (est_if[1], -est_if[0])
        hyp = LinearHypothesis(m=orth, d=0.0)
        assert if_ztest(cell, sim_params, sim_plan, beta, hyp, 180) == pytest.approx(0.0, abs=1e-9)


class TestIfDivergenceScan:
    def test_unbounded_at_beta_zero_time_scan(self, sim_plan, sim_params):
        grid = np.geomspace(100.0, 1e6, 40)
        curve = if_divergence_scan(sim_params, sim_plan, 0.0, "inspection_time", grid)
        assert curve[:, 1:].max() > 1e6

    def test_bounded_decaying_at_positive_beta_time_scan(self, sim_plan, sim_params):
        grid = np.geomspace(100.0, 1e6, 40)
        curve = if_divergence_scan(sim_params, sim_plan, 0.5, "inspection_time", grid)
        assert np.all(np.isfinite(curve))
        for col in (1, 2):
            peak = int(np.argmax(curve[:, col]))
            assert peak < len(grid) // 4  # finite plateau is attained early
            assert np.all(np.diff(curve[peak:, col]) <= 0)  # monotone tail
            assert curve[-1, col] < 1e-12 * curve[peak, col]

    def test_dichotomy_growth_rates(self, sim_plan, sim_params):
        # beta = 0 grows by more than 10x per decade; beta > 0 shrinks
        grid = np.array([1e3, 1e4, 1e5, 1e6])
        flat = if_divergence_scan(sim_params, sim_plan, 0.0, "inspection_time", grid)
        for col in (1, 2):
            ratios = flat[1:, col] / flat[:-1, col]
            assert np.all(ratios > 10.0)
        for beta in (0.2, 0.4, 0.6, 0.8, 1.0):
            curve = if_divergence_scan(sim_params, sim_plan, beta, "inspection_time", grid)
            for col in (1, 2):
                assert curve[1, col] < curve[0, col]
                assert np.all(np.diff(curve[:, col]) <= 0)  # underflows to exact 0

    def test_zero_theta1_small_time_finite(self, sim_plan):
        params = ModelParams(0.01, 0.0)
        grid = np.linspace(71.0, 200.0, 20)
        curve = if_divergence_scan(params, sim_plan, 0.0, "inspection_time", grid)
        assert np.all(np.isfinite(curve))

    def test_stress_scan_dichotomy_for_positive_theta1(self, sim_plan, sim_params):
        grid = np.linspace(50.0, 320.0, 28)
        diverging = if_divergence_scan(sim_params, sim_plan, 0.0, "stress_level", grid)
        bounded = if_divergence_scan(sim_params, sim_plan, 0.5, "stress_level", grid)
        assert diverging[-1, 1:].max() > 100 * diverging[0, 1:].max()
        assert bounded[:, 1:].max() < 10 * bounded[0, 1:].max()

    def test_stress_scan_theta0_component_bounded_for_negative_theta1(self, sim_plan):
        # lowered rates at high stress: the rate-scale component stays finite
        params = ModelParams(0.05, -0.02)
        grid = np.linspace(50.0, 400.0, 30)
        curve = if_divergence_scan(params, sim_plan, 0.0, "stress_level", grid)
        assert np.all(np.isfinite(curve[:, 1]))
        assert curve[:, 1].max() < 100 * curve[0, 1]

    def test_grid_validation(self, sim_plan, sim_params):
        with pytest.raises(ValueError, match="grid"):
            if_divergence_scan(sim_params, sim_plan, 0.5, "inspection_time", None)
        with pytest.raises(ValueError, match="exceed"):
            if_divergence_scan(sim_params, sim_plan, 0.5, "inspection_time", np.array([10.0, 20.0]))
        with pytest.raises(ValueError, match="axis"):
            if_divergence_scan(sim_params, sim_plan, 0.5, "nonsense", np.array([100.0, 200.0]))

    def test_csv_shape(self, sim_plan, sim_params):
        grid = np.linspace(75.0, 100.0, 5)
        curve = if_divergence_scan(sim_params, sim_plan, 0.3, "inspection_time", grid)
        assert curve.shape == (5, 3)
        assert np.allclose(curve[:, 0], grid)
