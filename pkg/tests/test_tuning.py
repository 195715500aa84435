import numpy as np
import pytest

from stepstress import (
    ContaminationSpec,
    ModelParams,
    StudyConfig,
    TuningConfig,
    cell_probabilities,
    contaminated_probabilities,
    fit_mdpde,
    mse_hat,
    select_beta,
)
from stepstress.simulation import replication_rng, sample_counts

SMALL_GRID = TuningConfig(grid=tuple(np.linspace(0.0, 1.0, 21)))


class TestMseHat:
    def test_vanishes_at_pilot_for_huge_n(self, electronic, electronic_mle):
        value = mse_hat(electronic_mle, electronic_mle.params_hat, n_units=10**15)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_bias_term_is_squared_distance(self, electronic_mle):
        pilot = ModelParams(electronic_mle.params_hat.theta0 * 2.0, 0.05)
        base = mse_hat(electronic_mle, electronic_mle.params_hat)
        shifted = mse_hat(electronic_mle, pilot)
        d = electronic_mle.params_hat.as_array() - pilot.as_array()
        assert shifted - base == pytest.approx(float(d @ d), rel=1e-12)

    def test_hand_recomputation_on_electronic(self, electronic, electronic_mle):
        pilot = fit_mdpde(electronic.counts_array(), electronic.plan, 0.5)
        value = mse_hat(electronic_mle, pilot.params_hat)
        d = electronic_mle.params_hat.as_array() - pilot.params_hat.as_array()
        expected = float(d @ d) + float(np.trace(electronic_mle.covariance)) / 100
        assert value == pytest.approx(expected, rel=1e-12)
        assert value > 0

    def test_requires_converged_fit(self, sim_plan, sim_params):
        counts = np.zeros(sim_plan.n_cells)
        counts[0] = sim_plan.n_units
        bad = fit_mdpde(counts, sim_plan, 0.5)
        with pytest.raises(ValueError, match="converged"):
            mse_hat(bad, sim_params)


class TestSelectBeta:
    def test_electronic_selection_is_near_zero(self, electronic):
        # the estimated MSE on this data is minimized at the smallest grid
        # point: the variance trace rises monotonically with beta while the
        # bias-to-pilot term is orders of magnitude smaller
        result = select_beta(electronic.counts_array(), electronic.plan)
        assert result.converged
        assert result.beta_star <= 0.05
        assert result.rounds <= 50

    def test_lightbulbs_selection(self, lightbulbs):
        result = select_beta(lightbulbs.counts_array(), lightbulbs.plan)
        assert result.converged
        assert result.beta_star == pytest.approx(0.12, abs=0.02)

    def test_pilot_independence_on_clean_data(self, sim_plan, sim_params):
        pi = cell_probabilities(sim_params, sim_plan)
        counts = sample_counts(pi, 180, replication_rng(81, 0))
        stars = []
        for pilot in (0.0, 0.5, 1.0):
            config = TuningConfig(pilot_beta=pilot, grid=SMALL_GRID.grid)
            result = select_beta(counts, sim_plan, config)
            assert result.converged
            stars.append(result.beta_star)
        step = SMALL_GRID.grid[1] - SMALL_GRID.grid[0]
        assert max(stars) - min(stars) <= step + 1e-12

    def test_trace_records_rounds(self, lightbulbs):
        result = select_beta(lightbulbs.counts_array(), lightbulbs.plan, SMALL_GRID)
        assert len(result.trace) == result.rounds
        round_numbers = [row[0] for row in result.trace]
        assert round_numbers == list(range(1, result.rounds + 1))

    def test_contamination_pushes_beta_up(self, sim_plan, sim_params):
        # median selected beta is nondecreasing across contamination rates
        medians = []
        for eps in (0.0, 0.2, 0.4):
            if eps == 0.0:
                pi = cell_probabilities(sim_params, sim_plan)
            else:
                spec = ContaminationSpec.scale_theta0(sim_params, 3, eps)
                pi = contaminated_probabilities(sim_params, spec, sim_plan)
            stars = []
            for r in range(200):
                counts = sample_counts(pi, 180, replication_rng(82, r))
                result = select_beta(counts, sim_plan, SMALL_GRID)
                if result.converged:
                    stars.append(result.beta_star)
            assert len(stars) >= 195
            medians.append(float(np.median(stars)))
        assert medians[0] <= medians[1] <= medians[2]
        assert medians[2] > medians[0]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TuningConfig(grid=())
        with pytest.raises(ValueError):
            TuningConfig(grid=(0.0, 1.5))
        with pytest.raises(ValueError):
            TuningConfig(convergence_rate=0.0)
