import numpy as np
import pytest

from stepstress import ModelParams, TestPlan, builtin_dataset, fit_mdpde


@pytest.fixture(scope="session")
def sim_plan():
    """Two-level plan: x (35, 45), changes at 25 and 70, 11 inspections, N=180."""
    return TestPlan(
        stress_levels=(35.0, 45.0),
        change_times=(25.0, 70.0),
        inspection_times=(10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 60.0, 70.0),
        use_stress=25.0,
        n_units=180,
    )


@pytest.fixture(scope="session")
def sim_params():
    return ModelParams(0.003, 0.03)


@pytest.fixture(scope="session")
def conditioned_plan():
    """Stresses near zero keep (theta0, theta1) only mildly correlated."""
    return TestPlan(
        stress_levels=(0.5, 2.0),
        change_times=(8.0, 20.0),
        inspection_times=(2.0, 4.0, 6.0, 8.0, 11.0, 14.0, 17.0, 20.0),
        use_stress=0.2,
        n_units=100,
    )


@pytest.fixture(scope="session")
def conditioned_params():
    return ModelParams(0.05, 0.4)


@pytest.fixture(scope="session")
def electronic():
    return builtin_dataset("electronic")


@pytest.fixture(scope="session")
def lightbulbs():
    return builtin_dataset("lightbulbs")


@pytest.fixture(scope="session")
def electronic_mle(electronic):
    fit = fit_mdpde(electronic.counts_array(), electronic.plan, 0.0)
    assert fit.converged
    return fit


@pytest.fixture(scope="session")
def lightbulbs_mle(lightbulbs):
    fit = fit_mdpde(lightbulbs.counts_array(), lightbulbs.plan, 0.0)
    assert fit.converged
    return fit


def random_plan(rng, max_levels=3, min_levels=1):
    """Random well-formed plan with moderate rates in mind.

    Tests that invert information matrices need min_levels=2: a single-level
    plan cannot identify both parameters.
    """
    k = int(rng.integers(min_levels, max_levels + 1))
    x = np.sort(rng.uniform(1.0, 60.0, size=k))
    while np.any(np.diff(x) < 0.5):
        x = np.sort(rng.uniform(1.0, 60.0, size=k))
    tau = np.sort(rng.uniform(5.0, 100.0, size=k))
    while np.any(np.diff(tau) < 2.0):
        tau = np.sort(rng.uniform(5.0, 100.0, size=k))
    extra = rng.uniform(0.5, tau[-1] - 0.5, size=int(rng.integers(1, 5)))
    t = np.unique(np.concatenate([tau, extra]))
    t = t[t > 0]
    return TestPlan(
        stress_levels=tuple(x),
        change_times=tuple(tau),
        inspection_times=tuple(t),
        use_stress=float(rng.uniform(0.2, x[0])),
        n_units=int(rng.integers(20, 400)),
    )


def random_params(rng, plan):
    """Parameters keeping every cell comfortably away from under/overflow."""
    theta1 = float(rng.uniform(-0.04, 0.04))
    x_top = plan.stress_levels[-1]
    t_end = plan.inspection_times[-1]
    lam_target = float(rng.uniform(0.2, 3.0)) / t_end
    theta0 = lam_target * np.exp(-theta1 * x_top)
    return ModelParams(theta0, theta1)
