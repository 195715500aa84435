"""Robust inference for step-stress life tests of non-destructive one-shot devices.

Interval-censored failure counts from a step-stress accelerated life test are
modeled as a multinomial over the inspection intervals, with cell
probabilities driven by a cumulative-exposure exponential lifetime whose rate
is log-linear in stress.  Estimation minimizes the density power divergence
(DPD) with tuning parameter beta >= 0: beta = 0 is the MLE, larger beta buys
robustness against outlying cells at a small efficiency cost.
"""

from .model import (
    TestPlan,
    ModelParams,
    hazard_rate,
    exposure_shift,
    exposure_shift_gradient_term,
    lifetime_cdf,
    lifetime_pdf,
    lifetime_reliability,
    cell_probabilities,
    cdf_gradient,
    score_matrix,
)
from .divergence import dpd_loss, kl_loss, estimating_residual
from .estimation import (
    EstimationError,
    FitConfig,
    FitResult,
    fit_mdpde,
    info_matrices,
    compute_sandwich,
    asymptotic_covariance,
    param_confidence_interval,
    confidence_region,
    relative_efficiency,
)
from .lifetime import (
    LifetimeEstimate,
    reliability_at_use,
    quantile_at_use,
    mean_lifetime_at_use,
    delta_se_reliability,
    delta_se_quantile,
    delta_se_mean,
    direct_ci,
    transformed_ci,
    estimate_reliability,
    estimate_quantile,
    estimate_mean_lifetime,
)
from .hypothesis import (
    LinearHypothesis,
    TestReport,
    z_statistic,
    z_test,
    wald_chi2_statistic,
    wald_test,
    power_contiguous,
    power_at_point,
)
from .robustness import if_estimator, if_ztest, if_divergence_scan
from .simulation import (
    ContaminationSpec,
    StudyConfig,
    StudyError,
    contaminated_probabilities,
    replication_rng,
    sample_counts,
    rmse_and_rho,
    run_estimator_study,
    run_level_power_study,
)
from .tuning import TuningConfig, TuningResult, mse_hat, select_beta
from .datasets import Dataset, builtin_dataset, load_dataset

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
