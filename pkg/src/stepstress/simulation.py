"""Multinomial data generation, cell contamination, and study runners.

Contamination follows the outlying-cell mechanism: one interval's failure
probability is replaced by G_theta(t_j) - G_theta_tilde(t_{j-1}) for a
weakened parameter theta_tilde <= theta (componentwise), and the vector is
renormalized.  The contamination rate eps is the relative reduction of the
contaminated coordinate, theta_tilde_i = (1 - eps) theta_i.

Randomness uses the counter-based Philox generator keyed by (seed, r) so
replication r is an independent stream regardless of execution order, and
multinomial draws use the sequential conditional-binomial method.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .estimation import FitConfig, fit_mdpde, normal_quantile
from .hypothesis import LinearHypothesis, z_statistic
from .model import ModelParams, TestPlan, cell_probabilities, lifetime_cdf

__all__ = [
    "ContaminationSpec",
    "StudyConfig",
    "StudyError",
    "StudyResult",
    "contaminated_probabilities",
    "replication_rng",
    "sample_counts",
    "rmse_and_rho",
    "run_estimator_study",
    "run_level_power_study",
]

MAX_FAILURE_FRACTION = 0.01  # studies fail loudly past this non-convergence share


class StudyError(RuntimeError):
    """Raised when too many replications fail to converge for valid aggregates."""


@dataclass(frozen=True)
class ContaminationSpec:
    """One contaminated cell: index, weakened parameter, rate and coordinate.

    The weakened parameter must satisfy theta_tilde <= theta componentwise,
    which guarantees the contaminated cell probability stays positive.
    coordinate labels which parameter the rate reduces ("theta0" or
    "theta1"), so rate-0 grid anchors keep their scenario name.
    """

    cell_index: int
    contaminated_params: ModelParams
    rate: float
    coordinate: str = "theta0"

    def __post_init__(self):
        if not 0 <= self.rate < 1:
            raise ValueError("contamination rate must be in [0, 1)")
        if self.coordinate not in ("theta0", "theta1"):
            raise ValueError("coordinate must be 'theta0' or 'theta1'")

    @classmethod
    def scale_theta0(cls, params: ModelParams, cell_index: int, rate: float) -> "ContaminationSpec":
        """Contaminate by reducing theta0 to (1 - rate) theta0."""
        return cls(cell_index, ModelParams((1 - rate) * params.theta0, params.theta1), rate, "theta0")

    @classmethod
    def scale_theta1(cls, params: ModelParams, cell_index: int, rate: float) -> "ContaminationSpec":
        """Contaminate by reducing theta1 to (1 - rate) theta1."""
        return cls(cell_index, ModelParams(params.theta0, (1 - rate) * params.theta1), rate, "theta1")


def contaminated_probabilities(
    params: ModelParams, spec: ContaminationSpec, plan: TestPlan
) -> np.ndarray:
    """Cell probabilities with one cell switched to its contaminated value.

    The contaminated cell j (2 <= j <= L) becomes G_theta(t_j) -
    G_theta_tilde(t_{j-1}); the whole vector is then renormalized to sum 1.
    """
    j = spec.cell_index
    if not 2 <= j <= plan.L:
        raise ValueError(f"contaminated cell must be an interior interval 2..{plan.L}")
    tt = spec.contaminated_params
    if tt.theta0 > params.theta0 or tt.theta1 > params.theta1:
        raise ValueError("contaminated parameters must not exceed the clean ones")
    pi = cell_probabilities(params, plan).copy()
    t = plan.inspection_times
    pi[j - 1] = lifetime_cdf(params, plan, t[j - 1]) - lifetime_cdf(tt, plan, t[j - 2])
    if pi[j - 1] <= 0:
        raise ValueError("contaminated cell probability is not positive")
    return pi / pi.sum()


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Independent Philox stream for one replication, keyed by (seed, r)."""
    return np.random.Generator(np.random.Philox(key=(np.uint64(seed), np.uint64(replication))))


def sample_counts(probs, n_units: int, rng: np.random.Generator) -> np.ndarray:
    """One multinomial draw via sequential conditional binomials."""
    probs = np.asarray(probs, dtype=float)
    if n_units < 1:
        raise ValueError("n_units must be >= 1")
    out = np.zeros(len(probs), dtype=np.int64)
    remaining = int(n_units)
    mass = 1.0
    for j in range(len(probs) - 1):
        if remaining == 0:
            break
        p = probs[j] / mass if mass > 0 else 1.0
        out[j] = rng.binomial(remaining, min(max(p, 0.0), 1.0))
        remaining -= out[j]
        mass -= probs[j]
    out[-1] = remaining
    return out


def rmse_and_rho(estimates: dict, true_params: ModelParams, mle_key: float = 0.0):
    """Root mean squared error per beta and its ratio-to-MLE measure.

    estimates maps beta -> sequence of fitted ModelParams (or (theta0, theta1)
    pairs).  rho(beta) = RMSE(beta) / RMSE(MLE) - 1, negative when the robust
    estimator beats the MLE.
    """
    if mle_key not in estimates:
        raise ValueError("need the MLE estimates (beta = 0) for the rho baseline")
    truth = true_params.as_array()
    rmse = {}
    for beta, ests in estimates.items():
        if len(ests) == 0:
            raise ValueError(f"no estimates for beta={beta}")
        arr = np.array(
            [e.as_array() if isinstance(e, ModelParams) else np.asarray(e, dtype=float) for e in ests]
        )
        rmse[beta] = float(np.sqrt(np.mean(np.sum((arr - truth) ** 2, axis=1))))
    base = rmse[mle_key]
    rho = {
        beta: (r / base - 1.0) if base > 0 else (0.0 if r == 0.0 else math.inf)
        for beta, r in rmse.items()
    }
    return rmse, rho


@dataclass(frozen=True)
class StudyConfig:
    """Grid of a Monte-Carlo study over contamination specs and betas.

    alt_params switches the level study to a power study (data generated at
    the alternative).  sample_sizes, when given, scans N instead of the
    contamination rate (the first spec fixes the contamination).
    """

    plan: TestPlan
    true_params: ModelParams
    betas: tuple[float, ...]
    contamination_grid: tuple[ContaminationSpec | None, ...]
    replications: int
    seed: int
    alt_params: ModelParams | None = None
    sample_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "contamination_grid", tuple(self.contamination_grid))
        if self.sample_sizes is not None:
            object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.betas:
            raise ValueError("betas must be nonempty")
        if not self.contamination_grid:
            raise ValueError("contamination grid must be nonempty (use None for no contamination)")


@dataclass(frozen=True)
class StudyRow:
    scenario: str
    beta: float
    epsilon_or_n: float
    metric: str
    value: float
    replications: int
    failures: int

    HEADER = ("scenario", "beta", "epsilon_or_N", "metric", "value", "replications", "failures")

    def as_tuple(self):
        return (
            self.scenario, self.beta, self.epsilon_or_n, self.metric,
            self.value, self.replications, self.failures,
        )


@dataclass
class StudyResult:
    rows: list[StudyRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(StudyRow.HEADER)
        for row in self.rows:
            writer.writerow(row.as_tuple())
        return buf.getvalue()

    def value(self, scenario: str, beta: float, epsilon_or_n: float, metric: str) -> float:
        for row in self.rows:
            if (
                row.scenario == scenario
                and row.beta == beta
                and row.epsilon_or_n == epsilon_or_n
                and row.metric == metric
            ):
                return row.value
        raise KeyError((scenario, beta, epsilon_or_n, metric))


def _grid_point(spec: ContaminationSpec | None, generating: ModelParams, plan: TestPlan):
    """(rate, scenario, sampling probabilities) for one grid entry."""
    if spec is None:
        return 0.0, "none", cell_probabilities(generating, plan)
    scenario = f"{spec.coordinate}-contamination"
    if spec.rate == 0.0:
        return 0.0, scenario, cell_probabilities(generating, plan)
    return spec.rate, scenario, contaminated_probabilities(generating, spec, plan)


def _check_failures(total_fits: int, failures: int):
    if failures > MAX_FAILURE_FRACTION * total_fits:
        raise StudyError(
            f"{failures} of {total_fits} fits did not converge "
            f"(more than {MAX_FAILURE_FRACTION:.0%}); aggregates would be unreliable"
        )


def run_estimator_study(config: StudyConfig) -> StudyResult:
    """RMSE and rho of the MDPDE across the contamination grid.

    Each replication draws one dataset per grid point and fits every beta on
    it.  Non-convergent fits are counted, reported in the output rows and
    excluded from the aggregates; the study aborts if they exceed
    MAX_FAILURE_FRACTION overall.
    """
    if 0.0 not in config.betas:
        raise ValueError("the estimator study needs beta = 0 for the rho baseline")
    result = StudyResult()
    total_fits = failures_total = 0
    for spec in config.contamination_grid:
        eps, scenario, probs = _grid_point(spec, config.true_params, config.plan)
        estimates: dict[float, list] = {b: [] for b in config.betas}
        failures = {b: 0 for b in config.betas}
        for r in range(config.replications):
            rng = replication_rng(config.seed, r)
            counts = sample_counts(probs, config.plan.n_units, rng)
            for b in config.betas:
                fit = fit_mdpde(counts, config.plan, b)
                total_fits += 1
                if fit.converged:
                    estimates[b].append(fit.params_hat)
                else:
                    failures[b] += 1
                    failures_total += 1
        if any(len(v) == 0 for v in estimates.values()):
            raise StudyError(f"all fits failed at eps={eps} for some beta; cannot aggregate")
        rmse, rho = rmse_and_rho(estimates, config.true_params)
        for b in config.betas:
            used = len(estimates[b])
            result.rows.append(StudyRow(scenario, b, eps, "rmse", rmse[b], used, failures[b]))
            result.rows.append(StudyRow(scenario, b, eps, "rho", rho[b], used, failures[b]))
    _check_failures(total_fits, failures_total)
    return result


def run_level_power_study(config: StudyConfig, hyp: LinearHypothesis) -> StudyResult:
    """Empirical level (or power, with alt_params set) of the Z test.

    The level study generates data at true_params, the power study at
    alt_params; both test the same hypothesis.  With sample_sizes set, the
    scan runs over N at the first grid spec instead of over the grid.
    """
    generating = config.alt_params if config.alt_params is not None else config.true_params
    metric = "power" if config.alt_params is not None else "level"
    z_crit = normal_quantile(1 - hyp.alpha / 2)
    result = StudyResult()
    total_fits = failures_total = 0

    if config.sample_sizes:
        eps, scenario, probs = _grid_point(config.contamination_grid[0], generating, config.plan)
        grid = [(float(n), int(n), probs, scenario) for n in config.sample_sizes]
    else:
        grid = [
            (eps, config.plan.n_units, probs, scenario)
            for eps, scenario, probs in (
                _grid_point(spec, generating, config.plan) for spec in config.contamination_grid
            )
        ]

    for axis_value, n_units, probs, scenario in grid:
        rejections = {b: 0 for b in config.betas}
        used = {b: 0 for b in config.betas}
        failures = {b: 0 for b in config.betas}
        for r in range(config.replications):
            rng = replication_rng(config.seed, r)
            counts = sample_counts(probs, n_units, rng)
            for b in config.betas:
                fit = fit_mdpde(counts, config.plan, b)
                total_fits += 1
                if not fit.converged:
                    failures[b] += 1
                    failures_total += 1
                    continue
                used[b] += 1
                if abs(z_statistic(fit, hyp)) > z_crit:
                    rejections[b] += 1
        for b in config.betas:
            rate = rejections[b] / used[b] if used[b] else math.nan
            result.rows.append(
                StudyRow(scenario, b, axis_value, metric, rate, used[b], failures[b])
            )
    _check_failures(total_fits, failures_total)
    return result
