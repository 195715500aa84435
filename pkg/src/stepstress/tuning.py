"""Data-driven choice of the DPD tuning parameter.

The Warwick-Jones criterion estimates the MSE of the MDPDE at each beta as a
squared bias against a pilot estimate plus the trace of the sandwich
covariance over N.  Iterating the pilot (replace it by the winner and rerun)
makes the final choice essentially pilot-independent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimation import FitConfig, FitResult, fit_mdpde
from .model import ModelParams, TestPlan

__all__ = ["TuningConfig", "TuningResult", "mse_hat", "select_beta"]


@dataclass(frozen=True)
class TuningConfig:
    """Grid, pilot and stopping rule for the tuning-parameter search.

    The stopping rule compares successive pilot estimates in (log theta0,
    theta1) coordinates, which puts both parameters on comparable scales.
    """

    pilot_beta: float = 0.5
    grid: tuple[float, ...] = tuple(np.linspace(0.0, 1.0, 100))
    convergence_rate: float = 1e-3
    max_rounds: int = 50

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(b) for b in self.grid))
        if not self.grid or any(b < 0 or b > 1 for b in self.grid):
            raise ValueError("grid must be nonempty with values in [0, 1]")
        if not 0 <= self.pilot_beta <= 1:
            raise ValueError("pilot_beta must be in [0, 1]")
        if self.convergence_rate <= 0:
            raise ValueError("convergence_rate must be > 0")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass(frozen=True)
class TuningResult:
    beta_star: float
    fit: FitResult
    rounds: int
    converged: bool
    trace: tuple[tuple, ...] = field(default=())
    """Per-round records (round, pilot_log_theta0, pilot_theta1, beta_star, mse_min)."""
    skipped: tuple[tuple, ...] = field(default=())
    """Grid fits that failed to converge, as (round, beta)."""


def mse_hat(fit_beta: FitResult, pilot: ModelParams, n_units: int | None = None) -> float:
    """Estimated MSE at one beta: squared distance to the pilot plus variance.

    (theta_hat - theta_P)^T (theta_hat - theta_P)
        + trace(J^{-1} K J^{-1}) / N, everything at the fitted parameters.
    """
    if not fit_beta.converged:
        raise ValueError("mse_hat needs a converged fit")
    n = fit_beta.n_units if n_units is None else int(n_units)
    d = fit_beta.params_hat.as_array() - pilot.as_array()
    variance = float(np.trace(fit_beta.covariance)) / n
    return float(d @ d) + variance


def _eta_distance(a: ModelParams, b: ModelParams) -> float:
    return math.hypot(a.log_theta0 - b.log_theta0, a.theta1 - b.theta1)


def select_beta(counts, plan: TestPlan, config: TuningConfig | None = None) -> TuningResult:
    """Iterated Warwick-Jones selection of beta over the grid.

    Each round fits every grid beta (cached, warm-started from the current
    pilot), picks the beta with smallest estimated MSE against the pilot
    (smallest beta wins ties), and replaces the pilot by that fit; rounds
    stop when the winning estimate moves less than the convergence rate.
    Grid fits that fail to converge are skipped with a warning entry in the
    trace; exceeding max_rounds returns converged=False.
    """
    config = config or TuningConfig()
    pilot_fit = fit_mdpde(counts, plan, FitConfig(beta=config.pilot_beta))
    if not pilot_fit.converged:
        raise ValueError("pilot fit did not converge")
    pilot = pilot_fit.params_hat

    fits: dict[float, FitResult] = {config.pilot_beta: pilot_fit}
    trace: list[tuple] = []
    skipped: list[tuple] = []
    best_beta = best_fit = None
    for round_no in range(1, config.max_rounds + 1):
        best_beta = best_fit = None
        best_mse = math.inf
        for b in config.grid:
            fit = fits.get(b)
            if fit is None:
                fit = fit_mdpde(counts, plan, FitConfig(beta=b, initial_params=pilot))
                fits[b] = fit
            if not fit.converged:
                skipped.append((round_no, b))
                continue
            m = mse_hat(fit, pilot)
            if m < best_mse - 1e-12:  # smallest beta wins near-ties
                best_mse, best_beta, best_fit = m, b, fit
        if best_fit is None:
            raise ValueError("no grid fit converged")
        trace.append((round_no, pilot.log_theta0, pilot.theta1, best_beta, best_mse))
        if _eta_distance(best_fit.params_hat, pilot) < config.convergence_rate:
            return TuningResult(best_beta, best_fit, round_no, True, tuple(trace), tuple(skipped))
        pilot = best_fit.params_hat
    return TuningResult(best_beta, best_fit, config.max_rounds, False, tuple(trace), tuple(skipped))
