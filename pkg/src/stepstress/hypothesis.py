"""Wald-type tests of linear hypotheses on (theta0, theta1).

The scalar null m^T theta = d is tested with the Z statistic

    Z = sqrt(N) (m^T Sigma m)^{-1/2} (m^T theta_hat - d),

standard normal under the null, where Sigma = J^{-1} K J^{-1} is the per-unit
sandwich evaluated at the (unrestricted) fit.  The matrix version
M theta = d (M of full row rank r <= 2) uses the quadratic form with a
chi-square(r) null.  Normal probabilities go through the C library's erf/erfc
(accurate to ~1e-15).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as _chi2

from .estimation import FitResult, compute_sandwich, normal_quantile
from .model import ModelParams, TestPlan

__all__ = [
    "LinearHypothesis",
    "TestReport",
    "z_statistic",
    "z_test",
    "wald_chi2_statistic",
    "wald_test",
    "power_contiguous",
    "power_at_point",
]


def normal_cdf(x: float) -> float:
    """Phi(x) = erfc(-x / sqrt 2) / 2; erfc keeps the tails accurate."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class LinearHypothesis:
    """H0: m^T theta = d, tested at significance level alpha."""

    m: tuple[float, float]
    d: float
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "m", (float(self.m[0]), float(self.m[1])))
        object.__setattr__(self, "d", float(self.d))
        if self.m == (0.0, 0.0):
            raise ValueError("m must be nonzero")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")

    def m_array(self) -> np.ndarray:
        return np.array(self.m)


@dataclass(frozen=True)
class TestReport:
    statistic: float
    p_value: float
    alpha: float
    reject: bool
    m: list
    d: list | float
    beta: float
    n_units: int
    df: int | None = None

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "hypothesis": {"m": self.m, "d": self.d},
            "beta": self.beta,
            "N": self.n_units,
            **({"df": self.df} if self.df is not None else {}),
        }


def _sandwich_of(source, plan: TestPlan | None, beta: float | None) -> tuple[np.ndarray, int | None]:
    """Per-unit sandwich from a FitResult or from raw parameters."""
    if isinstance(source, FitResult):
        if not np.all(np.isfinite(source.covariance)):
            raise ValueError("fit has no valid covariance (singular J)")
        return source.covariance, source.n_units
    if plan is None or beta is None:
        raise ValueError("plan and beta are required when passing raw parameters")
    return compute_sandwich(source, plan, beta), None


def z_statistic(fit: FitResult, hyp: LinearHypothesis) -> float:
    """Z-type statistic for the scalar linear hypothesis at the fitted MDPDE."""
    sigma, n = _sandwich_of(fit, None, None)
    m = hyp.m_array()
    denom = float(m @ sigma @ m)
    if not denom > 0:
        raise ValueError("m^T Sigma m is not positive")
    theta = fit.params_hat.as_array()
    return math.sqrt(n / denom) * float(m @ theta - hyp.d)


def z_test(fit: FitResult, hyp: LinearHypothesis) -> TestReport:
    """Two-sided Z test; rejects when |Z| exceeds the normal alpha/2 point."""
    z = z_statistic(fit, hyp)
    p = 2.0 * normal_cdf(-abs(z))
    return TestReport(
        statistic=z,
        p_value=p,
        alpha=hyp.alpha,
        reject=abs(z) > normal_quantile(1 - hyp.alpha / 2),
        m=list(hyp.m),
        d=hyp.d,
        beta=fit.beta,
        n_units=fit.n_units,
    )


def wald_chi2_statistic(fit: FitResult, m_matrix, d_vector) -> float:
    """Quadratic Wald statistic N (M theta - d)^T (M Sigma M^T)^{-1} (M theta - d)."""
    M = np.atleast_2d(np.asarray(m_matrix, dtype=float))
    d = np.atleast_1d(np.asarray(d_vector, dtype=float))
    r = M.shape[0]
    if M.shape != (r, 2) or d.shape != (r,) or r > 2:
        raise ValueError("M must be r x 2 with r <= 2 and d of length r")
    if np.linalg.matrix_rank(M) < r:
        raise ValueError("M must have full row rank")
    sigma, n = _sandwich_of(fit, None, None)
    middle = M @ sigma @ M.T
    diff = M @ fit.params_hat.as_array() - d
    try:
        solved = np.linalg.solve(middle, diff)
    except np.linalg.LinAlgError:
        raise ValueError("M Sigma M^T is singular") from None
    return float(n * diff @ solved)


def wald_test(fit: FitResult, m_matrix, d_vector, alpha: float = 0.05) -> TestReport:
    """Chi-square(r) test of M theta = d; rejects above the upper alpha point."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    M = np.atleast_2d(np.asarray(m_matrix, dtype=float))
    stat = wald_chi2_statistic(fit, m_matrix, d_vector)
    r = M.shape[0]
    return TestReport(
        statistic=stat,
        p_value=float(_chi2.sf(stat, df=r)),
        alpha=alpha,
        reject=stat > float(_chi2.ppf(1 - alpha, df=r)),
        m=[list(row) for row in M],
        d=list(np.atleast_1d(np.asarray(d_vector, dtype=float))),
        beta=fit.beta,
        n_units=fit.n_units,
        df=r,
    )


def _power_shift_to_probability(z_alpha2: float, shift: float) -> float:
    return min(1.0, 2.0 * (1.0 - normal_cdf(z_alpha2 - shift)))


def power_contiguous(
    source, hyp: LinearHypothesis, ell,
    plan: TestPlan | None = None, beta: float | None = None,
) -> float:
    """Asymptotic power against the local alternative theta + ell / sqrt(N).

    ell is the sqrt(N)-scaled offset (a raw parameter offset delta corresponds
    to ell = sqrt(N) * delta).  source is a FitResult, or a ModelParams with
    plan and beta supplied.  Returns
    2 [1 - Phi(z_{alpha/2} - (m^T Sigma m)^{-1/2} m^T ell)], capped at 1
    (the two-sided approximation can otherwise exceed it).
    """
    sigma, _ = _sandwich_of(source, plan, beta)
    m = hyp.m_array()
    denom = float(m @ sigma @ m)
    if not denom > 0:
        raise ValueError("m^T Sigma m is not positive")
    shift = float(m @ np.asarray(ell, dtype=float)) / math.sqrt(denom)
    return _power_shift_to_probability(normal_quantile(1 - hyp.alpha / 2), shift)


def power_at_point(
    source, hyp: LinearHypothesis, theta_star: ModelParams, n_units: int | None = None,
    plan: TestPlan | None = None, beta: float | None = None, corrected: bool = False,
) -> float:
    """Approximate power at a fixed alternative theta_star with m^T theta* != d.

    The default evaluates 2 [1 - Phi(1 - sqrt(N) (m^T Sigma m)^{-1/2}
    (m^T theta* - d))].  corrected=True replaces the fixed offset 1 with
    z_{alpha/2}, which is the form consistent with the contiguous-alternative
    approximation and with Monte-Carlo power.  Both are capped at 1.
    """
    sigma, n = _sandwich_of(source, plan, beta)
    if n_units is not None:
        n = int(n_units)
    if n is None:
        raise ValueError("n_units is required when passing raw parameters")
    m = hyp.m_array()
    denom = float(m @ sigma @ m)
    if not denom > 0:
        raise ValueError("m^T Sigma m is not positive")
    shift = math.sqrt(n / denom) * float(m @ theta_star.as_array() - hyp.d)
    offset = normal_quantile(1 - hyp.alpha / 2) if corrected else 1.0
    return min(1.0, 2.0 * (1.0 - normal_cdf(offset - shift)))
