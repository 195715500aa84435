"""Reliability, quantiles and mean lifetime at use conditions, with CIs.

At a constant use stress x0 the lifetime is exponential with rate
lambda0 = theta0 exp(theta1 x0), giving

    reliability   R(t)      = exp(-lambda0 t)
    quantile      Q_{1-a}   = -log(1 - a) / lambda0   (a = failed fraction)
    mean lifetime E[T]      = 1 / lambda0.

Standard errors come from the delta method on the fitted sandwich covariance
and are returned already divided by sqrt(N), so no interval formula divides
again.  Direct Wald intervals are clipped to the natural range; transformed
intervals (logit for the reliability, log for times) respect it by
construction.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .estimation import FitResult, normal_quantile
from .model import ModelParams

__all__ = [
    "LifetimeEstimate",
    "reliability_at_use",
    "quantile_at_use",
    "mean_lifetime_at_use",
    "delta_se_reliability",
    "delta_se_quantile",
    "delta_se_mean",
    "direct_ci",
    "transformed_ci",
    "estimate_reliability",
    "estimate_quantile",
    "estimate_mean_lifetime",
    "metrics_report",
]


@dataclass(frozen=True)
class LifetimeEstimate:
    """Point estimate with its standard error and both interval flavors."""

    quantity: str
    value: float
    std_error: float
    direct_ci: tuple[float, float]
    transformed_ci: tuple[float, float]
    level: float

    def to_dict(self, stress: float, time_or_alpha: float | None) -> dict:
        return {
            "quantity": self.quantity,
            "stress": stress,
            "time_or_alpha": time_or_alpha,
            "estimate": self.value,
            "se": self.std_error,
            "direct_ci": list(self.direct_ci),
            "transformed_ci": list(self.transformed_ci),
            "level": self.level,
        }


def _lambda0(params: ModelParams, x0: float) -> float:
    return params.theta0 * math.exp(params.theta1 * x0)


def reliability_at_use(params: ModelParams, x0: float, t: float) -> float:
    """Survival probability exp(-theta0 e^{theta1 x0} t) at constant stress x0."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    return math.exp(-_lambda0(params, x0) * t)


def quantile_at_use(params: ModelParams, x0: float, alpha: float) -> float:
    """Time by which a fraction alpha of devices has failed at stress x0."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    return -math.log1p(-alpha) / _lambda0(params, x0)


def mean_lifetime_at_use(params: ModelParams, x0: float) -> float:
    """Expected lifetime exp(-theta1 x0) / theta0 at constant stress x0."""
    return math.exp(-params.theta1 * x0) / params.theta0


def _delta_se(fit: FitResult, grad: np.ndarray) -> float:
    var = float(grad @ fit.covariance @ grad) / fit.n_units
    return math.sqrt(max(var, 0.0))


def delta_se_reliability(fit: FitResult, x0: float, t: float) -> float:
    """Delta-method standard error of the estimated reliability (already / sqrt N)."""
    p = fit.params_hat
    lam0 = _lambda0(p, x0)
    R = reliability_at_use(p, x0, t)
    grad = np.array([-R * lam0 * t / p.theta0, -R * lam0 * t * x0])
    return _delta_se(fit, grad)


def delta_se_quantile(fit: FitResult, x0: float, alpha: float) -> float:
    """Delta-method standard error of the estimated quantile (already / sqrt N)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    p = fit.params_hat
    e = math.exp(-p.theta1 * x0)
    la = math.log1p(-alpha)
    grad = np.array([la * e / p.theta0**2, la * x0 * e / p.theta0])
    return _delta_se(fit, grad)


def delta_se_mean(fit: FitResult, x0: float) -> float:
    """Delta-method standard error of the estimated mean lifetime (already / sqrt N)."""
    p = fit.params_hat
    e = math.exp(-p.theta1 * x0)
    grad = np.array([-e / p.theta0**2, -x0 * e / p.theta0])
    return _delta_se(fit, grad)


def direct_ci(
    value: float,
    std_error: float,
    level: float = 0.95,
    value_range: tuple[float, float] = (0.0, math.inf),
) -> tuple[float, float]:
    """Wald interval value +/- z se, truncated to the natural range."""
    if std_error < 0:
        raise ValueError("std_error must be >= 0")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    z = normal_quantile(0.5 + level / 2)
    lo, hi = value - z * std_error, value + z * std_error
    return max(lo, value_range[0]), min(hi, value_range[1])


def transformed_ci(
    value: float, std_error: float, level: float = 0.95, kind: str = "log"
) -> tuple[float, float]:
    """Interval built on a transformed scale and mapped back.

    kind="logit" treats value as a probability (yields a subset of (0,1));
    kind="log" treats it as a positive time (yields a subset of (0,inf)).
    A degenerate probability estimate (0 or 1) has no logit; the point
    interval is returned with a warning.
    """
    if std_error < 0:
        raise ValueError("std_error must be >= 0")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    z = normal_quantile(0.5 + level / 2)
    if kind == "logit":
        if value in (0.0, 1.0):
            warnings.warn("degenerate reliability estimate; returning a point interval")
            return value, value
        if not 0 < value < 1:
            raise ValueError("logit transform needs a value in [0, 1]")
        s = math.exp(z * std_error / (value * (1 - value)))
        return value / (value + (1 - value) * s), value / (value + (1 - value) / s)
    if kind == "log":
        if value <= 0:
            raise ValueError("log transform needs a positive value")
        shift = math.exp(z * std_error / value)
        return value / shift, value * shift
    raise ValueError("kind must be 'logit' or 'log'")


def estimate_reliability(fit: FitResult, x0: float, t: float, level: float = 0.95) -> LifetimeEstimate:
    value = reliability_at_use(fit.params_hat, x0, t)
    se = delta_se_reliability(fit, x0, t)
    return LifetimeEstimate(
        quantity="reliability",
        value=value,
        std_error=se,
        direct_ci=direct_ci(value, se, level, value_range=(0.0, 1.0)),
        transformed_ci=transformed_ci(value, se, level, kind="logit"),
        level=level,
    )


def estimate_quantile(fit: FitResult, x0: float, alpha: float, level: float = 0.95) -> LifetimeEstimate:
    value = quantile_at_use(fit.params_hat, x0, alpha)
    se = delta_se_quantile(fit, x0, alpha)
    return LifetimeEstimate(
        quantity="quantile",
        value=value,
        std_error=se,
        direct_ci=direct_ci(value, se, level),
        transformed_ci=transformed_ci(value, se, level, kind="log"),
        level=level,
    )


def estimate_mean_lifetime(fit: FitResult, x0: float, level: float = 0.95) -> LifetimeEstimate:
    value = mean_lifetime_at_use(fit.params_hat, x0)
    se = delta_se_mean(fit, x0)
    return LifetimeEstimate(
        quantity="mean_lifetime",
        value=value,
        std_error=se,
        direct_ci=direct_ci(value, se, level),
        transformed_ci=transformed_ci(value, se, level, kind="log"),
        level=level,
    )


def metrics_report(entries: list[tuple[LifetimeEstimate, float, float | None]]) -> list[dict]:
    """JSON-ready rows of (estimate, stress, time-or-alpha) triples."""
    return [est.to_dict(stress, ta) for est, stress, ta in entries]
