"""Cumulative-exposure exponential lifetime model for step-stress tests.

A step-stress accelerated life test (SSALT) runs N one-shot devices at k
increasing stress levels x_1 < ... < x_k, raising the stress at pre-fixed
change times tau_1 < ... < tau_k (tau_k ends the experiment).  Device status
is only observed at inspection times t_1 < ... < t_L, so the data are the
interval-censored failure counts n_1, ..., n_L plus the survivors n_{L+1}.

Under stress x_i the lifetime is exponential with rate

    lambda_i = theta0 * exp(theta1 * x_i),

and the cumulative exposure model glues the per-level distributions together
by translating time with the shift a_{i-1}, so that the lifetime CDF is
piecewise exponential and continuous at every change time.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TestPlan",
    "ModelParams",
    "hazard_rate",
    "exposure_shift",
    "exposure_shift_gradient_term",
    "lifetime_cdf",
    "lifetime_pdf",
    "lifetime_reliability",
    "cell_probabilities",
    "cdf_gradient",
    "score_matrix",
]


@dataclass(frozen=True)
class TestPlan:
    """Design of a step-stress test.

    Times and stresses are in caller-defined units; the only requirement is
    consistency (all times in one unit, all stresses in one unit).
    Every change time must appear among the inspection times and the last
    inspection time must equal the final change time.
    """

    stress_levels: tuple[float, ...]
    change_times: tuple[float, ...]
    inspection_times: tuple[float, ...]
    use_stress: float
    n_units: int

    __test__ = False  # the Test* name is not a pytest suite

    def __post_init__(self):
        object.__setattr__(self, "stress_levels", tuple(float(x) for x in self.stress_levels))
        object.__setattr__(self, "change_times", tuple(float(t) for t in self.change_times))
        object.__setattr__(self, "inspection_times", tuple(float(t) for t in self.inspection_times))
        object.__setattr__(self, "use_stress", float(self.use_stress))
        object.__setattr__(self, "n_units", int(self.n_units))
        x, tau, t = self.stress_levels, self.change_times, self.inspection_times
        if len(x) < 1:
            raise ValueError("need at least one stress level")
        if len(tau) != len(x):
            raise ValueError("need one change time per stress level (the last ends the test)")
        if any(not math.isfinite(v) for v in x + tau + t + (self.use_stress,)):
            raise ValueError("plan values must be finite")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise ValueError("stress levels must be strictly increasing")
        if tau[0] <= 0 or any(b <= a for a, b in zip(tau, tau[1:])):
            raise ValueError("change times must be positive and strictly increasing")
        if len(t) < len(x):
            raise ValueError("need at least as many inspection times as stress levels")
        if t[0] <= 0 or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("inspection times must be positive and strictly increasing")
        if not set(tau).issubset(set(t)):
            raise ValueError("every change time must be an inspection time")
        if t[-1] != tau[-1]:
            raise ValueError("last inspection time must equal the final change time")
        if self.n_units < 1:
            raise ValueError("n_units must be >= 1")

    @property
    def k(self) -> int:
        """Number of stress levels."""
        return len(self.stress_levels)

    @property
    def L(self) -> int:
        """Number of inspection times."""
        return len(self.inspection_times)

    @property
    def n_cells(self) -> int:
        """Failure intervals plus the survival cell."""
        return self.L + 1

    def level_after(self, t: float) -> int:
        """1-based stress level in force just after time t.

        A time equal to a change time tau_i (i < k) maps to level i+1, the
        level the surviving units are tested at next; times at or beyond
        tau_{k-1} map to the final level k.
        """
        if t < 0:
            raise ValueError("time must be nonnegative")
        return min(int(np.searchsorted(self.change_times, t, side="right")) + 1, self.k)

    def to_dict(self) -> dict:
        return {
            "stress_levels": list(self.stress_levels),
            "change_times": list(self.change_times),
            "inspection_times": list(self.inspection_times),
            "use_stress": self.use_stress,
            "n_units": self.n_units,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TestPlan":
        try:
            return cls(
                stress_levels=tuple(d["stress_levels"]),
                change_times=tuple(d["change_times"]),
                inspection_times=tuple(d["inspection_times"]),
                use_stress=d["use_stress"],
                n_units=d["n_units"],
            )
        except KeyError as e:
            raise ValueError(f"plan JSON is missing key {e.args[0]!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "TestPlan":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class ModelParams:
    """Log-linear link parameters: rate lambda_i = theta0 * exp(theta1 * x_i)."""

    theta0: float
    theta1: float

    def __post_init__(self):
        object.__setattr__(self, "theta0", float(self.theta0))
        object.__setattr__(self, "theta1", float(self.theta1))
        if not (math.isfinite(self.theta0) and self.theta0 > 0):
            raise ValueError("theta0 must be finite and > 0")
        if not math.isfinite(self.theta1):
            raise ValueError("theta1 must be finite")

    @property
    def log_theta0(self) -> float:
        return math.log(self.theta0)

    @classmethod
    def from_log(cls, log_theta0: float, theta1: float) -> "ModelParams":
        return cls(math.exp(log_theta0), theta1)

    def as_array(self) -> np.ndarray:
        return np.array([self.theta0, self.theta1])


def hazard_rate(params: ModelParams, x: float) -> float:
    """Failure rate theta0 * exp(theta1 * x) at stress x."""
    return params.theta0 * math.exp(params.theta1 * x)


def _level_quantities(params: ModelParams, plan: TestPlan):
    """Per-level rates, exposure shifts and shift-gradient terms.

    Returns (lams, a, astar), each of length k:
      lams[i-1]  = theta0 exp(theta1 x_i)
      a[i-1]     = sum_{l<i} (tau_l - tau_{l-1}) lambda_l / lambda_i   (a[0] = 0)
      astar[i-1] = sum_{l<i} lambda_l (tau_l - tau_{l-1}) (x_l - x_i) / lambda_i
    with tau_0 = 0.
    """
    x = np.asarray(plan.stress_levels)
    tau = np.asarray(plan.change_times)
    lams = params.theta0 * np.exp(params.theta1 * x)
    dtau = np.diff(np.concatenate(([0.0], tau)))  # tau_l - tau_{l-1}, l = 1..k
    ld = lams * dtau
    cum_ld = np.concatenate(([0.0], np.cumsum(ld[:-1])))          # sum_{l<i} lambda_l dtau_l
    cum_ldx = np.concatenate(([0.0], np.cumsum(ld[:-1] * x[:-1])))  # ... times x_l
    a = cum_ld / lams
    astar = (cum_ldx - x * cum_ld) / lams
    return lams, a, astar


def exposure_shift(params: ModelParams, plan: TestPlan, i: int) -> float:
    """Time shift a_{i-1} aligning level i with the exposure already accumulated."""
    if not 1 <= i <= plan.k:
        raise ValueError(f"level index {i} out of range 1..{plan.k}")
    _, a, _ = _level_quantities(params, plan)
    return float(a[i - 1])


def exposure_shift_gradient_term(params: ModelParams, plan: TestPlan, i: int) -> float:
    """theta1-derivative term a*_{i-1} of the exposure shift (0 for i = 1)."""
    if not 1 <= i <= plan.k:
        raise ValueError(f"level index {i} out of range 1..{plan.k}")
    _, _, astar = _level_quantities(params, plan)
    return float(astar[i - 1])


def _levels_after(plan: TestPlan, t: np.ndarray) -> np.ndarray:
    tau = np.asarray(plan.change_times)
    return np.minimum(np.searchsorted(tau, t, side="right") + 1, plan.k)


def _effective_times(params: ModelParams, plan: TestPlan, t: np.ndarray):
    """Per-time level i, rate lambda_i and translated time T = t + a_{i-1} - tau_{i-1}."""
    lams, a, _ = _level_quantities(params, plan)
    lev = _levels_after(plan, t)
    tau_prev = np.concatenate(([0.0], np.asarray(plan.change_times)[:-1]))
    T = t + a[lev - 1] - tau_prev[lev - 1]
    return lev, lams[lev - 1], T


def lifetime_cdf(params: ModelParams, plan: TestPlan, t):
    """P(T <= t) under the cumulative exposure model; continuous in t."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be nonnegative")
    _, lam, T = _effective_times(params, plan, np.atleast_1d(t_arr))
    out = -np.expm1(-lam * T)
    return float(out[0]) if t_arr.ndim == 0 else out


def lifetime_reliability(params: ModelParams, plan: TestPlan, t):
    """P(T > t) = 1 - lifetime_cdf, computed without cancellation."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be nonnegative")
    _, lam, T = _effective_times(params, plan, np.atleast_1d(t_arr))
    out = np.exp(-lam * T)
    return float(out[0]) if t_arr.ndim == 0 else out


def lifetime_pdf(params: ModelParams, plan: TestPlan, t):
    """Density of the lifetime; discontinuous at the change times."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be nonnegative")
    _, lam, T = _effective_times(params, plan, np.atleast_1d(t_arr))
    out = lam * np.exp(-lam * T)
    return float(out[0]) if t_arr.ndim == 0 else out


def cell_probabilities(params: ModelParams, plan: TestPlan) -> np.ndarray:
    """Multinomial cell probabilities (pi_1, ..., pi_{L+1}).

    pi_j is the probability of failing in (t_{j-1}, t_j] (t_0 = 0) and
    pi_{L+1} the probability of surviving the whole test.  Each interval is
    integrated within a single stress level, using expm1 differencing so that
    tightly spaced inspection times do not cancel catastrophically.
    """
    t = np.asarray(plan.inspection_times)
    lams, a, _ = _level_quantities(params, plan)
    t_prev = np.concatenate(([0.0], t[:-1]))
    lev = _levels_after(plan, t_prev)  # level in force over (t_{j-1}, t_j]
    lam = lams[lev - 1]
    probs = np.empty(plan.n_cells)
    survive = 1.0
    for j in range(plan.L):
        frac = -math.expm1(-lam[j] * (t[j] - t_prev[j]))
        probs[j] = survive * frac
        survive *= math.exp(-lam[j] * (t[j] - t_prev[j]))
    probs[plan.L] = survive
    return probs


def cdf_gradient(params: ModelParams, plan: TestPlan, j: int) -> np.ndarray:
    """Gradient z_j of the lifetime CDF at t_j with respect to (theta0, theta1).

    Conventions: z_0 = z_{L+1} = 0; a time equal to a change time uses the
    stress level the units are tested at next.
    """
    if j == 0 or j == plan.L + 1:
        return np.zeros(2)
    if not 1 <= j <= plan.L:
        raise ValueError(f"inspection index {j} out of range 0..{plan.L + 1}")
    return _z_rows(params, plan)[j - 1]


def _z_rows(params: ModelParams, plan: TestPlan) -> np.ndarray:
    """All z_j rows, j = 1..L (vectorized)."""
    t = np.asarray(plan.inspection_times)
    lams, a, astar = _level_quantities(params, plan)
    lev = _levels_after(plan, t)
    tau_prev = np.concatenate(([0.0], np.asarray(plan.change_times)[:-1]))
    x = np.asarray(plan.stress_levels)[lev - 1]
    lam = lams[lev - 1]
    T = t + a[lev - 1] - tau_prev[lev - 1]
    g = lam * np.exp(-lam * T)
    return np.column_stack((g * T / params.theta0, g * (T * x + astar[lev - 1])))


def score_matrix(params: ModelParams, plan: TestPlan) -> np.ndarray:
    """(L+1) x 2 matrix W with rows w_j = z_j - z_{j-1}.

    The rows are the gradients of the cell probabilities, so each column
    telescopes to zero.
    """
    z = np.vstack((np.zeros(2), _z_rows(params, plan), np.zeros(2)))
    return np.diff(z, axis=0)
