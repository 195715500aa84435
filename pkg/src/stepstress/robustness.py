"""Influence functions of the MDPDE and the Z test, and leverage-point scans.

Contamination of multinomial count data lives on the cells: the contaminating
distribution puts all its mass on one inspection interval (or the survival
cell).  The influence function of the MDPDE at the model is

    IF(cell) = J_beta^{-1} W^T D_pi^{beta-1} (indicator(cell) - pi),

bounded in the cell index for every beta.  Leverage points are outlying
inspection times or stress levels; there the per-cell IF summands
(z_j - z_{j-1}) pi_j^{beta-1} stay bounded only for beta > 0, which the scan
functions make visible numerically.
"""
from __future__ import annotations

import math

import numpy as np

from .estimation import info_matrices
from .hypothesis import LinearHypothesis
from .model import (
    ModelParams,
    TestPlan,
    cell_probabilities,
    score_matrix,
)

__all__ = ["if_estimator", "if_ztest", "if_divergence_scan"]


def if_estimator(cell_index: int, params: ModelParams, plan: TestPlan, beta: float) -> np.ndarray:
    """Influence function of the MDPDE for point contamination of one cell.

    cell_index is 1-based; L+1 addresses the survival cell.  Evaluated at the
    assumed model distribution.
    """
    if not 1 <= cell_index <= plan.n_cells:
        raise ValueError(f"cell index {cell_index} out of range 1..{plan.n_cells}")
    pi = cell_probabilities(params, plan)
    W = score_matrix(params, plan)
    delta = np.zeros(plan.n_cells)
    delta[cell_index - 1] = 1.0
    J, _ = info_matrices(params, plan, beta)
    return np.linalg.solve(J, W.T @ (pi ** (beta - 1) * (delta - pi)))


def if_ztest(
    cell_index: int,
    params: ModelParams,
    plan: TestPlan,
    beta: float,
    hyp: LinearHypothesis,
    n_units: int | None = None,
) -> float:
    """Influence function of the Z statistic: the m-projection of the
    estimator's IF, scaled by sqrt(N / m^T Sigma m)."""
    n = plan.n_units if n_units is None else int(n_units)
    J, K = info_matrices(params, plan, beta)
    Jinv = np.linalg.inv(J)
    sigma = Jinv @ K @ Jinv
    m = hyp.m_array()
    denom = float(m @ sigma @ m)
    if not denom > 0:
        raise ValueError("m^T Sigma m is not positive")
    return math.sqrt(n / denom) * float(m @ if_estimator(cell_index, params, plan, beta))


def _summand_rows(params: ModelParams, plan: TestPlan, beta: float) -> np.ndarray:
    """Per-cell IF summands w_j pi_j^{beta-1} as an (L+1) x 2 matrix."""
    pi = cell_probabilities(params, plan)
    W = score_matrix(params, plan)
    # beyond double range the product degenerates to 0 * inf; callers map
    # the resulting nans to 0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return W * pi[:, None] ** (beta - 1)


def if_divergence_scan(
    params: ModelParams,
    plan: TestPlan,
    beta: float,
    axis: str = "inspection_time",
    grid=None,
    level: int | None = None,
) -> np.ndarray:
    """Sweep a design coordinate and track the IF summand it controls.

    axis="inspection_time" replaces the terminal inspection time by each grid
    value and reports the absolute components of the survival-cell summand
    (-z_L) pi_{L+1}^{beta-1}: linear growth for beta = 0, exponential decay
    for beta > 0.

    axis="stress_level" sets stress levels from `level` (default: the last)
    upward to each grid value and reports the componentwise maximum of the
    summands over the affected cells.

    Returns an array with columns (axis_value, |theta0 component|,
    |theta1 component|), ready to write as CSV.
    """
    if grid is None:
        raise ValueError("grid is required")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a nonempty increasing 1-d array")
    out = np.empty((len(grid), 3))

    if axis == "inspection_time":
        t = plan.inspection_times
        floor = max(t[-2] if plan.L >= 2 else 0.0, plan.change_times[-2] if plan.k >= 2 else 0.0)
        if grid[0] <= floor:
            raise ValueError(f"grid values must exceed {floor} to keep the plan ordered")
        # survival summand (-z_L) pi_{L+1}^{beta-1} evaluated in closed form:
        # the exponentials combine to exp(-beta lambda_k T), which avoids the
        # 0 * inf breakdown of the naive product at large grid values
        from .model import _level_quantities  # shared internals

        lams, a, astar = _level_quantities(params, plan)
        lam = lams[-1]
        tau_prev = plan.change_times[-2] if plan.k >= 2 else 0.0
        x_top = plan.stress_levels[-1]
        for row, s in enumerate(grid):
            T = s + a[-1] - tau_prev
            decay = math.exp(-beta * lam * T)
            out[row] = (
                s,
                lam * decay * T / params.theta0,
                lam * decay * abs(T * x_top + astar[-1]),
            )
        return out

    if axis == "stress_level":
        i = plan.k if level is None else int(level)
        if not 1 <= i <= plan.k:
            raise ValueError(f"level {i} out of range 1..{plan.k}")
        floor = plan.stress_levels[i - 2] if i >= 2 else -math.inf
        if grid[0] <= floor:
            raise ValueError(f"grid values must exceed stress level {floor}")
        # raising every stress from level i to the same value v is, under
        # cumulative exposure, identical to one merged level i running to the
        # end of the test
        x_base = plan.stress_levels[: i - 1]
        tau_base = plan.change_times[: i - 1] + (plan.change_times[-1],)
        tau_prev = 0.0 if i == 1 else plan.change_times[i - 2]
        t_prev = (0.0,) + plan.inspection_times[:-1]
        affected = [j for j in range(plan.L) if t_prev[j] >= tau_prev] + [plan.L]
        for row, v in enumerate(grid):
            mod = TestPlan(
                stress_levels=x_base + (float(v),),
                change_times=tau_base,
                inspection_times=plan.inspection_times,
                use_stress=plan.use_stress,
                n_units=plan.n_units,
            )
            rows = np.abs(_summand_rows(params, mod, beta)[affected])
            rows = np.where(np.isnan(rows), 0.0, rows)  # 0 * inf beyond double range
            out[row] = (v, rows[:, 0].max(), rows[:, 1].max())
        return out

    raise ValueError("axis must be 'inspection_time' or 'stress_level'")
