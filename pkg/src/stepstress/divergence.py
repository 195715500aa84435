"""Density power divergence and Kullback-Leibler objectives on cell probabilities.

The DPD between the empirical vector p_hat and the model vector pi, with
tuning parameter beta >= 0, is

    d_beta(p_hat, pi) = sum_j [ pi_j^{1+beta}
                                - (1 + 1/beta) p_hat_j pi_j^beta
                                + (1/beta) p_hat_j^{beta+1} ],

which tends to the Kullback-Leibler divergence as beta -> 0.  Minimizing it
over the model parameters gives the MDPDE; at beta = 0 that is exactly the
maximum likelihood estimator.
"""
from __future__ import annotations

import numpy as np

from .model import ModelParams, TestPlan, cell_probabilities, score_matrix

__all__ = ["dpd_loss", "kl_loss", "estimating_residual"]


def _check_pair(p_hat, pi):
    p_hat = np.asarray(p_hat, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if p_hat.shape != pi.shape:
        raise ValueError(f"length mismatch: {p_hat.shape} vs {pi.shape}")
    return p_hat, pi


def dpd_loss(p_hat, pi, beta: float) -> float:
    """DPD between empirical and model cell probabilities.

    Includes the parameter-free (1/beta) sum p_hat^{beta+1} term, so the value
    is a true divergence (zero iff p_hat == pi).  beta = 0 dispatches to
    kl_loss exactly; evaluating the beta-formula there would be singular.
    """
    p_hat, pi = _check_pair(p_hat, pi)
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if beta == 0.0:
        return kl_loss(p_hat, pi)
    return float(
        np.sum(pi ** (1 + beta) - (1 + 1 / beta) * p_hat * pi**beta + p_hat ** (beta + 1) / beta)
    )


def kl_loss(p_hat, pi) -> float:
    """Kullback-Leibler divergence sum p_hat log(p_hat / pi), with 0 log 0 = 0.

    Equals a data-only constant minus the per-unit multinomial log likelihood,
    so its minimizer is the MLE.
    """
    p_hat, pi = _check_pair(p_hat, pi)
    mask = p_hat > 0
    if np.any(pi[mask] <= 0):
        raise ValueError("model probability is zero on a cell with positive empirical mass")
    return float(np.sum(p_hat[mask] * np.log(p_hat[mask] / pi[mask])))


def estimating_residual(params: ModelParams, plan: TestPlan, p_hat, beta: float) -> np.ndarray:
    """MDPDE estimating-equation residual W^T D_pi^{beta-1} (p_hat - pi).

    Vanishes at the fitted MDPDE.  For beta = 0 this is the multinomial score
    divided by the sample size.  The DPD gradient with respect to theta is
    -(beta+1) times this vector.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    pi = cell_probabilities(params, plan)
    p_hat = np.asarray(p_hat, dtype=float)
    if p_hat.shape != pi.shape:
        raise ValueError(f"expected {pi.shape[0]} cells, got {p_hat.shape}")
    if beta < 1 and np.any(pi == 0):
        raise ValueError("degenerate plan/parameters: a cell probability is exactly zero")
    W = score_matrix(params, plan)
    return W.T @ (pi ** (beta - 1) * (p_hat - pi))
