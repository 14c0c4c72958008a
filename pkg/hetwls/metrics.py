"""
Accuracy metrics for comparing estimators across replications.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hetwls.errors import DimensionMismatch, ZeroDegreesOfFreedom
from hetwls.linreg import FitResult


@dataclass(frozen=True)
class MetricsReport:
    """Per-coefficient |bias| and MSE, prediction MAE, SSE and RSE over R replications."""

    bias_abs: np.ndarray
    mse: np.ndarray
    mae_y: float
    sse: float
    rse: float
    R: int
    n: int

    def to_dict(self) -> dict:
        return {
            'bias_abs': [float(v) for v in self.bias_abs],
            'mse': [float(v) for v in self.mse],
            'mae_y': float(self.mae_y),
            'sse': float(self.sse),
            'rse': float(self.rse),
            'R': int(self.R),
            'n': int(self.n),
        }


def _deviations(estimates, truth) -> np.ndarray:
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est[None, :]
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if est.ndim != 2 or est.shape[0] < 1 or est.shape[1] != truth.shape[0]:
        raise DimensionMismatch(f"estimates {est.shape} do not match truth of length {truth.shape[0]}")
    return est - truth


def abs_bias(estimates, truth) -> np.ndarray:
    """(1/R) sum_k |beta_hat_k - beta|, per coefficient."""
    return np.mean(np.abs(_deviations(estimates, truth)), axis=0)


def mse(estimates, truth) -> np.ndarray:
    """(1/R) sum_k (beta_hat_k - beta)^2, per coefficient."""
    return np.mean(_deviations(estimates, truth) ** 2, axis=0)


def _paired(pred, actual) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise DimensionMismatch(f"predictions {pred.shape} and actual values {actual.shape} differ")
    return pred, actual


def mae(pred, actual) -> float:
    """Mean absolute prediction error over every replicate and observation."""
    pred, actual = _paired(pred, actual)
    return float(np.mean(np.abs(pred - actual)))


def sse(pred, actual) -> float:
    pred, actual = _paired(pred, actual)
    return float(np.sum((pred - actual) ** 2))


def rse(fit: FitResult) -> float:
    """Residual standard error sqrt(SSE / df_resid) on the unweighted residuals."""
    if fit.df_resid < 1:
        raise ZeroDegreesOfFreedom(f"residual degrees of freedom = {fit.df_resid}")
    return float(np.sqrt(fit.sse / fit.df_resid))


def summarize(estimates, truth, pred, actual, df_resid: int) -> MetricsReport:
    """
    Aggregate R replications into a MetricsReport.

    sse and rse are means of the per-replicate values, so a single replicate
    reports its own raw metrics.
    """
    pred, actual = _paired(pred, actual)
    if pred.ndim == 1:
        pred, actual = pred[None, :], actual[None, :]
    R, n = pred.shape
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est[None, :]
    if est.shape[0] != R:
        raise DimensionMismatch(f"{est.shape[0]} coefficient rows for {R} prediction rows")
    bias = abs_bias(est, truth)
    if df_resid < 1:
        raise ZeroDegreesOfFreedom(f"residual degrees of freedom = {df_resid}")
    per_rep_sse = np.sum((pred - actual) ** 2, axis=1)
    mean_sse = float(np.mean(per_rep_sse))
    return MetricsReport(
        bias_abs=bias,
        mse=mse(est, truth),
        mae_y=mae(pred, actual),
        sse=mean_sse,
        rse=float(np.mean(np.sqrt(per_rep_sse / df_resid))),
        R=R,
        n=n,
    )
