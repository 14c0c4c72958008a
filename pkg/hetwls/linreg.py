"""
Dense linear-model core.

Design matrices, OLS and weighted least squares solved through a QR
decomposition of the row-scaled design, plus regression diagnostics:
White's test, variance inflation factors and backward-AIC stepwise selection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
import statsmodels.api as sm
from scipy import linalg, stats
from statsmodels.stats.outliers_influence import variance_inflation_factor

from hetwls.errors import (
    DataError,
    DegenerateSample,
    DimensionMismatch,
    NonFiniteInput,
    NonPositiveWeight,
    SingularDesign,
)

logger = logging.getLogger(__name__)

# Reciprocal condition number below which a design counts as singular
RCOND_LIMIT = 1e-12
WHITE_ALPHA = 0.05
VIF_LIMIT = 1e10


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class Standardization:
    """Z-score parameters recorded when a dataset was standardized."""

    feature_mean: np.ndarray
    feature_scale: np.ndarray
    response_mean: float
    response_scale: float

    def inverse_response(self, values):
        """Map standardized responses (or predictions) back to the raw scale."""
        return np.asarray(values, dtype=float) * self.response_scale + self.response_mean

    def to_dict(self) -> dict:
        return {
            'feature_mean': [float(v) for v in self.feature_mean],
            'feature_scale': [float(v) for v in self.feature_scale],
            'response_mean': float(self.response_mean),
            'response_scale': float(self.response_scale),
        }


@dataclass(frozen=True)
class Dataset:
    """Response y and design X whose first column is the intercept."""

    y: np.ndarray
    X: np.ndarray
    names: tuple = ()
    transform: Optional[Standardization] = field(default=None, compare=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatch(f"design must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"y has {y.shape[0]} rows but X has {X.shape[0]}")
        if X.shape[1] < 1:
            raise DimensionMismatch("design needs at least the intercept column")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise NonFiniteInput("dataset contains non-finite values")
        if not np.all(X[:, 0] == 1.0):
            raise DataError("column 0 of the design must be the intercept (all ones)")
        n, cols = X.shape
        if n < cols + 1:
            raise DegenerateSample(f"n = {n} leaves no residual degree of freedom for p = {cols - 1}")
        names = tuple(self.names) if self.names else ('const',) + tuple(f'x{j}' for j in range(1, cols))
        if len(names) != cols:
            raise DimensionMismatch(f"{len(names)} names for {cols} design columns")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'names', names)

    @classmethod
    def from_arrays(cls, y, regressors, names: Optional[Sequence[str]] = None,
                    transform: Optional[Standardization] = None) -> 'Dataset':
        """Build a dataset from a response and a regressor block (no intercept)."""
        Z = np.asarray(regressors, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        X = np.column_stack([np.ones(Z.shape[0]), Z])
        full_names = ('const',) + tuple(names) if names is not None else ()
        return cls(y=y, X=X, names=full_names, transform=transform)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1] - 1

    @property
    def regressors(self) -> np.ndarray:
        return self.X[:, 1:]

    @property
    def regressor_names(self) -> tuple:
        return self.names[1:]

    def select(self, columns: Sequence[int]) -> 'Dataset':
        """Keep the intercept and the given regressor indices (0-based)."""
        cols = [0] + [int(j) + 1 for j in columns]
        return Dataset(self.y, self.X[:, cols], tuple(self.names[c] for c in cols), self.transform)

    def take(self, rows) -> 'Dataset':
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.X[rows], self.names, self.transform)


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    weights: np.ndarray
    sigma2: float
    df_resid: int

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.beta

    @property
    def sse(self) -> float:
        return float(np.sum(self.residuals ** 2))


@dataclass(frozen=True)
class TestResult:
    """Carrier for a diagnostic test outcome."""

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    df: int
    p_value: float
    reject_at_05: bool
    exact: bool = False


# ============================================================================
# SOLVERS
# ============================================================================

def _reciprocal_condition(A: np.ndarray) -> float:
    """Reciprocal 2-norm condition of A after scaling columns to unit length."""
    norms = np.linalg.norm(A, axis=0)
    if A.shape[0] < A.shape[1] or np.any(norms == 0):
        return 0.0
    s = np.linalg.svd(A / norms, compute_uv=False)
    return float(s[-1] / s[0])


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise DimensionMismatch(f"{w.shape[0]} weights for {n} observations")
    bad = np.flatnonzero(~np.isfinite(w) | (w <= 0))
    if bad.size:
        raise NonPositiveWeight(f"weights must be finite and positive (first offending index {bad[0]})")
    return w


def solve_wls(X, y, weights=None) -> np.ndarray:
    """
    Minimize (y - Xb)' W (y - Xb) through a QR decomposition of the row-scaled design.

    Weights are divided by their maximum first, so the solution does not depend
    on their overall scale. Saturated designs (n == columns) are allowed.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"design {X.shape} does not match response of length {y.shape[0]}")
    w = np.ones(X.shape[0]) if weights is None else _check_weights(weights, X.shape[0])
    if X.shape[0] < X.shape[1]:
        raise SingularDesign(f"{X.shape[0]} observations cannot identify {X.shape[1]} coefficients")

    sw = np.sqrt(w / w.max())
    Xs = X * sw[:, None]
    ys = y * sw
    norms = np.linalg.norm(Xs, axis=0)
    if np.any(norms == 0):
        raise SingularDesign("design has an all-zero column")
    Q, R = linalg.qr(Xs / norms, mode='economic')
    s = np.linalg.svd(R, compute_uv=False)
    rcond = s[-1] / s[0]
    if not rcond >= RCOND_LIMIT:
        raise SingularDesign(f"design is singular or ill-conditioned (rcond = {rcond:.3g})")
    return linalg.solve_triangular(R, Q.T @ ys) / norms


def wls_fit(data: Dataset, weights) -> FitResult:
    """Weighted least squares: beta = (X'WX)^-1 X'Wy."""
    w = _check_weights(weights, data.n)
    beta = solve_wls(data.X, data.y, w)
    fitted = data.X @ beta
    residuals = data.y - fitted
    df_resid = data.n - data.p - 1
    sigma2 = float(np.sum(w * residuals ** 2) / df_resid)
    return FitResult(beta=beta, fitted=fitted, residuals=residuals, weights=w,
                     sigma2=sigma2, df_resid=df_resid)


def ols_fit(data: Dataset) -> FitResult:
    """Ordinary least squares (weighted least squares at unit weights)."""
    if data.n <= data.p + 1:
        raise DegenerateSample(f"n = {data.n} is too small for p = {data.p}")
    return wls_fit(data, np.ones(data.n))


def aic(data: Dataset) -> float:
    """Gaussian AIC of the OLS fit, as statsmodels reports it: -2 llf + 2 (p + 1)."""
    return float(sm.OLS(data.y, data.X).fit().aic)


# ============================================================================
# DIAGNOSTICS
# ============================================================================

def white_test(data: Dataset, fit: FitResult) -> TestResult:
    """
    White's test: regress e^2 on regressors, their squares and pairwise cross
    products. Statistic n * R^2 against chi-square(df), df = kept auxiliary terms.
    """
    if data.p < 1:
        raise SingularDesign("White's test needs at least one regressor")
    n = data.n
    e2 = np.asarray(fit.residuals, dtype=float) ** 2
    Z = data.regressors

    terms = [Z[:, j] for j in range(data.p)]
    terms += [Z[:, j] ** 2 for j in range(data.p)]
    terms += [Z[:, j] * Z[:, k] for j, k in combinations(range(data.p), 2)]

    # Greedy pass drops duplicated or collinear auxiliary terms
    kept = [np.ones(n)]
    for term in terms:
        if len(kept) >= n - 1:
            break
        candidate = np.column_stack(kept + [term])
        if _reciprocal_condition(candidate) >= RCOND_LIMIT:
            kept.append(term)
    if len(kept) < 2:
        raise SingularDesign("no usable auxiliary regressors for White's test")
    dropped = len(terms) - (len(kept) - 1)
    if dropped:
        logger.debug("White test dropped %d collinear auxiliary terms", dropped)

    if np.ptp(e2) <= 1e-12 * max(float(e2.max()), np.finfo(float).tiny):
        return TestResult(statistic=0.0, df=len(kept) - 1, p_value=1.0, reject_at_05=False)

    aux = sm.OLS(e2, np.column_stack(kept)).fit()
    # df_model is rank(A) - 1
    df = int(round(aux.df_model))
    statistic = float(n * min(max(aux.rsquared, 0.0), 1.0))
    p_value = float(stats.chi2.sf(statistic, df))
    return TestResult(statistic=statistic, df=df, p_value=p_value,
                      reject_at_05=bool(p_value < WHITE_ALPHA))


def vif(data: Dataset) -> np.ndarray:
    """Variance inflation factors; constant or perfectly collinear columns report +inf."""
    out = np.empty(data.p)
    for j in range(data.p):
        if np.ptp(data.X[:, j + 1]) == 0.0:
            out[j] = np.inf
            continue
        with np.errstate(divide='ignore', invalid='ignore'):
            value = float(variance_inflation_factor(data.X, j + 1))
        out[j] = value if np.isfinite(value) and value < VIF_LIMIT else np.inf
    return out


def stepwise_select(data: Dataset) -> Dataset:
    """
    Backward elimination by AIC; ties go to the lowest column index.

    At least one regressor always survives, since the weighting step needs one.
    """
    active = list(range(data.p))
    current = aic(data.select(active))
    while len(active) > 1:
        best_aic, best_col = None, None
        for pos, col in enumerate(active):
            trial = active[:pos] + active[pos + 1:]
            trial_aic = aic(data.select(trial))
            if best_aic is None or trial_aic < best_aic:
                best_aic, best_col = trial_aic, col
        if best_aic >= current:
            break
        logger.debug("stepwise: dropping %s (AIC %.4f -> %.4f)",
                     data.regressor_names[best_col], current, best_aic)
        active.remove(best_col)
        current = best_aic
    if len(active) == 1 and aic(data.select([])) < current:
        logger.warning("stepwise: intercept-only model has lower AIC; keeping %s",
                       data.regressor_names[active[0]])
    return data.select(active)
