"""
Ranking and Spearman rank correlation, with the t-approximation significance test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from hetwls.errors import (
    DegenerateCorrelation,
    DimensionMismatch,
    NonFiniteInput,
    TooFewObservations,
    ZeroRankVariance,
)
from hetwls.linreg import Dataset, TestResult

ALPHA = 0.05


@dataclass(frozen=True)
class RankVector:
    """Ranks in [1, n]; tied values share the average of the positions they span."""

    ranks: np.ndarray
    has_ties: bool

    def __len__(self):
        return self.ranks.shape[0]


def _as_vector(v, min_n: int) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape[0] < min_n:
        raise TooFewObservations(f"need at least {min_n} observations, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput("rank input contains non-finite values")
    return a


def _rank_array(a: np.ndarray) -> tuple[np.ndarray, bool]:
    r = stats.rankdata(a, method='average')
    return r, bool(np.unique(r).shape[0] < r.shape[0])


def ranks(v) -> RankVector:
    a = _as_vector(v, 2)
    r, has_ties = _rank_array(a)
    return RankVector(ranks=r, has_ties=has_ties)


def spearman_from_ranks(ra: np.ndarray, rb: np.ndarray, ties: bool) -> float:
    """Spearman's r_s from precomputed rank vectors."""
    n = ra.shape[0]
    if ra[0] == ra[-1] and np.all(ra == ra[0]):
        raise ZeroRankVariance("first vector is constant")
    if rb[0] == rb[-1] and np.all(rb == rb[0]):
        raise ZeroRankVariance("second vector is constant")
    if not ties:
        d2 = float(np.sum((ra - rb) ** 2))
        r = 1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    else:
        ca = ra - ra.mean()
        cb = rb - rb.mean()
        r = float(np.dot(ca, cb) / np.sqrt(np.dot(ca, ca) * np.dot(cb, cb)))
    return min(max(r, -1.0), 1.0)


def spearman(a, b) -> float:
    """
    Spearman rank correlation.

    Without ties: 1 - 6 sum(d_i^2) / (n (n^2 - 1)). With ties: Pearson
    correlation of the average-rank vectors.
    """
    a = _as_vector(a, 3)
    b = _as_vector(b, 3)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"vectors have lengths {a.shape[0]} and {b.shape[0]}")
    ra, ties_a = _rank_array(a)
    rb, ties_b = _rank_array(b)
    return spearman_from_ranks(ra, rb, ties_a or ties_b)


def spearman_pvalue(r_s: float, n: int) -> TestResult:
    """Two-sided p-value of r_s from t = r sqrt((n-2)/(1-r^2)) on n-2 df."""
    if n < 4:
        raise TooFewObservations(f"the significance test needs n >= 4, got {n}")
    r_s = float(r_s)
    if not np.isfinite(r_s) or abs(r_s) > 1.0:
        raise DegenerateCorrelation(f"correlation {r_s} outside [-1, 1]")
    df = n - 2
    if abs(r_s) == 1.0:
        return TestResult(statistic=float(np.copysign(np.inf, r_s)), df=df, p_value=0.0,
                          reject_at_05=True, exact=True)
    t = r_s * np.sqrt(df / (1.0 - r_s * r_s))
    p_value = float(min(2.0 * stats.t.sf(abs(t), df), 1.0))
    return TestResult(statistic=float(t), df=df, p_value=p_value,
                      reject_at_05=bool(p_value < ALPHA))


def residual_rank_table(data: Dataset, residuals) -> pd.DataFrame:
    """Spearman correlation of each regressor with |residuals| and its p-value."""
    abs_resid = np.abs(np.asarray(residuals, dtype=float))
    rows = []
    for j, name in enumerate(data.regressor_names):
        try:
            r = spearman(data.regressors[:, j], abs_resid)
            p_value = spearman_pvalue(r, data.n).p_value
        except ZeroRankVariance:
            r, p_value = np.nan, np.nan
        rows.append({'variable': name, 'spearman': r, 'p_value': p_value})
    return pd.DataFrame(rows, columns=['variable', 'spearman', 'p_value'])
