"""
Multivariate-dependent weighted least squares (M2) and its univariate baseline (M1).

The error variance is modelled as sigma_i^2 = sigma^2 (x_i'k)^m. The direction k
maximizes |Spearman(x_i'k, |e_i|)| against OLS residuals; the exponent m solves
the profile likelihood equation; the final fit is WLS at weights (x_i'k)^-m.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq, differential_evolution, minimize, minimize_scalar
from scipy.special import logsumexp

from hetwls.config import SolverConfig
from hetwls.errors import (
    AllWeightsEqual,
    AssumptionOneViolated,
    DegenerateSample,
    DimensionMismatch,
    MaxIterationsExceeded,
    NoFeasibleDirection,
    NonFiniteInput,
    NonPositiveRegressor,
    NonPositiveVariance,
    NonPositiveWeight,
    NoRootInInterval,
    WeightOverflow,
    ZeroRankVariance,
    ZeroResiduals,
)
from hetwls.linreg import Dataset, FitResult, ols_fit, wls_fit
from hetwls.rankcorr import ranks, spearman, spearman_from_ranks

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class CombinationWeights:
    """
    Direction k over the regressors and the normalized weights w = scale * Xk.

    k has unit Euclidean norm; scale makes min(w) == 1.
    """

    k: np.ndarray
    scale: float
    rs_abs: float
    w: np.ndarray

    def __post_init__(self):
        k = np.array(self.k, dtype=float).reshape(-1)
        w = np.array(self.w, dtype=float).reshape(-1)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise NonPositiveWeight(f"scale must be positive, got {self.scale}")
        if not np.all(np.isfinite(w)) or abs(w.min() - 1.0) > 1e-12:
            raise NonPositiveWeight("combination weights must be finite with min(w) == 1")
        if np.all(w == w[0]):
            raise AssumptionOneViolated("combination weights are all equal")
        k.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, 'k', k)
        object.__setattr__(self, 'w', w)
        object.__setattr__(self, 'scale', float(self.scale))
        object.__setattr__(self, 'rs_abs', float(self.rs_abs))

    @property
    def k_ratio(self) -> float:
        """k_2 / k_1, the summary reported for two-regressor designs."""
        if self.k.shape[0] < 2 or self.k[0] == 0:
            return float('nan')
        return float(self.k[1] / self.k[0])


@dataclass(frozen=True)
class VarianceModel:
    """sigma_i^2 = sigma2 * w_i^m."""

    combo: CombinationWeights
    m: float
    sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise NonPositiveVariance(f"base variance must be positive, got {self.sigma2}")
        v = self.variances
        if not np.all(np.isfinite(v) & (v > 0)):
            raise WeightOverflow("implied variances are not all finite and positive",
                                 index=int(np.flatnonzero(~(np.isfinite(v) & (v > 0)))[0]))

    @property
    def variances(self) -> np.ndarray:
        with np.errstate(over='ignore', under='ignore'):
            return self.sigma2 * np.exp(self.m * np.log(self.combo.w))


@dataclass(frozen=True)
class MvdFit:
    """Outcome of M1 or M2: variance model, final weighted fit and solver trace."""

    model: Optional[VarianceModel]
    fit: FitResult
    loglik: float
    iterations: int
    m_trace: tuple
    method: str = 'M2'
    homoscedastic_fallback: bool = False
    boundary_solution: bool = False

    @property
    def m_hat(self) -> float:
        return self.model.m if self.model is not None else 0.0

    @property
    def k(self) -> Optional[np.ndarray]:
        return self.model.combo.k if self.model is not None else None

    @property
    def k_ratio(self) -> float:
        return self.model.combo.k_ratio if self.model is not None else float('nan')

    def predict(self, X) -> np.ndarray:
        return self.fit.predict(X)


class MSolution(NamedTuple):
    m_hat: float
    trace: tuple
    boundary: bool


# ============================================================================
# COMBINATION SEARCH
# ============================================================================

def combine(X, k) -> np.ndarray:
    """x*_i = sum_j k_j x_ij over the regressor block (no intercept)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    k = np.asarray(k, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[1] != k.shape[0]:
        raise DimensionMismatch(f"regressor block {X.shape} does not match direction of length {k.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(k))):
        raise NonFiniteInput("combine needs finite inputs")
    return X @ k


def _orientation(x_star: np.ndarray) -> float:
    """Sign that makes the count of positive entries maximal."""
    return -1.0 if np.count_nonzero(x_star < 0) > np.count_nonzero(x_star > 0) else 1.0


class _CombinationObjective:
    """|r_s| between Xk (unit k, best sign) and |e|; 0 for infeasible directions."""

    def __init__(self, X: np.ndarray, abs_resid, w_floor: float):
        abs_resid = np.asarray(abs_resid, dtype=float).reshape(-1)
        if abs_resid.shape[0] != X.shape[0]:
            raise DimensionMismatch(f"{abs_resid.shape[0]} residuals for {X.shape[0]} rows")
        if np.ptp(abs_resid) == 0:
            raise ZeroRankVariance("absolute residuals are constant")
        resid_ranks = ranks(abs_resid)
        self.X = X
        self.w_floor = w_floor
        self.resid_ranks = resid_ranks.ranks
        self.resid_ties = resid_ranks.has_ties

    def evaluate(self, k) -> tuple[float, bool]:
        k = np.asarray(k, dtype=float)
        norm = float(np.linalg.norm(k))
        if norm == 0 or not np.isfinite(norm):
            return 0.0, False
        x = self.X @ (k / norm)
        x = x * _orientation(x)
        if x.min() <= self.w_floor or np.ptp(x) == 0:
            return 0.0, False
        rx = ranks(x)
        r = spearman_from_ranks(rx.ranks, self.resid_ranks, rx.has_ties or self.resid_ties)
        return abs(r), True

    def __call__(self, k) -> float:
        return -self.evaluate(k)[0]


def combination_objective(X, abs_resid, k, w_floor: float = 1e-6) -> float:
    """|spearman(combine(X, k), abs_resid)|, or 0 when the direction is infeasible."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    combine(X, k)
    return _CombinationObjective(X, abs_resid, w_floor).evaluate(k)[0]


def concentrated_loglik(x_star, abs_resid, m_interval: tuple[float, float] = (-8.0, 8.0)) -> tuple[float, float]:
    """
    Gaussian log-likelihood of fixed residuals under Var(e_i) proportional to
    x*_i^m, with the scale concentrated out and m maximized over m_interval.

    Returns (loglik, m), the loglik up to an additive constant. Invariant to
    rescaling x*.
    """
    lx = np.log(np.asarray(x_star, dtype=float))
    r2 = np.asarray(abs_resid, dtype=float) ** 2
    mask = r2 > 0
    lr2, lx_nz = np.log(r2[mask]), lx[mask]
    n = lx.shape[0]
    total = float(lx.sum())

    def negative(m):
        return 0.5 * n * (logsumexp(lr2 - m * lx_nz) - math.log(n)) + 0.5 * m * total

    lo, hi = m_interval
    best = minimize_scalar(negative, bounds=(lo, hi), method='bounded', options={'xatol': 1e-6})
    return float(-best.fun), float(best.x)


def _likelihood_tie_break(objective: _CombinationObjective, abs_resid, k: np.ndarray,
                          rs_best: float, cfg: SolverConfig) -> np.ndarray:
    """
    Among directions whose |r_s| is within rs_tie_tol of the best, move to the
    one whose combination best explains the spread of the OLS residuals.
    The band never drops below fallback_rs.
    """
    floor = max(rs_best - cfg.rs_tie_tol, cfg.fallback_rs)

    def negative_loglik(kk):
        rs, feasible = objective.evaluate(kk)
        if not feasible or rs < floor:
            return np.inf
        x = objective.X @ (kk / np.linalg.norm(kk))
        return -concentrated_loglik(x * _orientation(x), abs_resid, cfg.m_interval)[0]

    start = negative_loglik(k)
    if not np.isfinite(start):
        return k
    result = minimize(negative_loglik, k, method='Nelder-Mead',
                      options={'xatol': 1e-6, 'fatol': 1e-8, 'maxiter': 200 * k.shape[0]})
    if result.fun < start:
        logger.debug("tie-break: loglik %.4f -> %.4f", -start, -result.fun)
        return result.x
    return k


def optimize_combination(X, abs_resid, cfg: Optional[SolverConfig] = None) -> CombinationWeights:
    """
    Find the direction maximizing |r_s| with |e|.

    Differential evolution over [-1, 1]^p (normalized inside the objective) for
    the full generation budget, then a Nelder-Mead polish. Directions within
    rs_tie_tol of the best |r_s| are then ranked by concentrated_loglik. A single
    regressor is used as is.
    """
    cfg = cfg or SolverConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if p < 1:
        raise DegenerateSample("the combination search needs at least one regressor")
    objective = _CombinationObjective(X, abs_resid, cfg.w_floor)

    if p == 1:
        k = np.array([1.0])
    else:
        popsize = max(1, math.ceil(cfg.population_for(p) / p))
        result = differential_evolution(
            objective,
            bounds=[(-1.0, 1.0)] * p,
            popsize=popsize,
            maxiter=cfg.generations,
            seed=np.random.default_rng(cfg.optimizer_seed),
            polish=False,
            tol=0,
            atol=0,
        )
        k, best = result.x, result.fun
        polished = minimize(objective, k, method='Nelder-Mead',
                            options={'xatol': 1e-6, 'fatol': 1e-10, 'maxiter': 200 * p})
        if polished.fun < best:
            k, best = polished.x, polished.fun
        logger.debug("combination search: |r_s| = %.4f after %d evaluations", -best, result.nfev)
        if cfg.rs_tie_tol > 0 and -best >= cfg.fallback_rs:
            k = _likelihood_tie_break(objective, abs_resid, k, -best, cfg)

    norm = float(np.linalg.norm(k))
    if norm == 0:
        raise NoFeasibleDirection("the search returned the null direction")
    k = k / norm
    x_star = X @ k
    sign = _orientation(x_star)
    k, x_star = k * sign, x_star * sign
    if np.ptp(x_star) == 0 and x_star.min() > cfg.w_floor:
        raise AssumptionOneViolated("the optimal combination is constant across observations")
    rs_abs, feasible = objective.evaluate(k)
    if not feasible:
        raise NoFeasibleDirection(
            f"no direction keeps every x_i'k above w_floor = {cfg.w_floor:g}")
    x_min = float(x_star.min())
    return CombinationWeights(k=k, scale=1.0 / x_min, rs_abs=rs_abs, w=x_star / x_min)


# ============================================================================
# LIKELIHOOD
# ============================================================================

def _check_w(w, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise DimensionMismatch(f"{w.shape[0]} weights for {n} observations")
    bad = np.flatnonzero(~np.isfinite(w) | (w <= 0))
    if bad.size:
        raise NonPositiveWeight(f"w must be finite and positive (first offending index {bad[0]})")
    return w


def _inverse_power(w: np.ndarray, m: float) -> np.ndarray:
    """w^-m, reporting the first index where it is not finite and positive."""
    with np.errstate(over='ignore', under='ignore'):
        inv = np.exp(-m * np.log(w))
    bad = np.flatnonzero(~np.isfinite(inv) | (inv <= 0))
    if bad.size:
        raise WeightOverflow(f"w^-m is not representable at m = {m:g} (index {bad[0]})", index=int(bad[0]))
    return inv


def _residuals_vanish(r: np.ndarray, y: np.ndarray) -> bool:
    return float(np.max(np.abs(r))) <= 1e-10 * max(1.0, float(np.max(np.abs(y))))


def log_likelihood(data: Dataset, w, beta, sigma2: float, m: float) -> float:
    """
    Gaussian log-likelihood under sigma_i^2 = sigma2 * w_i^m:

    -(n/2) ln 2pi - (n/2) ln sigma2 - (m/2) sum ln w_i - sum r_i^2 / w_i^m / (2 sigma2)
    """
    w = _check_w(w, data.n)
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise NonPositiveVariance(f"sigma2 must be positive, got {sigma2}")
    lw = np.log(w)
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    n = data.n
    return float(-0.5 * n * LOG_2PI - 0.5 * n * math.log(sigma2) - 0.5 * m * lw.sum()
                 - np.sum(r ** 2 * _inverse_power(w, m)) / (2.0 * sigma2))


def loglik_dm(data: Dataset, w, beta, sigma2: float, m: float) -> float:
    """Analytic partial derivative of log_likelihood with respect to m."""
    w = _check_w(w, data.n)
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise NonPositiveVariance(f"sigma2 must be positive, got {sigma2}")
    lw = np.log(w)
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    return float(-0.5 * lw.sum() + np.sum(r ** 2 * lw * _inverse_power(w, m)) / (2.0 * sigma2))


def profile_beta(data: Dataset, w, m: float) -> np.ndarray:
    """beta(m) = (sum w_i^-m x_i x_i')^-1 sum w_i^-m x_i y_i."""
    w = _check_w(w, data.n)
    return wls_fit(data, _inverse_power(w, m)).beta


def profile_sigma2(data: Dataset, w, m: float, beta) -> float:
    """sigma2(m) = (1/n) sum (y_i - x_i'beta)^2 / w_i^m."""
    w = _check_w(w, data.n)
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    return float(np.mean(r ** 2 * _inverse_power(w, m)))


def profile_loglik(data: Dataset, w, m: float) -> float:
    """Log-likelihood with beta(m) and sigma2(m) substituted."""
    beta = profile_beta(data, w, m)
    sigma2 = profile_sigma2(data, w, m, beta)
    if sigma2 == 0:
        raise ZeroResiduals("residuals vanish; the profile likelihood is unbounded")
    return log_likelihood(data, w, beta, sigma2, m)


def _score_fixed(r2: np.ndarray, lw: np.ndarray, m: float) -> float:
    """sum r^2 ln w / w^m / sum r^2 / w^m - mean(ln w), evaluated in log space."""
    mask = r2 > 0
    t = np.log(r2[mask]) - m * lw[mask]
    u = np.exp(t - t.max())
    return float(np.dot(u, lw[mask]) / u.sum() - lw.mean())


def m_score(data: Dataset, w, m: float) -> float:
    """
    Left minus right side of the likelihood equation for m, with beta(m) plugged in.

    Its roots are the stationary points of the profile log-likelihood in m.
    """
    w = _check_w(w, data.n)
    lw = np.log(w)
    if np.ptp(lw) == 0:
        raise AllWeightsEqual("all weights are equal; m is not identified")
    r = data.y - data.X @ profile_beta(data, w, m)
    if _residuals_vanish(r, data.y):
        raise ZeroResiduals("residuals vanish at an exact fit; the score is 0/0")
    return _score_fixed(r ** 2, lw, m)


def _bracketed_roots(g, grid: np.ndarray, xtol: float) -> list:
    values = [g(m) for m in grid]
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if fa == 0:
            roots.append(float(a))
        elif fa * fb < 0:
            roots.append(float(brentq(g, a, b, xtol=xtol)))
    if values[-1] == 0:
        roots.append(float(grid[-1]))
    return roots


def solve_m(data: Dataset, w, cfg: Optional[SolverConfig] = None) -> MSolution:
    """
    Fixed-point iteration for the exponent.

    From m = 0: fit beta(m), freeze the residuals, root-solve the likelihood
    equation over the interval (scan at bracket_step, then Brent), repeat until
    successive iterates differ by less than epsilon.
    """
    cfg = cfg or SolverConfig()
    w = _check_w(w, data.n)
    lw = np.log(w)
    if np.ptp(lw) == 0:
        raise AllWeightsEqual("all weights are equal; m is not identified")
    lo, hi = cfg.m_interval
    grid = np.append(np.arange(lo, hi, cfg.bracket_step), hi)

    m = 0.0 if lo < 0.0 < hi else 0.5 * (lo + hi)
    trace = [m]
    for _ in range(cfg.max_outer_iters):
        r = data.y - data.X @ profile_beta(data, w, m)
        if _residuals_vanish(r, data.y):
            raise ZeroResiduals("residuals vanish at an exact fit; m is undefined")
        r2 = r ** 2
        roots = _bracketed_roots(lambda mm: _score_fixed(r2, lw, mm), grid, cfg.root_xtol)
        if not roots:
            raise NoRootInInterval(f"the likelihood equation has no root in [{lo:g}, {hi:g}]")
        if len(roots) > 1:
            m_new = max(roots, key=lambda mm: profile_loglik(data, w, mm))
        else:
            m_new = roots[0]
        trace.append(m_new)
        logger.debug("solve_m: iterate %d -> m = %.8f", len(trace) - 1, m_new)
        if abs(m_new - m) < cfg.epsilon:
            boundary = min(m_new - lo, hi - m_new) < cfg.boundary_tol
            if boundary:
                logger.warning("m = %.4f lies on the boundary of [%g, %g]", m_new, lo, hi)
            return MSolution(m_hat=m_new, trace=tuple(trace), boundary=boundary)
        m = m_new
    raise MaxIterationsExceeded(f"m did not settle within {cfg.max_outer_iters} iterations")


def fisher_info(w) -> float:
    """Per-observation information for m: mean((ln w)^2) / 2."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if not np.all(np.isfinite(w) & (w > 0)):
        raise NonPositiveWeight("fisher_info needs finite positive weights")
    return float(np.mean(np.log(w) ** 2) / 2.0)


# ============================================================================
# PIPELINES
# ============================================================================

def _ols_abs_residuals(data: Dataset) -> tuple[FitResult, np.ndarray]:
    if data.p < 1:
        raise DegenerateSample("weighting needs at least one regressor")
    ols = ols_fit(data)
    if _residuals_vanish(ols.residuals, data.y):
        raise ZeroResiduals(
            "OLS residuals are all zero: the data lie exactly on a hyperplane, so "
            "the variance structure is undefined; report the OLS fit instead")
    return ols, np.abs(ols.residuals)


def _homoscedastic_fallback(data: Dataset, ols: FitResult) -> MvdFit:
    sigma2 = ols.sse / data.n
    loglik = log_likelihood(data, np.ones(data.n), ols.beta, sigma2, 0.0)
    return MvdFit(model=None, fit=ols, loglik=loglik, iterations=0, m_trace=(),
                  method='M2', homoscedastic_fallback=True)


def _final_fit(data: Dataset, combo: CombinationWeights, m_hat: float) -> tuple[VarianceModel, FitResult, float]:
    fit = wls_fit(data, _inverse_power(combo.w, m_hat))
    sigma2 = profile_sigma2(data, combo.w, m_hat, fit.beta)
    model = VarianceModel(combo=combo, m=m_hat, sigma2=sigma2)
    return model, fit, log_likelihood(data, combo.w, fit.beta, sigma2, m_hat)


def mvd_wls_fit(data: Dataset, cfg: Optional[SolverConfig] = None) -> MvdFit:
    """M2: OLS residuals, combination search, exponent solve, final WLS."""
    cfg = cfg or SolverConfig()
    ols, abs_e = _ols_abs_residuals(data)

    try:
        combo = optimize_combination(data.regressors, abs_e, cfg)
    except (NoFeasibleDirection, ZeroRankVariance) as e:
        logger.warning("homoscedastic fallback: %s", e)
        return _homoscedastic_fallback(data, ols)
    if combo.rs_abs < cfg.fallback_rs:
        logger.warning("homoscedastic fallback: |r_s| = %.4f below %.2f", combo.rs_abs, cfg.fallback_rs)
        return _homoscedastic_fallback(data, ols)

    solution = solve_m(data, combo.w, cfg)
    model, fit, loglik = _final_fit(data, combo, solution.m_hat)
    logger.info("M2: |r_s| = %.4f, m = %.4f after %d iterations",
                combo.rs_abs, solution.m_hat, len(solution.trace) - 1)
    return MvdFit(model=model, fit=fit, loglik=loglik, iterations=len(solution.trace) - 1,
                  m_trace=solution.trace, method='M2', boundary_solution=solution.boundary)


def _m_grid(spec: tuple) -> np.ndarray:
    lo, hi, step = spec
    steps = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(steps + 1), 12)


def uvd_wls_fit(data: Dataset, cfg: Optional[SolverConfig] = None) -> MvdFit:
    """
    M1: weights x_j^-m for the regressor most rank-correlated with |e|.

    m maximizes the profile log-likelihood over a grid. Columns with entries
    <= 0 are skipped in favour of the next-best one.
    """
    cfg = cfg or SolverConfig()
    ols, abs_e = _ols_abs_residuals(data)
    Z = data.regressors

    scores = []
    for j in range(data.p):
        try:
            scores.append(abs(spearman(Z[:, j], abs_e)))
        except ZeroRankVariance:
            scores.append(-1.0)
    chosen = None
    for j in sorted(range(data.p), key=lambda c: (-scores[c], c)):
        if scores[j] < 0:
            continue
        if np.any(Z[:, j] <= 0):
            logger.warning("NonPositiveRegressor: %s has entries <= 0, trying the next-best column",
                           data.regressor_names[j])
            continue
        chosen = j
        break
    if chosen is None:
        raise NonPositiveRegressor("no strictly positive, non-constant regressor is available for x_j^-m weights")

    column = Z[:, chosen]
    k = np.zeros(data.p)
    k[chosen] = 1.0
    combo = CombinationWeights(k=k, scale=1.0 / column.min(), rs_abs=scores[chosen],
                               w=column / column.min())

    grid = _m_grid(cfg.uvd_m_grid)
    lls = np.array([profile_loglik(data, combo.w, m) for m in grid])
    m_hat = float(grid[int(np.argmax(lls))])
    model, fit, loglik = _final_fit(data, combo, m_hat)
    logger.info("M1: weighting on %s, m = %.2f", data.regressor_names[chosen], m_hat)
    return MvdFit(model=model, fit=fit, loglik=loglik, iterations=len(grid),
                  m_trace=(m_hat,), method='M1')
