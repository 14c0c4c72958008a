"""
Simulation lab: scenario generators, the replication harness, repeated-split
cross-validation, and the CSV/SVG artifacts built from their reports.

Every random draw comes from a counter-based Philox stream keyed by
(seed, index, purpose), so replicates can run in any order or in parallel and
still produce identical numbers.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum, IntEnum
from itertools import repeat
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from hetwls import plots
from hetwls.config import SolverConfig
from hetwls.errors import (
    DataError,
    DegenerateSample,
    EstimationError,
    HetWLSError,
    IoError,
    NoReports,
    SplitTooSmall,
)
from hetwls.linreg import Dataset
from hetwls.metrics import MetricsReport, sse, summarize
from hetwls.mvdwls import MvdFit, mvd_wls_fit, uvd_wls_fit

logger = logging.getLogger(__name__)

BETA_TRUE = (10.0, 15.0, 5.0)
TABLE_NS = (30, 60, 90)
METHODS = ('M1', 'M2')
COEFFICIENTS = ('beta0', 'beta1', 'beta2')

TABLE_SCHEMAS = {
    'table1_3.csv': ['scenario', 'n', 'coefficient', 'method', 'abs_bias', 'mse'],
    'table4.csv': ['scenario', 'n', 'k_ratio', 'm_hat', 'fallbacks'],
    'fig1.csv': ['scenario', 'n', 'method', 'mae'],
    'cv.csv': ['repeat', 'sse_m1', 'sse_m2'],
    'table5.csv': ['variable', 'spearman', 'p_value'],
    'table6.csv': ['method', 'coefficient', 'estimate'],
}

FLOAT_FORMAT = '%.10g'


# ============================================================================
# RANDOM STREAMS
# ============================================================================

class StreamPurpose(IntEnum):
    DATA = 0
    SPLIT = 1
    OPTIMIZER = 2


def stream(seed: int, index: int, purpose: StreamPurpose) -> np.random.Generator:
    """Independent Philox generator for one (replicate or repeat, purpose) slot."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), int(purpose)))
    return np.random.Generator(np.random.Philox(seq))


def derived_seed(seed: int, index: int, purpose: StreamPurpose) -> int:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), int(purpose)))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


# ============================================================================
# SCENARIOS
# ============================================================================

class VarianceForm(Enum):
    """Error-variance shapes: S1 = 0.01(x1+3x2)^2, S2 = 0.01 x1^2, S3 = 0.01(x1+3x2+x1x2)^2."""

    S1 = 1
    S2 = 2
    S3 = 3

    def variance(self, x1, x2) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self is VarianceForm.S1:
            return 0.01 * (x1 + 3.0 * x2) ** 2
        if self is VarianceForm.S2:
            return 0.01 * x1 ** 2
        return 0.01 * (x1 + 3.0 * x2 + x1 * x2) ** 2

    @classmethod
    def parse(cls, value: Union[int, str, 'VarianceForm']) -> 'VarianceForm':
        if isinstance(value, cls):
            return value
        text = str(value).strip().upper()
        aliases = {'1': cls.S1, 'I': cls.S1, '2': cls.S2, 'II': cls.S2, '3': cls.S3, 'III': cls.S3}
        if text in cls.__members__:
            return cls[text]
        if text in aliases:
            return aliases[text]
        raise ValueError(f"unknown scenario {value!r}; expected 1, 2 or 3")


@dataclass(frozen=True)
class SimScenario:
    variance_form: VarianceForm
    n: int
    R: int = 100
    seed: int = 0
    beta_true: tuple = BETA_TRUE

    def __post_init__(self):
        object.__setattr__(self, 'variance_form', VarianceForm.parse(self.variance_form))
        object.__setattr__(self, 'beta_true', tuple(float(b) for b in self.beta_true))
        if len(self.beta_true) != 3:
            raise DegenerateSample("scenarios use an intercept and two regressors")
        if self.n < 10:
            raise DegenerateSample(f"scenario sample size must be at least 10, got {self.n}")
        if self.R < 1:
            raise ValueError(f"replication count must be at least 1, got {self.R}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def label(self) -> str:
        return self.variance_form.name


def gen_scenario(s: SimScenario, replicate: int) -> Dataset:
    """x1 ~ U(5, 15), x2 ~ Exp(1), y = beta'x + N(0, sigma_i^2)."""
    if not 0 <= replicate < s.R:
        raise ValueError(f"replicate {replicate} outside [0, {s.R})")
    rng = stream(s.seed, replicate, StreamPurpose.DATA)
    x1 = rng.uniform(5.0, 15.0, size=s.n)
    x2 = rng.exponential(1.0, size=s.n)
    sd = np.sqrt(s.variance_form.variance(x1, x2))
    b0, b1, b2 = s.beta_true
    y = b0 + b1 * x1 + b2 * x2 + rng.normal(0.0, 1.0, size=s.n) * sd
    return Dataset.from_arrays(y, np.column_stack([x1, x2]), names=('x1', 'x2'))


# ============================================================================
# REPLICATIONS
# ============================================================================

@dataclass(frozen=True)
class SimReport:
    """Per-method metrics plus per-replicate k-ratio and m samples (NaN where a replicate failed)."""

    scenario: SimScenario
    metrics: Mapping[str, MetricsReport]
    k_ratio: Mapping[str, np.ndarray]
    m_hat: Mapping[str, np.ndarray]
    failures: tuple = ()
    fallbacks: int = 0      # M2 homoscedastic fallbacks among successful replicates

    def __post_init__(self):
        for samples in (self.k_ratio, self.m_hat):
            for method, values in samples.items():
                if len(values) != self.scenario.R:
                    raise DataError(f"{method} holds {len(values)} samples for R = {self.scenario.R}")

    @property
    def k_ratio_summary(self) -> float:
        """Median k2/k1 of M2 over successful replicates."""
        values = self.k_ratio['M2']
        return float(np.nanmedian(values)) if np.any(np.isfinite(values)) else float('nan')

    @property
    def m_hat_summary(self) -> float:
        values = self.m_hat['M2']
        return float(np.nanmean(values)) if np.any(np.isfinite(values)) else float('nan')


def _fit_replicate(s: SimScenario, replicate: int, cfg: SolverConfig) -> dict:
    data = gen_scenario(s, replicate)
    rep_cfg = cfg.with_seed(derived_seed(s.seed, replicate, StreamPurpose.OPTIMIZER))
    try:
        fits = {'M1': uvd_wls_fit(data, rep_cfg), 'M2': mvd_wls_fit(data, rep_cfg)}
    except HetWLSError as e:
        return {'replicate': replicate, 'error': f"{type(e).__name__}: {e}"}
    return {
        'replicate': replicate,
        'error': None,
        'y': data.y,
        'fits': {
            method: {
                'beta': f.fit.beta,
                'fitted': f.fit.fitted,
                'k_ratio': f.k_ratio,
                'm_hat': f.m_hat,
                'fallback': f.homoscedastic_fallback,
            }
            for method, f in fits.items()
        },
    }


def run_replications(s: SimScenario, cfg: Optional[SolverConfig] = None, workers: int = 1) -> SimReport:
    """
    Fit M1 and M2 on every replicate and aggregate.

    A replicate where either method fails is recorded and dropped from both
    methods' aggregates.
    """
    cfg = cfg or SolverConfig()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_fit_replicate, repeat(s), range(s.R), repeat(cfg)))
    else:
        outcomes = [_fit_replicate(s, r, cfg) for r in range(s.R)]

    failures = tuple((o['replicate'], o['error']) for o in outcomes if o['error'] is not None)
    for replicate, message in failures:
        logger.warning("%s n=%d replicate %d failed: %s", s.label, s.n, replicate, message)
    ok = [o for o in outcomes if o['error'] is None]
    if not ok:
        raise EstimationError(f"all {s.R} replicates of {s.label} n={s.n} failed")

    df_resid = s.n - len(s.beta_true)
    actual = np.vstack([o['y'] for o in ok])
    metrics, k_ratio, m_hat = {}, {}, {}
    for method in METHODS:
        estimates = np.vstack([o['fits'][method]['beta'] for o in ok])
        pred = np.vstack([o['fits'][method]['fitted'] for o in ok])
        metrics[method] = summarize(estimates, s.beta_true, pred, actual, df_resid)
        k_ratio[method] = np.full(s.R, np.nan)
        m_hat[method] = np.full(s.R, np.nan)
        for o in ok:
            k_ratio[method][o['replicate']] = o['fits'][method]['k_ratio']
            m_hat[method][o['replicate']] = o['fits'][method]['m_hat']
    fallbacks = sum(o['fits']['M2']['fallback'] for o in ok)

    logger.info("%s n=%d: %d/%d replicates, MAE M1 %.4f, M2 %.4f", s.label, s.n, len(ok), s.R,
                metrics['M1'].mae_y, metrics['M2'].mae_y)
    return SimReport(scenario=s, metrics=metrics, k_ratio=k_ratio, m_hat=m_hat,
                     failures=failures, fallbacks=int(fallbacks))


# ============================================================================
# CROSS-VALIDATION
# ============================================================================

Estimator = Callable[[Dataset, SolverConfig], MvdFit]


@dataclass(frozen=True)
class CvReport:
    """Test-half SSE per repeat for M1 and M2 (NaN where a repeat failed)."""

    repeats: int
    sse_m1: np.ndarray
    sse_m2: np.ndarray
    seed: int = 0
    failures: tuple = ()

    @property
    def mean_sse_m1(self) -> float:
        return float(np.nanmean(self.sse_m1)) if np.any(np.isfinite(self.sse_m1)) else float('nan')

    @property
    def mean_sse_m2(self) -> float:
        return float(np.nanmean(self.sse_m2)) if np.any(np.isfinite(self.sse_m2)) else float('nan')

    @property
    def winner(self) -> str:
        a, b = self.mean_sse_m1, self.mean_sse_m2
        if not (np.isfinite(a) and np.isfinite(b)) or a == b:
            return 'tie'
        return 'M2' if b < a else 'M1'

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({'repeat': np.arange(self.repeats), 'sse_m1': self.sse_m1,
                             'sse_m2': self.sse_m2})


def split_halves(n: int, seed: int, repeat_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded 50/50 partition; the training half gets floor(n/2) rows."""
    perm = stream(seed, repeat_index, StreamPurpose.SPLIT).permutation(n)
    half = n // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def _cv_repeat(data: Dataset, repeat_index: int, seed: int, cfg: SolverConfig,
               m1: Estimator, m2: Estimator) -> tuple:
    train_rows, test_rows = split_halves(data.n, seed, repeat_index)
    train, test = data.take(train_rows), data.take(test_rows)
    rep_cfg = cfg.with_seed(derived_seed(seed, repeat_index, StreamPurpose.OPTIMIZER))
    try:
        sse_m1 = sse(m1(train, rep_cfg).predict(test.X), test.y)
        sse_m2 = sse(m2(train, rep_cfg).predict(test.X), test.y)
    except HetWLSError as e:
        return repeat_index, np.nan, np.nan, f"{type(e).__name__}: {e}"
    return repeat_index, sse_m1, sse_m2, None


def crossval(data: Dataset, repeats: int, seed: int, cfg: Optional[SolverConfig] = None,
             m1: Estimator = uvd_wls_fit, m2: Estimator = mvd_wls_fit, workers: int = 1) -> CvReport:
    """Repeat: split 50/50, fit both methods on the training half, score SSE on the test half."""
    cfg = cfg or SolverConfig()
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1, got {repeats}")
    if data.n < 2 * (data.p + 2):
        raise SplitTooSmall(f"n = {data.n} cannot be split into two fittable halves for p = {data.p}")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_cv_repeat, repeat(data), range(repeats), repeat(seed),
                                 repeat(cfg), repeat(m1), repeat(m2)))
    else:
        rows = [_cv_repeat(data, r, seed, cfg, m1, m2) for r in range(repeats)]

    sse_m1 = np.array([row[1] for row in rows], dtype=float)
    sse_m2 = np.array([row[2] for row in rows], dtype=float)
    failures = tuple((row[0], row[3]) for row in rows if row[3] is not None)
    for repeat_index, message in failures:
        logger.warning("cross-validation repeat %d failed: %s", repeat_index, message)
    return CvReport(repeats=repeats, sse_m1=sse_m1, sse_m2=sse_m2, seed=int(seed), failures=failures)


# ============================================================================
# TABLES AND ARTIFACTS
# ============================================================================

def table1_3_frame(reports: Sequence[SimReport]) -> pd.DataFrame:
    rows = []
    for rep in reports:
        for i, coefficient in enumerate(COEFFICIENTS):
            for method in METHODS:
                rows.append({
                    'scenario': rep.scenario.label,
                    'n': rep.scenario.n,
                    'coefficient': coefficient,
                    'method': method,
                    'abs_bias': rep.metrics[method].bias_abs[i],
                    'mse': rep.metrics[method].mse[i],
                })
    return pd.DataFrame(rows, columns=TABLE_SCHEMAS['table1_3.csv'])


def table4_frame(reports: Sequence[SimReport]) -> pd.DataFrame:
    rows = [{'scenario': r.scenario.label, 'n': r.scenario.n,
             'k_ratio': r.k_ratio_summary, 'm_hat': r.m_hat_summary,
             'fallbacks': r.fallbacks} for r in reports]
    return pd.DataFrame(rows, columns=TABLE_SCHEMAS['table4.csv'])


def fig1_frame(reports: Sequence[SimReport]) -> pd.DataFrame:
    rows = [{'scenario': r.scenario.label, 'n': r.scenario.n, 'method': method,
             'mae': r.metrics[method].mae_y} for r in reports for method in METHODS]
    return pd.DataFrame(rows, columns=TABLE_SCHEMAS['fig1.csv'])


def csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def write_artifacts(files: Mapping[str, Union[str, bytes]], output_dir: str) -> list[str]:
    """Write pre-rendered artifacts; on failure, remove whatever was written."""
    written = []
    try:
        os.makedirs(output_dir, exist_ok=True)
        for name, content in files.items():
            path = os.path.join(output_dir, name)
            mode = 'wb' if isinstance(content, bytes) else 'w'
            # Recorded before opening so a failed write is cleaned up too
            written.append(path)
            with open(path, mode, **({} if mode == 'wb' else {'encoding': 'utf-8', 'newline': ''})) as f:
                f.write(content)
    except OSError as e:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise IoError(f"could not write artifacts to {output_dir}: {e}") from e
    for path in written:
        print(f"Saved: {path}")
    return written


def emit_artifacts(reports: Iterable[Union[SimReport, CvReport]], output_dir: str,
                   interactive: bool = True,
                   extra_files: Optional[Mapping[str, Union[str, bytes]]] = None) -> list[str]:
    """
    Render tables and figures for simulation and cross-validation reports.

    Everything is rendered in memory first, so a rendering error leaves no files.
    extra_files (pre-rendered, e.g. a JSON summary) go out in the same write.
    """
    reports = list(reports)
    if not reports:
        raise NoReports("no reports to emit")
    sims = sorted((r for r in reports if isinstance(r, SimReport)),
                  key=lambda r: (r.scenario.variance_form.value, r.scenario.n))
    cvs = [r for r in reports if isinstance(r, CvReport)]
    if len(cvs) > 1:
        raise DataError("cv.csv holds a single cross-validation report")

    files = {}
    if sims:
        fig1 = fig1_frame(sims)
        files['table1_3.csv'] = csv_text(table1_3_frame(sims))
        files['table4.csv'] = csv_text(table4_frame(sims))
        files['fig1.csv'] = csv_text(fig1)
        files['fig1_mae.svg'] = plots.svg_bytes(plots.mae_curve_figure(fig1))
        if interactive and plots.PLOTLY_AVAILABLE:
            files['fig1_interactive.html'] = plots.mae_interactive_html(fig1)
    if cvs:
        files['cv.csv'] = csv_text(cvs[0].frame())
        files['cv_sse.svg'] = plots.svg_bytes(plots.cv_sse_figure(cvs[0]))
    files.update(extra_files or {})
    return write_artifacts(files, output_dir)


def validate_tables(output_dir: str, meta: Optional[Mapping] = None) -> tuple[list, list]:
    """
    Check every known CSV in output_dir against TABLE_SCHEMAS.

    With meta (the parsed data/meta.json), also check that each table's
    columns are documented. Returns (errors, warnings).
    """
    errors, warnings = [], []
    if not os.path.isdir(output_dir):
        return [f"Directory not found: {output_dir}"], warnings
    found = 0
    for name, columns in TABLE_SCHEMAS.items():
        path = os.path.join(output_dir, name)
        if not os.path.isfile(path):
            continue
        found += 1
        try:
            header = list(pd.read_csv(path, nrows=0).columns)
        except (OSError, ValueError) as e:
            errors.append(f"CSV read error: {name} - {e}")
            continue
        if header != columns:
            errors.append(f"{name}: columns {header} != {columns}")
        if meta is not None:
            documented = meta.get('tables', {}).get(name, {}).get('fields', {})
            missing = set(header) - set(documented)
            if missing:
                warnings.append(f"{name}: columns not in meta.json: {sorted(missing)}")
    if not found:
        warnings.append(f"{output_dir}: no known tables")
    return errors, warnings
