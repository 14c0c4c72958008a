"""
Command-line interface: ``python -m hetwls {fit,simulate,crossval}``.

Exit codes: 0 success, 1 internal error, 2 usage, 3 data, 4 singular design,
5 weights/variances, 6 estimation, 7 output I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from datetime import datetime
from typing import Any, Optional, Sequence, Union

import numpy as np
import pandas as pd

from hetwls import plots
from hetwls.config import CliConfig, apply_config_file, load_config_file
from hetwls.errors import (
    EXIT_INTERNAL,
    EXIT_OK,
    DataError,
    DegenerateSample,
    EstimationError,
    HetWLSError,
    InputFileNotFound,
    IoError,
    MissingColumn,
    NonNumericCell,
    ParseError,
    UsageError,
    WeightError,
)
from hetwls.linreg import Dataset, Standardization, ols_fit, stepwise_select, vif, white_test
from hetwls.metrics import mae, rse
from hetwls.mvdwls import MvdFit, mvd_wls_fit, uvd_wls_fit
from hetwls.rankcorr import residual_rank_table
from hetwls.simlab import (
    TABLE_NS,
    SimScenario,
    StreamPurpose,
    VarianceForm,
    crossval,
    csv_text,
    derived_seed,
    emit_artifacts,
    run_replications,
    table4_frame,
    write_artifacts,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def init_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        format="%(asctime)s | %(levelname)-8s | %(message)s",
        datefmt="%H:%M:%S",
        level=level,
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True,
    )


# ============================================================================
# CSV INGESTION
# ============================================================================

def _resolve_column(columns: Sequence[str], ref: Union[str, int]) -> str:
    """Column name for a name or (possibly negative) index reference."""
    if isinstance(ref, str):
        if ref in columns:
            return ref
        try:
            ref = int(ref)
        except ValueError:
            raise MissingColumn(f"column {ref!r} not found; available: {list(columns)}") from None
    if -len(columns) <= int(ref) < len(columns):
        return columns[int(ref)]
    raise MissingColumn(f"column index {ref} out of range for {len(columns)} columns")


def _numeric_column(raw: pd.Series, name: str) -> np.ndarray:
    text = raw.astype(str).str.strip()
    blank = np.flatnonzero((text == '').to_numpy())
    if blank.size:
        row = int(blank[0]) + 1
        raise ParseError(f"missing value at row {row}, column {name!r}", row=row, column=name)
    values = pd.to_numeric(text, errors='coerce').to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        row = int(bad[0]) + 1
        raise NonNumericCell(f"non-numeric value {text.iloc[bad[0]]!r} at row {row}, column {name!r}",
                             row=row, column=name)
    return values


def _zscore(values: np.ndarray, name: str) -> tuple[np.ndarray, float, float]:
    mean = float(np.mean(values))
    scale = float(np.std(values, ddof=1))
    if not scale > 0:
        raise DegenerateSample(f"column {name!r} is constant and cannot be standardized")
    return (values - mean) / scale, mean, scale


def load_csv(path: str, config: Optional[CliConfig] = None) -> Dataset:
    """
    Read a UTF-8 CSV with a header row into a Dataset.

    Rows are numbered from 1 after the header in error messages. With
    config.standardize the features and response are z-scored and the
    parameters are kept on Dataset.transform.
    """
    config = config or CliConfig()
    if not os.path.isfile(path):
        raise InputFileNotFound(f"input file not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{path} has no header row") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(f"could not parse {path}: {e}") from e
    df.columns = [str(c).strip() for c in df.columns]
    columns = list(df.columns)

    response = _resolve_column(columns, config.response_column)
    if config.feature_columns:
        features = [_resolve_column(columns, ref) for ref in config.feature_columns]
    else:
        features = [c for c in columns if c != response]
    if not features:
        raise DataError("no feature columns left after choosing the response")
    if response in features:
        raise DataError(f"column {response!r} is both the response and a feature")

    y = _numeric_column(df[response], response)
    Z = np.column_stack([_numeric_column(df[c], c) for c in features])

    transform = None
    if config.standardize:
        scaled = [_zscore(Z[:, j], c) for j, c in enumerate(features)]
        Z = np.column_stack([s[0] for s in scaled])
        y, y_mean, y_scale = _zscore(y, response)
        transform = Standardization(
            feature_mean=np.array([s[1] for s in scaled]),
            feature_scale=np.array([s[2] for s in scaled]),
            response_mean=y_mean,
            response_scale=y_scale,
        )
    logger.info("Loaded %s: n=%d, response %s, %d features", path, len(y), response, len(features))
    return Dataset.from_arrays(y, Z, names=features, transform=transform)


def save_csv(data: Dataset, path: str, response: str = 'y') -> None:
    """Write regressors and response at full precision; load_csv reads it back."""
    frame = pd.DataFrame(np.asarray(data.regressors), columns=list(data.regressor_names))
    frame[response] = data.y
    try:
        frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
    except OSError as e:
        raise IoError(f"could not write {path}: {e}") from e


# ============================================================================
# REPORT HELPERS
# ============================================================================

def _json_ready(value: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_json_ready(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def json_text(payload: dict) -> str:
    body = dict(payload, schema_version=SCHEMA_VERSION)
    return json.dumps(_json_ready(body), sort_keys=True, indent=2, allow_nan=False) + '\n'


def default_output_dir(command: str) -> str:
    return os.path.join('runs', f"{command}-{datetime.now().strftime('%Y%m%d-%H%M%S')}")


def _weighting_label(data: Dataset, fit: MvdFit) -> str:
    """Regressor (M1) or combination (M2) the weights are built from."""
    if fit.k is None:
        return 'none (homoscedastic fallback)'
    if fit.method == 'M1':
        return data.regressor_names[int(np.argmax(np.abs(fit.k)))]
    return ' + '.join(f"{kj:.4g}*{name}" for name, kj in zip(data.regressor_names, fit.k))


def method_table(methods: dict) -> pd.DataFrame:
    """One console row per method: weighting, exponent, k2/k1, MAE and RSE."""
    rows = []
    for method, summary in methods.items():
        if 'error' in summary:
            rows.append({'method': method, 'weighting': 'unavailable'})
            continue
        rows.append({
            'method': method,
            'weighting': summary.get('weighting', 'none'),
            'm_hat': summary.get('m_hat', 0.0),
            'k_ratio': summary.get('k_ratio', float('nan')),
            'mae': summary['mae'],
            'rse': summary['rse'],
        })
    return pd.DataFrame(rows, columns=['method', 'weighting', 'm_hat', 'k_ratio', 'mae', 'rse'])


def _method_summary(data: Dataset, fit: MvdFit) -> dict:
    summary = {
        'weighting': _weighting_label(data, fit),
        'beta': dict(zip(data.names, fit.fit.beta)),
        'm_hat': fit.m_hat,
        'k': dict(zip(data.regressor_names, fit.k)) if fit.k is not None else None,
        'k_ratio': fit.k_ratio,
        'rs_abs': fit.model.combo.rs_abs if fit.model is not None else None,
        'loglik': fit.loglik,
        'iterations': fit.iterations,
        'boundary_solution': fit.boundary_solution,
        'homoscedastic_fallback': fit.homoscedastic_fallback,
        'mae': mae(fit.fit.fitted, data.y),
        'rse': rse(fit.fit),
    }
    if data.transform is not None:
        raw = data.transform.inverse_response(fit.fit.fitted)
        summary['mae_raw'] = mae(raw, data.transform.inverse_response(data.y))
    return summary


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_fit(input_path: str, config: CliConfig) -> dict:
    """White test, residual rank diagnostics, then OLS, M1 and M2 fits."""
    data = load_csv(input_path, config)
    if config.stepwise:
        data = stepwise_select(data)
        logger.info("Stepwise selection kept: %s", ', '.join(data.regressor_names))
    solver = config.solver.with_seed(derived_seed(config.seed, 0, StreamPurpose.OPTIMIZER))

    ols = ols_fit(data)
    white = white_test(data, ols)
    table5 = residual_rank_table(data, ols.residuals)
    vifs = vif(data)

    methods = {'OLS': {'beta': dict(zip(data.names, ols.beta)),
                       'mae': mae(ols.fitted, data.y), 'rse': rse(ols)}}
    fitted = {'OLS': ols.fitted}
    coef_rows = [{'method': 'OLS', 'coefficient': name, 'estimate': b}
                 for name, b in zip(data.names, ols.beta)]
    try:
        m1 = uvd_wls_fit(data, solver)
    except (WeightError, EstimationError) as e:
        logger.warning("M1 unavailable: %s: %s", type(e).__name__, e)
        methods['M1'] = {'error': f"{type(e).__name__}: {e}"}
    else:
        methods['M1'] = _method_summary(data, m1)
        fitted['M1'] = m1.fit.fitted
        coef_rows += [{'method': 'M1', 'coefficient': name, 'estimate': b}
                      for name, b in zip(data.names, m1.fit.beta)]
    m2 = mvd_wls_fit(data, solver)
    methods['M2'] = _method_summary(data, m2)
    fitted['M2'] = m2.fit.fitted
    coef_rows += [{'method': 'M2', 'coefficient': name, 'estimate': b}
                  for name, b in zip(data.names, m2.fit.beta)]
    table6 = pd.DataFrame(coef_rows, columns=['method', 'coefficient', 'estimate'])

    report = {
        'command': 'fit',
        'input': os.path.basename(input_path),
        'n': data.n,
        'variables': list(data.regressor_names),
        'standardization': data.transform.to_dict() if data.transform is not None else None,
        'white_test': {'statistic': white.statistic, 'df': white.df,
                       'p_value': white.p_value, 'reject_at_05': white.reject_at_05},
        'vif': dict(zip(data.regressor_names, vifs)),
        'spearman': table5.to_dict(orient='records'),
        'methods': methods,
        'homoscedastic_fallback': m2.homoscedastic_fallback,
    }

    print(f"\nWhite test: statistic = {white.statistic:.4f}, df = {white.df}, p = {white.p_value:.4g}")
    print("\nSpearman correlation of regressors with |OLS residuals|:")
    print(table5.to_string(index=False))
    if m2.homoscedastic_fallback:
        print("\nHomoscedastic fallback: M2 reports the OLS fit")
    print("\nCoefficients:")
    print(table6.pivot(index='coefficient', columns='method', values='estimate')
          .reindex(list(data.names)).to_string())
    print("\nMethods:")
    print(method_table(methods).to_string(index=False, float_format=lambda v: f"{v:.4f}"))

    output_dir = config.output_dir or default_output_dir('fit')
    write_artifacts({
        'table5.csv': csv_text(table5),
        'table6.csv': csv_text(table6),
        'report.json': json_text(report),
        'fitted_overlay.svg': plots.svg_bytes(plots.fitted_overlay_figure(data.y, fitted)),
    }, output_dir)
    return report


def cmd_simulate(scenario: Optional[str], n: Optional[int], replications: int,
                 config: CliConfig, run_all: bool = False) -> list:
    """Run one (scenario, n) cell, or the full 3x3 grid with run_all."""
    if replications < 1:
        raise UsageError(f"--replications must be at least 1, got {replications}")
    if run_all:
        cells = [(form, size) for form in VarianceForm for size in TABLE_NS]
    else:
        if scenario is None or n is None:
            raise UsageError("simulate needs --scenario and --n, or --all")
        try:
            form = VarianceForm.parse(scenario)
        except ValueError as e:
            raise UsageError(str(e)) from None
        if n < 10:
            raise UsageError(f"--n must be at least 10, got {n}")
        cells = [(form, n)]

    reports = []
    for form, size in cells:
        s = SimScenario(form, size, R=replications, seed=config.seed)
        report = run_replications(s, config.solver, workers=config.workers)
        if report.failures:
            print(f"{s.label} n={size}: {len(report.failures)} of {replications} replicates failed")
        reports.append(report)

    print("\nCombination ratio and exponent (M2):")
    print(table4_frame(reports).to_string(index=False))
    emit_artifacts(reports, config.output_dir or default_output_dir('simulate'))
    return reports


def cmd_crossval(input_path: str, repeats: int, config: CliConfig):
    """Repeated 50/50 split comparing test-half SSE of M1 and M2."""
    if repeats < 1:
        raise UsageError(f"--repeats must be at least 1, got {repeats}")
    data = load_csv(input_path, config)
    if config.stepwise:
        data = stepwise_select(data)
    cv = crossval(data, repeats, config.seed, config.solver, workers=config.workers)

    print(f"\nMean test SSE over {repeats} repeats: "
          f"M1 = {cv.mean_sse_m1:.6g}, M2 = {cv.mean_sse_m2:.6g} (lower: {cv.winner})")
    output_dir = config.output_dir or default_output_dir('crossval')
    summary = json_text({
        'command': 'crossval',
        'input': os.path.basename(input_path),
        'repeats': repeats,
        'seed': config.seed,
        'mean_sse_m1': cv.mean_sse_m1,
        'mean_sse_m2': cv.mean_sse_m2,
        'winner': cv.winner,
        'failures': len(cv.failures),
    })
    emit_artifacts([cv], output_dir, extra_files={'cv_summary.json': summary})
    return cv


# ============================================================================
# ARGUMENTS
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=0, help='Seed for every random stream')
    common.add_argument('--output-dir', default=None, help='Output directory (default: runs/<command>-<time>)')
    common.add_argument('--config', default=None, help='JSON config file; its values override flags')
    common.add_argument('--workers', type=int, default=1, help='Worker processes for replicates/repeats')
    common.add_argument('--verbose', action='store_true', help='Debug logging')

    data_args = argparse.ArgumentParser(add_help=False)
    data_args.add_argument('--input', required=True, help='CSV file with a header row')
    data_args.add_argument('--response', default=None, help='Response column name or index (default: last)')
    data_args.add_argument('--features', default=None, help='Comma-separated feature columns (default: all others)')
    data_args.add_argument('--standardize', action='store_true', help='Z-score features and response')
    data_args.add_argument('--stepwise', action='store_true', help='Backward-AIC preselection of features')

    parser = argparse.ArgumentParser(prog='hetwls', description='Heteroscedastic weighted least squares')
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('fit', parents=[common, data_args], help='Diagnose and fit OLS, M1 and M2')

    sim = sub.add_parser('simulate', parents=[common], help='Monte Carlo comparison of M1 and M2')
    sim.add_argument('--scenario', default=None, help='Variance form: 1, 2 or 3')
    sim.add_argument('--n', type=int, default=None, help='Sample size')
    sim.add_argument('--replications', type=int, default=100, help='Replications per cell')
    sim.add_argument('--all', action='store_true', help='Run every scenario at n = 30, 60, 90')

    cv = sub.add_parser('crossval', parents=[common, data_args], help='Repeated 50/50 split comparison')
    cv.add_argument('--repeats', type=int, default=100, help='Number of random splits')
    return parser


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """CliConfig from flags, then overlaid with the --config file."""
    config = CliConfig(seed=args.seed, output_dir=args.output_dir, workers=args.workers)
    if getattr(args, 'response', None) is not None:
        config.response_column = args.response
    if getattr(args, 'features', None):
        config.feature_columns = [c.strip() for c in args.features.split(',') if c.strip()]
    config.standardize = bool(getattr(args, 'standardize', False))
    config.stepwise = bool(getattr(args, 'stepwise', False))
    if args.config:
        config = apply_config_file(config, load_config_file(args.config))
    if config.workers < 1:
        raise UsageError(f"workers must be at least 1, got {config.workers}")
    if not 0 <= int(config.seed) < 2**64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_OK

    init_logging(args.verbose)
    try:
        config = resolve_config(args)
        if args.command == 'fit':
            cmd_fit(args.input, config)
        elif args.command == 'simulate':
            cmd_simulate(args.scenario, args.n, args.replications, config, run_all=args.all)
        else:
            cmd_crossval(args.input, args.repeats, config)
    except HetWLSError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except Exception:
        logger.exception("Internal error")
        return EXIT_INTERNAL
    return EXIT_OK
