"""Tests for CSV ingestion, configuration resolution and the hetwls commands."""

import json

import numpy as np
import pandas as pd
import pytest

from hetwls.cli import build_parser, cmd_fit, json_text, load_csv, main, resolve_config, save_csv
from hetwls.config import CliConfig
from hetwls.errors import InputFileNotFound, MissingColumn, NonNumericCell, ParseError
from hetwls.linreg import Dataset
from hetwls.simlab import SimScenario, gen_scenario


def _write_rows(path, header, rows):
    lines = [','.join(header)] + [','.join(str(v) for v in row) for row in rows]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')


@pytest.fixture
def small_csv(tmp_path):
    path = tmp_path / 'small.csv'
    _write_rows(path, ['a', 'b', 'y'], [(i, (i * 7) % 5 + 1, 2 * i + 1) for i in range(1, 13)])
    return path


@pytest.fixture
def s1_csv(tmp_path):
    path = tmp_path / 's1.csv'
    save_csv(gen_scenario(SimScenario('S1', 600, R=1, seed=11), 0), str(path))
    return path


@pytest.fixture
def hetero_csv(tmp_path):
    rng = np.random.default_rng(3)
    x = rng.uniform(1.0, 4.0, 80)
    y = 1.0 + 2.0 * x + rng.normal(size=80) * 0.5 * x
    path = tmp_path / 'hetero.csv'
    save_csv(Dataset.from_arrays(y, x[:, None], names=('x',)), str(path))
    return path


class TestLoadCsv:

    def test_default_response_is_last_column(self, small_csv):
        data = load_csv(str(small_csv))
        assert data.regressor_names == ('a', 'b')
        assert data.n == 12
        np.testing.assert_array_equal(data.y, 2 * np.arange(1, 13) + 1)

    def test_response_and_features_by_name_or_index(self, small_csv):
        data = load_csv(str(small_csv), CliConfig(response_column='a', feature_columns=['2']))
        assert data.regressor_names == ('y',)
        np.testing.assert_array_equal(data.y, np.arange(1, 13))

    def test_blank_cell_reports_row(self, tmp_path):
        path = tmp_path / 'blank.csv'
        rows = [(i, i + 1, 2 * i) for i in range(1, 11)]
        rows[6] = (7, '', 14)
        _write_rows(path, ['a', 'b', 'y'], rows)
        with pytest.raises(ParseError) as excinfo:
            load_csv(str(path))
        assert excinfo.value.row == 7
        assert excinfo.value.column == 'b'

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / 'text.csv'
        rows = [(i, i + 1, 2 * i) for i in range(1, 11)]
        rows[2] = (3, 'abc', 6)
        _write_rows(path, ['a', 'b', 'y'], rows)
        with pytest.raises(NonNumericCell) as excinfo:
            load_csv(str(path))
        assert excinfo.value.row == 3

    def test_missing_column(self, small_csv):
        with pytest.raises(MissingColumn):
            load_csv(str(small_csv), CliConfig(response_column='z'))
        with pytest.raises(MissingColumn):
            load_csv(str(small_csv), CliConfig(response_column=5))

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputFileNotFound):
            load_csv(str(tmp_path / 'absent.csv'))

    def test_save_then_load(self, tmp_path, linear_data):
        path = tmp_path / 'linear.csv'
        save_csv(linear_data, str(path))
        loaded = load_csv(str(path))
        assert loaded.regressor_names == linear_data.regressor_names
        np.testing.assert_array_equal(loaded.X, linear_data.X)
        np.testing.assert_array_equal(loaded.y, linear_data.y)

    def test_standardize(self, small_csv):
        data = load_csv(str(small_csv), CliConfig(standardize=True))
        np.testing.assert_allclose(data.regressors.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(data.regressors.std(axis=0, ddof=1), 1.0)
        raw = data.transform.inverse_response(data.y)
        np.testing.assert_allclose(raw, 2 * np.arange(1, 13) + 1)


class TestConfig:

    def test_flags(self):
        args = build_parser().parse_args(['fit', '--input', 'x.csv', '--seed', '4',
                                          '--features', 'a, b', '--response', 'y'])
        config = resolve_config(args)
        assert config.seed == 4
        assert config.feature_columns == ['a', 'b']
        assert config.response_column == 'y'

    def test_config_file_overrides_flags(self, tmp_path):
        path = tmp_path / 'settings.json'
        path.write_text(json.dumps({'seed': 9, 'standardize': True,
                                    'solver': {'generations': 50}}), encoding='utf-8')
        args = build_parser().parse_args(['fit', '--input', 'x.csv', '--seed', '1',
                                          '--config', str(path)])
        config = resolve_config(args)
        assert config.seed == 9
        assert config.standardize
        assert config.solver.generations == 50

    def test_json_text_nulls_non_finite(self):
        payload = json.loads(json_text({'a': float('nan'), 'b': np.float64(1.5), 'c': np.int64(2)}))
        assert payload == {'a': None, 'b': 1.5, 'c': 2, 'schema_version': 1}


class TestExitCodes:

    def test_zero_replications_is_usage_error(self, tmp_path):
        argv = ['simulate', '--scenario', '1', '--n', '30', '--replications', '0',
                '--output-dir', str(tmp_path)]
        assert main(argv) == 2

    def test_unknown_flag(self):
        assert main(['fit', '--bogus']) == 2

    def test_missing_input_is_data_error(self, tmp_path):
        assert main(['fit', '--input', str(tmp_path / 'absent.csv'),
                     '--output-dir', str(tmp_path / 'out')]) == 3

    def test_simulate_writes_tables(self, tmp_path):
        argv = ['simulate', '--scenario', 'II', '--n', '30', '--replications', '2',
                '--output-dir', str(tmp_path)]
        assert main(argv) == 0
        table4 = pd.read_csv(tmp_path / 'table4.csv')
        assert list(table4['scenario']) == ['S2']
        assert 0 <= table4['fallbacks'].iloc[0] <= 2


class TestFitCommand:

    def test_homoscedastic_data_falls_back(self, tmp_path, paired_homoscedastic_data):
        path = tmp_path / 'flat.csv'
        save_csv(paired_homoscedastic_data, str(path))
        out = tmp_path / 'out'
        assert main(['fit', '--input', str(path), '--output-dir', str(out)]) == 0
        report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
        assert report['white_test']['p_value'] > 0.05
        assert report['homoscedastic_fallback']
        assert 'error' in report['methods']['M1']
        table6 = pd.read_csv(out / 'table6.csv')
        assert set(table6['method']) == {'OLS', 'M2'}

    def test_combination_ratio_on_s1(self, tmp_path, s1_csv):
        report = cmd_fit(str(s1_csv), CliConfig(output_dir=str(tmp_path)))
        assert report['white_test']['reject_at_05']
        assert 2.0 <= report['methods']['M2']['k_ratio'] <= 4.5
        assert (tmp_path / 'fitted_overlay.svg').exists()

    def test_one_rank_row_per_feature(self, tmp_path):
        rng = np.random.default_rng(8)
        Z = rng.uniform(1.0, 5.0, (31, 3))
        y = Z @ np.array([1.0, -2.0, 0.5]) + rng.normal(size=31) * 0.3 * Z[:, 2]
        path = tmp_path / 'three.csv'
        save_csv(Dataset.from_arrays(y, Z, names=('x1', 'x2', 'x3')), str(path))
        out = tmp_path / 'out'
        assert main(['fit', '--input', str(path), '--output-dir', str(out)]) == 0
        table5 = pd.read_csv(out / 'table5.csv')
        assert list(table5['variable']) == ['x1', 'x2', 'x3']
        table6 = pd.read_csv(out / 'table6.csv')
        assert len(table6[table6['method'] == 'OLS']) == 4

    def test_console_lists_each_method(self, tmp_path, s1_csv, capsys):
        report = cmd_fit(str(s1_csv), CliConfig(output_dir=str(tmp_path)))
        out = capsys.readouterr().out
        lines = out.split('Methods:')[1].strip().splitlines()
        assert lines[0].split() == ['method', 'weighting', 'm_hat', 'k_ratio', 'mae', 'rse']
        rows = {line.split()[0]: line for line in lines[1:4]}
        assert set(rows) == {'OLS', 'M1', 'M2'}
        for method, row in rows.items():
            summary = report['methods'][method]
            assert f"{summary['mae']:.4f}" in row
            assert f"{summary['rse']:.4f}" in row
        assert report['methods']['M1']['weighting'] in ('x1', 'x2')
        assert report['methods']['M1']['weighting'] in rows['M1'].split()
        assert f"{report['methods']['M2']['m_hat']:.4f}" in rows['M2']
        assert f"{report['methods']['M2']['k_ratio']:.4f}" in rows['M2']

    def test_homoscedastic_positive_regressors(self, tmp_path):
        """
        Constant variance with positive regressors. The rank search still finds
        |r_s| of order 0.1, so M2 normally fits a weighting instead of falling
        back; either way its coefficients stay close to the true ones.
        """
        rng = np.random.default_rng(12)
        Z = rng.uniform(1.0, 5.0, (300, 2))
        y = 1.0 + 2.0 * Z[:, 0] - Z[:, 1] + rng.normal(0.0, 0.5, 300)
        path = tmp_path / 'flat.csv'
        save_csv(Dataset.from_arrays(y, Z, names=('a', 'b')), str(path))
        report = cmd_fit(str(path), CliConfig(output_dir=str(tmp_path / 'out')))
        m2 = report['methods']['M2']
        assert report['white_test']['df'] == 5
        if m2['homoscedastic_fallback']:
            assert m2['m_hat'] == 0.0
            assert m2['beta'] == pytest.approx(report['methods']['OLS']['beta'])
        else:
            assert 0.05 <= m2['rs_abs'] < 0.35
            assert np.isfinite(m2['m_hat'])
        for name, true in (('const', 1.0), ('a', 2.0), ('b', -1.0)):
            assert m2['beta'][name] == pytest.approx(true, abs=0.4)

    def test_stepwise_keeps_a_regressor(self, tmp_path):
        """Regressors uncorrelated with y: stepwise keeps one column and the fit still runs."""
        rng = np.random.default_rng(4)
        y = rng.normal(size=60)
        yc = y - y.mean()
        Z = rng.uniform(1.0, 5.0, (60, 2))
        Z = Z - np.outer(yc, yc @ Z) / (yc @ yc)
        path = tmp_path / 'noise.csv'
        save_csv(Dataset.from_arrays(y, Z, names=('u', 'v')), str(path))
        out = tmp_path / 'out'
        assert main(['fit', '--input', str(path), '--stepwise', '--output-dir', str(out)]) == 0
        report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
        assert len(report['variables']) == 1

    def test_reruns_are_identical(self, tmp_path, s1_csv):
        for name in ('a', 'b'):
            assert main(['fit', '--input', str(s1_csv), '--seed', '3',
                         '--output-dir', str(tmp_path / name)]) == 0
        for name in ('table5.csv', 'table6.csv', 'report.json'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


class TestCrossvalCommand:

    def test_single_repeat(self, tmp_path, hetero_csv):
        out = tmp_path / 'cv'
        assert main(['crossval', '--input', str(hetero_csv), '--repeats', '1',
                     '--output-dir', str(out)]) == 0
        assert len(pd.read_csv(out / 'cv.csv')) == 1
        summary = json.loads((out / 'cv_summary.json').read_text(encoding='utf-8'))
        assert summary['repeats'] == 1
        assert summary['winner'] in ('M1', 'M2', 'tie')
        assert sorted(p.name for p in out.iterdir()) == ['cv.csv', 'cv_sse.svg', 'cv_summary.json']

    def test_reruns_are_identical(self, tmp_path, hetero_csv):
        for name in ('a', 'b'):
            assert main(['crossval', '--input', str(hetero_csv), '--repeats', '3', '--seed', '5',
                         '--output-dir', str(tmp_path / name)]) == 0
        assert (tmp_path / 'a' / 'cv.csv').read_bytes() == (tmp_path / 'b' / 'cv.csv').read_bytes()

    def test_zero_repeats(self, tmp_path, hetero_csv):
        assert main(['crossval', '--input', str(hetero_csv), '--repeats', '0',
                     '--output-dir', str(tmp_path)]) == 2
