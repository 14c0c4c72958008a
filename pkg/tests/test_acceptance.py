"""
Monte Carlo acceptance suites: full-pipeline recovery on the three variance
scenarios and the large-sample behaviour of the exponent estimator.

These take minutes; run them with ``pytest -m slow``.
"""

import numpy as np
import pytest
from scipy import stats

from hetwls.errors import EstimationError
from hetwls.linreg import Dataset
from hetwls.mvdwls import fisher_info, solve_m, uvd_wls_fit
from hetwls.simlab import SimScenario, crossval, gen_scenario, run_replications

from conftest import power_law_data

pytestmark = pytest.mark.slow


@pytest.fixture(scope='module')
def s1_report():
    return run_replications(SimScenario('S1', 90, R=100, seed=0), workers=4)


@pytest.fixture(scope='module')
def s2_reports():
    return {n: run_replications(SimScenario('S2', n, R=100, seed=0), workers=4) for n in (30, 60, 90)}


@pytest.fixture(scope='module')
def s3_reports():
    return {n: run_replications(SimScenario('S3', n, R=100, seed=0), workers=4) for n in (30, 60, 90)}


class TestScenarioRecovery:

    def test_s2_exponent(self, s2_reports):
        report = s2_reports[90]
        assert report.failures == ()
        assert 1.85 <= report.m_hat_summary <= 2.15

    def test_s1_direction_and_exponent(self, s1_report):
        assert s1_report.failures == ()
        assert 2.0 <= s1_report.k_ratio_summary <= 4.5
        assert 1.8 <= s1_report.m_hat_summary <= 2.2

    def test_s1_intercept_mse(self, s1_report):
        assert s1_report.metrics['M2'].mse[0] < s1_report.metrics['M1'].mse[0]

    def test_s1_slope_mse(self, s1_report):
        assert s1_report.metrics['M2'].mse[1] < 0.006

    def test_s3_dominance(self, s3_reports):
        report = s3_reports[90]
        m1, m2 = report.metrics['M1'], report.metrics['M2']
        assert report.failures == ()
        assert m2.mse[0] < m1.mse[0]
        assert m2.mae_y < m1.mae_y
        assert 1.9 <= report.m_hat_summary <= 2.4

    @pytest.mark.parametrize('n', [30, 60])
    def test_s3_mae_small_samples(self, s3_reports, n):
        assert s3_reports[n].metrics['M2'].mae_y < s3_reports[n].metrics['M1'].mae_y

    def test_s2_direction_has_no_x2_weight(self, s2_reports):
        """Variance driven by x1 alone: the median k2/k1 stays near zero."""
        assert -0.3 <= s2_reports[90].k_ratio_summary <= 0.3

    @pytest.mark.parametrize('n', [30, 60, 90])
    def test_s2_methods_coincide(self, s2_reports, n):
        m1, m2 = s2_reports[n].metrics['M1'], s2_reports[n].metrics['M2']
        assert abs(m1.mae_y - m2.mae_y) / m1.mae_y < 0.15

    def test_s2_slope_mse_similar(self, s2_reports):
        m1, m2 = s2_reports[90].metrics['M1'], s2_reports[90].metrics['M2']
        assert m2.mse[1] == pytest.approx(m1.mse[1], rel=0.5)

    def test_s2_single_variable_selected(self):
        s = SimScenario('S2', 90, R=100, seed=1)
        picks = [uvd_wls_fit(gen_scenario(s, r)).model.combo.k[0] == 1.0 for r in range(s.R)]
        assert np.mean(picks) >= 0.95


class TestExponentAsymptotics:

    def test_error_shrinks_with_n(self):
        medians = []
        for n in (50, 200, 800):
            errors = []
            for seed in range(200):
                data, w = power_law_data(n, 2.0, seed)
                try:
                    errors.append(abs(solve_m(data, w).m_hat - 2.0))
                except EstimationError:
                    errors.append(np.nan)
            medians.append(np.nanmedian(errors))
        assert medians[0] > medians[1] > medians[2]

    def test_standardized_exponent_is_normal(self):
        n, m0 = 2000, 1.0
        w = np.tile([np.exp(-1.0), np.exp(1.0)], n // 2)
        info = fisher_info(w)
        assert info == pytest.approx(0.5)

        scaled = []
        for seed in range(500):
            rng = np.random.default_rng(seed)
            x = rng.uniform(0.0, 10.0, n)
            y = 2.0 + x + rng.normal(size=n) * np.sqrt(w ** m0)
            m_hat = solve_m(Dataset.from_arrays(y, x[:, None]), w).m_hat
            scaled.append(np.sqrt(n) * (m_hat - m0))
        scaled = np.array(scaled)

        assert stats.kstest(scaled * np.sqrt(info), 'norm').pvalue > 0.01
        assert np.var(scaled, ddof=1) == pytest.approx(1.0 / info, rel=0.2)


class TestCrossvalRecovery:

    def test_combination_wins_on_interaction_variance(self):
        data = gen_scenario(SimScenario('S3', 500, R=1, seed=3), 0)
        report = crossval(data, repeats=20, seed=0, workers=4)
        assert report.failures == ()
        assert report.mean_sse_m2 < report.mean_sse_m1
        assert report.winner == 'M2'
