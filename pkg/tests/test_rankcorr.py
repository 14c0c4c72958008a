"""Tests for ranking, Spearman correlation and its significance test."""

import numpy as np
import pytest
from scipy import stats

from hetwls.errors import DegenerateCorrelation, DimensionMismatch, TooFewObservations, ZeroRankVariance
from hetwls.linreg import Dataset, ols_fit
from hetwls.rankcorr import ranks, residual_rank_table, spearman, spearman_pvalue


def _brute_force_spearman(a, b):
    """Sort-based ranks (no ties) and the d^2 formula with integer arithmetic."""
    n = len(a)
    ra = np.empty(n, dtype=int)
    rb = np.empty(n, dtype=int)
    ra[np.argsort(a)] = np.arange(1, n + 1)
    rb[np.argsort(b)] = np.arange(1, n + 1)
    d2 = int(np.sum((ra - rb) ** 2))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0))


class TestRanks:

    def test_average_ranks_for_ties(self):
        result = ranks([10.0, 20.0, 20.0, 30.0])
        np.testing.assert_array_equal(result.ranks, [1.0, 2.5, 2.5, 4.0])
        assert result.has_ties

    def test_no_ties(self):
        result = ranks([3.0, 1.0, 2.0])
        np.testing.assert_array_equal(result.ranks, [3.0, 1.0, 2.0])
        assert not result.has_ties
        assert len(result) == 3

    def test_ranks_sum(self, rng):
        v = rng.integers(0, 5, 40).astype(float)
        assert ranks(v).ranks.sum() == pytest.approx(40 * 41 / 2)

    def test_too_short(self):
        with pytest.raises(TooFewObservations):
            ranks([1.0])


class TestSpearman:

    def test_monotone(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        assert spearman(x, np.exp(x)) == 1.0
        assert spearman(x, -x ** 3) == -1.0

    def test_matches_brute_force_on_permutations(self):
        """1000 random permutations agree exactly with the sort-based oracle."""
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n = int(rng.integers(3, 40))
            a = rng.permutation(n).astype(float)
            b = rng.permutation(n).astype(float)
            assert spearman(a, b) == _brute_force_spearman(a, b)

    def test_ties_match_scipy(self, rng):
        a = rng.integers(0, 6, 50).astype(float)
        b = rng.integers(0, 4, 50).astype(float)
        assert spearman(a, b) == pytest.approx(stats.spearmanr(a, b).statistic, abs=1e-12)

    def test_symmetric_and_bounded(self, rng):
        a, b = rng.normal(size=(2, 30))
        r = spearman(a, b)
        assert r == spearman(b, a)
        assert -1.0 <= r <= 1.0

    def test_constant_vector(self):
        with pytest.raises(ZeroRankVariance):
            spearman([2.0, 2.0, 2.0, 2.0], [1.0, 2.0, 3.0, 4.0])

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            spearman([1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])

    def test_too_few(self):
        with pytest.raises(TooFewObservations):
            spearman([1.0, 2.0], [2.0, 1.0])


class TestSpearmanPValue:

    @pytest.mark.parametrize('r_s, expected', [
        (0.502, 0.0040),
        (0.467, 0.0081),
        (0.459, 0.0094),
    ])
    def test_residual_table_values(self, r_s, expected):
        """At n = 31 the t approximation lands within 0.003 of these reference p-values."""
        result = spearman_pvalue(r_s, 31)
        assert abs(result.p_value - expected) < 0.003
        assert result.reject_at_05
        assert result.df == 29

    def test_matches_scipy_t_approximation(self, rng):
        a, b = rng.normal(size=(2, 25))
        reference = stats.spearmanr(a, b)
        result = spearman_pvalue(reference.statistic, 25)
        assert result.p_value == pytest.approx(reference.pvalue, rel=1e-8)

    def test_zero_correlation(self):
        result = spearman_pvalue(0.0, 20)
        assert result.p_value == pytest.approx(1.0)
        assert not result.reject_at_05

    def test_perfect_correlation_is_exact(self):
        result = spearman_pvalue(-1.0, 10)
        assert result.exact
        assert result.p_value == 0.0
        assert result.statistic == -np.inf

    def test_too_few(self):
        with pytest.raises(TooFewObservations):
            spearman_pvalue(0.5, 3)

    def test_out_of_range(self):
        with pytest.raises(DegenerateCorrelation):
            spearman_pvalue(1.2, 10)


class TestResidualRankTable:

    def test_one_row_per_regressor(self, rng):
        Z = rng.uniform(1.0, 3.0, (31, 3))
        y = Z @ np.array([1.0, 2.0, 3.0]) + rng.normal(size=31) * Z[:, 2]
        data = Dataset.from_arrays(y, Z, names=('x1', 'x2', 'x3'))
        table = residual_rank_table(data, ols_fit(data).residuals)
        assert list(table.columns) == ['variable', 'spearman', 'p_value']
        assert list(table['variable']) == ['x1', 'x2', 'x3']
        assert table['p_value'].between(0.0, 1.0).all()

    def test_constant_regressor_reports_nan(self, rng):
        Z = np.column_stack([rng.normal(size=20), np.full(20, 3.0)])
        data = Dataset.from_arrays(rng.normal(size=20), Z)
        table = residual_rank_table(data, rng.normal(size=20))
        assert np.isnan(table.loc[1, 'spearman'])
