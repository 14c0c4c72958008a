"""
hetwls: weighted least squares under multivariate-dependent heteroscedasticity.

Error variances are modelled as sigma^2 (x'k)^m, with the direction k chosen by
rank correlation against OLS residuals and m by profile maximum likelihood.
"""

from hetwls.config import CliConfig, SolverConfig
from hetwls.errors import HetWLSError
from hetwls.linreg import Dataset, FitResult, ols_fit, stepwise_select, vif, white_test, wls_fit
from hetwls.metrics import MetricsReport, abs_bias, mae, mse, rse, sse, summarize
from hetwls.mvdwls import (
    CombinationWeights,
    MvdFit,
    VarianceModel,
    concentrated_loglik,
    fisher_info,
    log_likelihood,
    m_score,
    mvd_wls_fit,
    optimize_combination,
    solve_m,
    uvd_wls_fit,
)
from hetwls.rankcorr import ranks, spearman, spearman_pvalue
from hetwls.simlab import CvReport, SimReport, SimScenario, VarianceForm, crossval, gen_scenario, run_replications

__version__ = '0.1.0'
