"""Shared fixtures for the hetwls test suites."""

import numpy as np
import pytest

from hetwls.linreg import Dataset
from hetwls.simlab import SimScenario, gen_scenario


def power_law_data(n, m0, seed, w_range=(1.0, 4.0), beta=(2.0, 1.0)):
    """y = b0 + b1 x + e with Var(e_i) = 0.25 w_i^m0 and w drawn independently of x."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 10.0, n)
    w = rng.uniform(*w_range, n)
    y = beta[0] + beta[1] * x + rng.normal(0.0, 1.0, n) * np.sqrt(0.25 * w ** m0)
    return Dataset.from_arrays(y, x[:, None]), w


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def linear_data(rng):
    """Homoscedastic two-regressor data with known coefficients (1, 2, -1)."""
    n = 80
    Z = rng.uniform(1.0, 5.0, (n, 2))
    y = 1.0 + 2.0 * Z[:, 0] - Z[:, 1] + rng.normal(0.0, 0.5, n)
    return Dataset.from_arrays(y, Z, names=('a', 'b'))


@pytest.fixture
def s1_data():
    """One draw of scenario S1 (variance 0.01(x1 + 3 x2)^2) at n = 300."""
    return gen_scenario(SimScenario('S1', 300, R=1, seed=7), 0)


@pytest.fixture
def paired_homoscedastic_data():
    """Duplicated x with residuals exactly +-0.5 around y = 3 + 2x; x takes both signs."""
    x = np.repeat(np.linspace(-2.0, 2.0, 50), 2)
    signs = np.tile([1.0, -1.0], 50)
    y = 3.0 + 2.0 * x + 0.5 * signs
    return Dataset.from_arrays(y, x[:, None], names=('x',))
