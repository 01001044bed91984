import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.stats import gaussian_kde

from ssfamon.errors import DataError
from ssfamon.limits import ControlLimit, evaluate, kde_limit, silverman_bandwidth


def scipy_limit(x, alpha):
    h = silverman_bandwidth(x)
    kde = gaussian_kde(x, bw_method=h / np.std(x, ddof=1))
    f = lambda c: kde.integrate_box_1d(-np.inf, c) - alpha
    return brentq(f, x.min() - 10 * h, x.max() + 10 * h, xtol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_matches_scipy_kde_quantile(seed):
    x = np.random.default_rng(seed).gamma(2.0, size=500)
    lim = kde_limit(x, 0.95)
    assert abs(lim.value - scipy_limit(x, 0.95)) < 1e-5 * np.ptp(x) * 2
    assert lim.bandwidth == pytest.approx(1.06 * x.std(ddof=1) * 500 ** -0.2)


def test_uniform_and_normal():
    rng = np.random.default_rng(0)
    assert abs(kde_limit(rng.uniform(size=10_000)).value - 0.95) <= 0.01
    assert abs(kde_limit(rng.standard_normal(10_000)).value - 1.645) <= 0.03


def test_constant_samples_fall_back():
    lim = kde_limit(np.full(100, 3.0))
    assert lim.value == 3.0 and lim.bandwidth == 0.0


def test_high_alpha_extends_bracket():
    x = np.random.default_rng(1).standard_normal(40)
    lim = kde_limit(x, 0.9999)
    assert lim.value > x.max()


def test_validation():
    with pytest.raises(DataError):
        kde_limit(np.ones(10))
    with pytest.raises(DataError):
        kde_limit(np.r_[np.ones(40), np.nan])
    with pytest.raises(ValueError):
        kde_limit(np.arange(50.0), 0.4)


def test_evaluate():
    lim = ControlLimit(2.0, 0.95, 0.1)
    assert evaluate(2.5, lim) is True
    assert evaluate(2.0, lim) is False
    assert evaluate(None, lim) is None
    assert evaluate(float("nan"), lim) is None
    assert ControlLimit.from_dict(lim.to_dict()) == lim


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.6, 0.99))
def test_limit_is_monotone_in_alpha(seed, alpha):
    x = np.random.default_rng(seed).exponential(size=200)
    assert kde_limit(x, alpha).value <= kde_limit(x, min(alpha + 0.005, 0.995)).value + 1e-9
