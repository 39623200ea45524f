import json
import math

import numpy as np
import pytest
from scipy import stats as sps

from polymerlab.errors import InvalidParameterError, InvalidReferenceError
from polymerlab.stats import (RngStream, covariance, ks_test_normal, moments, report_line, trend_decreasing,
                              within)


def test_ks_null_calibration():
    passes = sum(ks_test_normal(RngStream(s).generator().normal(1.0, 2.0, 10000), 1.0, 4.0).p_value > 0.01
                 for s in range(100))
    assert passes >= 98


def test_ks_constant_samples():
    r = ks_test_normal(np.zeros(200), 0.0, 1.0)
    assert r.statistic >= 0.5 and r.p_value < 1e-12


def test_ks_shifted_normal_matches_direct_distance():
    x = RngStream(7).generator().normal(3.0, 1.0, 1000)
    r = ks_test_normal(x, 0.0, 1.0)
    ref = sps.kstest(x, "norm", method="asymp")
    assert r.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert r.p_value < 1e-6
    assert r.reference == (0.0, 1.0) and r.n == 1000


def test_ks_pvalue_monotone_in_distance():
    g = RngStream(8).generator()
    ps = [ks_test_normal(g.normal(mu, 1.0, 500), 0.0, 1.0) for mu in (0.0, 0.1, 0.3)]
    assert ps[0].statistic < ps[1].statistic < ps[2].statistic
    assert ps[0].p_value > ps[1].p_value > ps[2].p_value


def test_ks_errors():
    with pytest.raises(InvalidReferenceError):
        ks_test_normal(np.zeros(100), 0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        ks_test_normal(np.zeros(49), 0.0, 1.0)


def test_moments_small_cases():
    m = moments(np.full(10, 3.0))
    assert m.var == 0 and m.se_mean == 0 and m.se_var == 0
    m = moments([-1.0, 1.0])
    assert m.mean == 0 and m.var == 2.0
    with pytest.raises(InvalidParameterError):
        moments([1.0])


def test_moments_of_normal_draws():
    m = moments(RngStream(3).generator().standard_normal(100000))
    assert abs(m.kurtosis) < 3 * m.se_kurtosis
    assert abs(m.skew) < 3 * m.se_skew
    assert abs(m.var - 1) < 3 * m.se_var


def test_covariance():
    g = RngStream(4).generator()
    x = g.multivariate_normal([0, 0], [[1.0, 0.5], [0.5, 2.0]], 20000)
    cov, se = covariance(x)
    assert np.all(np.abs(cov - [[1.0, 0.5], [0.5, 2.0]]) < 4 * se)


def test_trend_examples():
    assert trend_decreasing([3.0, 2.0, 1.0]).passed
    assert not trend_decreasing([1.0, 2.0, 3.0], [0.1, 0.1, 0.1]).passed
    flat = trend_decreasing([1.0, 1.05, 0.98], [0.1, 0.1, 0.1])
    assert flat.passed and flat.margin == pytest.approx(0.05 / math.hypot(0.1, 0.1))
    assert not trend_decreasing([1.0, 1.0 + 1e-12, 0.5]).passed
    with pytest.raises(InvalidParameterError):
        trend_decreasing([1.0, 0.5])


def test_report_line_and_within():
    rec = json.loads(report_line("ks", dict(n=10), 0.1, 0.5, True))
    assert rec == dict(test="ks", params=dict(n=10), statistic=0.1, p_value=0.5, **{"pass": True})
    assert within(1.0, 1.2, 3, 0.05, 0.05) and not within(1.0, 1.5, 3, 0.05, 0.05)


def test_streams_reproducible_and_distinct():
    a = RngStream(1, (2, 3)).generator().standard_normal(1000)
    b = RngStream(1, (2, 3)).generator().standard_normal(1000)
    c = RngStream(1, (2, 4)).generator().standard_normal(1000)
    assert np.array_equal(a, b)
    assert abs(np.corrcoef(a, c)[0, 1]) < 4 / math.sqrt(1000)
