"""Moments, Kolmogorov-Smirnov tests against a normal law, and trend checks."""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special, stats as sps

from .errors import InvalidParameterError, InvalidReferenceError, require
from .rng import RngStream  # noqa: F401  (re-exported: stream management lives with the stats tools)

KS_MIN_SAMPLES = 50


@dataclass
class KSResult:
    statistic: float
    p_value: float
    n: int
    reference: tuple

    def to_dict(self):
        return asdict(self)


def ks_test_normal(samples, mean, variance):
    """One-sample KS test against ``N(mean, variance)`` with the asymptotic p-value."""
    where = "stats.ks_test_normal"
    require(variance > 0 and math.isfinite(variance), InvalidReferenceError, where,
            f"reference variance must be > 0, got {variance}")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    require(n >= KS_MIN_SAMPLES, InvalidParameterError, where, f"need n >= {KS_MIN_SAMPLES}, got {n}")
    require(np.all(np.isfinite(x)), InvalidParameterError, where, "samples must be finite")
    cdf = special.ndtr((x - mean) / math.sqrt(variance))
    i = np.arange(1, n + 1)
    stat = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    stat = min(max(stat, 0.0), 1.0)
    p = float(special.kolmogorov(math.sqrt(n) * stat))
    return KSResult(stat, min(max(p, 0.0), 1.0), int(n), (float(mean), float(variance)))


@dataclass
class Moments:
    mean: float
    var: float
    skew: float
    kurtosis: float
    se_mean: float
    se_var: float
    se_skew: float
    se_kurtosis: float
    n: int

    def to_dict(self):
        return asdict(self)


def moments(samples):
    """Unbiased mean and variance, sample skewness and excess kurtosis, with standard errors."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    require(n >= 2, InvalidParameterError, "stats.moments", f"need n >= 2, got {n}")
    m = float(x.mean())
    c = x - m
    var = float(c @ c / (n - 1))
    m2 = float(np.mean(c ** 2))
    if m2 > 0:
        skew = float(np.mean(c ** 3) / m2 ** 1.5)
        kurt = float(np.mean(c ** 4) / m2 ** 2 - 3.0)
        # s.e. of the variance from the fourth central moment
        se_var = math.sqrt(max(np.mean(c ** 4) - (n - 3) / (n - 1) * m2 ** 2, 0.0) / n)
    else:
        skew = kurt = se_var = 0.0
    se_skew = math.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3))) if n > 2 and m2 > 0 else 0.0
    se_kurt = 2.0 * se_skew * math.sqrt((n * n - 1) / ((n - 3) * (n + 5))) if n > 3 and m2 > 0 else 0.0
    return Moments(m, var, skew, kurt, math.sqrt(var / n), se_var, se_skew, se_kurt, int(n))


def covariance(samples):
    """Unbiased covariance of ``samples[replica, point]`` and the s.e. of each entry."""
    x = np.asarray(samples, dtype=float)
    require(x.ndim == 2 and x.shape[0] >= 2, InvalidParameterError, "stats.covariance",
            "samples must be [replica, point] with at least 2 replicas")
    n = x.shape[0]
    c = x - x.mean(axis=0)
    cov = c.T @ c / (n - 1)
    prod = c[:, :, None] * c[:, None, :]
    se = prod.std(axis=0, ddof=1) / math.sqrt(n)
    return cov, se


@dataclass
class TrendResult:
    passed: bool
    margin: float
    differences: list

    def __bool__(self):
        return self.passed


def trend_decreasing(values, std_errors=None):
    """Non-increase test: every step ``v[i+1] - v[i]`` stays below ``2`` combined s.e.

    ``margin`` is the worst normalised step ``(v[i+1] - v[i]) / se``; exact
    values (s.e. 0) must not increase at all.
    """
    v = np.asarray(values, dtype=float)
    require(v.ndim == 1 and v.size >= 3, InvalidParameterError, "stats.trend_decreasing", "need at least 3 values")
    se = np.zeros_like(v) if std_errors is None else np.asarray(std_errors, dtype=float)
    require(se.shape == v.shape and np.all(se >= 0), InvalidParameterError, "stats.trend_decreasing",
            "std_errors must be non-negative and match values")
    diff = np.diff(v)
    comb = np.hypot(se[1:], se[:-1])
    ok = diff < 2.0 * comb
    ok |= (comb == 0) & (diff <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(comb > 0, diff / comb, np.where(diff > 0, np.inf, np.where(diff < 0, -np.inf, 0.0)))
    return TrendResult(bool(np.all(ok)), float(np.max(norm)), diff.tolist())


def combined_se(*ses):
    return float(math.sqrt(sum(s * s for s in ses)))


def within(a, b, k, *ses):
    """``|a - b| <= k`` combined standard errors."""
    return abs(a - b) <= k * combined_se(*ses)


def report_line(name, params, statistic, p_value, passed):
    """JSON line ``{test, params, statistic, p_value, pass}``."""
    return json.dumps(dict(test=name, params=params, statistic=statistic, p_value=p_value, **{"pass": bool(passed)}),
                      sort_keys=True)


def normal_sf_two_sided(z):
    return float(2.0 * sps.norm.sf(abs(z)))
