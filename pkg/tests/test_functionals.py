import math

import numpy as np
import pytest
from scipy import special

from polymerlab.errors import (InvalidBracketError, InvalidParameterError, SingularityError,
                               SupercriticalBetaError, UnsupportedOrderError)
from polymerlab.functionals import (beta_L2_estimate, bridge_functional, c_infty, c_infty_closed_form,
                                    critical_beta_spectral, gamma_squared, gamma_squared_mc,
                                    gamma_squared_rescaled, h_beta_fixed_point, h_beta_mc, h_series_term,
                                    heat_tail_integral, kernel_H_T_inf, kernel_H_T_inf_limit,
                                    l2_error_formula, pair_functional)

# frozen from an independent radial quadrature (bump kernel, d=3, r_phi=1)
K1_COEFF = 0.12860178
GAMMA2_03 = 0.0907598


@pytest.fixture(scope="module")
def h03(bump):
    return h_beta_fixed_point(0.3, spec=bump)


def test_fixed_point_beta_zero(bump):
    sol = h_beta_fixed_point(0.0, spec=bump)
    assert sol.iterations == 1
    assert np.all(sol.values == 1.0)


def test_fixed_point_monotone_in_beta(bump):
    vals = [h_beta_fixed_point(b, spec=bump)(0.0) for b in (0.1, 0.5, 1.0, 2.0)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    sol = h_beta_fixed_point(1.0, spec=bump)
    assert np.all(np.diff(sol.values) <= 1e-14)


def test_fixed_point_harmonic_tail(h03):
    r = np.array([4.0, 8.0, 16.0, 64.0])
    slope = np.polyfit(np.log(r), np.log(h03(r) - 1.0), 1)[0]
    assert slope == pytest.approx(-1.0, abs=1e-9)


def test_fixed_point_supercritical(bump):
    with pytest.raises(SupercriticalBetaError):
        h_beta_fixed_point(4.0, spec=bump)


def test_series_terms(bump, h03):
    assert h_series_term(0.3, 0, 0.0, spec=bump) == 1.0
    assert h_series_term(0.3, 1, 0.0, spec=bump) == pytest.approx(K1_COEFF * 0.09, rel=1e-5)
    partial = sum(h_series_term(0.3, k, 0.0, spec=bump) for k in range(4))
    assert partial == pytest.approx(h03(0.0), abs=1e-5)
    with pytest.raises(UnsupportedOrderError):
        h_series_term(0.3, 4, 0.0, spec=bump)
    with pytest.raises(InvalidParameterError):
        h_series_term(0.3, 1.5, 0.0, spec=bump)


def test_h_mc_matches_fixed_point(bump, h03):
    est = h_beta_mc(0.3, np.zeros(3), n=4096, rng=3, spec=bump)
    assert abs(est.value - h03(0.0)) < 4 * est.std_error + 2e-4


def test_pair_is_h_at_half_separation(bump):
    z = np.array([0.5, 0.0, 0.0])
    a = pair_functional(0.5, 8.0, z, n=2048, rng=9, spec=bump)
    b = h_beta_mc(0.5, z / math.sqrt(2.0), H=8.0, n=2048, rng=9, spec=bump)
    assert a.value == pytest.approx(b.value, rel=1e-12)


def test_bridge_functional(bump):
    assert bridge_functional(0.0, (1, 0, 0), (0, 1, 0), 2.0, spec=bump).value == 1.0
    a = bridge_functional(0.5, (2.0, 0, 0), (0, 2.0, 0), 4.0, n=4096, rng=1, spec=bump)
    b = bridge_functional(0.5, (0, 2.0, 0), (2.0, 0, 0), 4.0, n=4096, rng=2, spec=bump)
    assert abs(a.value - b.value) < 3 * math.hypot(a.std_error, b.std_error)
    assert a.value > 1.0
    with pytest.raises(InvalidParameterError):
        bridge_functional(0.5, 0.0, 0.0, 0.001, spec=bump)


def test_gamma_squared_forms(bump, h03):
    g1 = gamma_squared(0.3, h03, bump)
    g2 = gamma_squared_rescaled(0.3, h03, bump)
    assert g1 == pytest.approx(GAMMA2_03, rel=1e-6)
    assert g1 == pytest.approx(g2, rel=1e-12)
    assert g1 >= 0.09 * 0.9999
    assert gamma_squared(0.0, h03, bump) == 0.0


def test_gamma_squared_mc(bump):
    est = gamma_squared_mc(0.3, spec=bump, n_outer=2048, H=16.0, rng=5)
    assert abs(est.value - GAMMA2_03) < 4 * est.std_error + 2e-4


def test_kernel_H_limit(bump, h03):
    x1, x2 = (0, 0, 0), (1, 0, 0)
    k = kernel_H_T_inf(0.3, 400.0, x1, x2, h03, bump)
    assert k.value == pytest.approx(k.limit, rel=1e-5)
    # the limit written without the 2^((d-2)/2) factor undershoots by exactly that factor
    printed = 1 / (2 * math.pi) * 2 ** -1.5 * gamma_squared_rescaled(0.3, h03, bump)
    assert k.limit / printed == pytest.approx(math.sqrt(2.0), rel=1e-12)
    assert kernel_H_T_inf_limit(0.0, x1, x2, h03, bump) == 0.0
    with pytest.raises(SingularityError):
        kernel_H_T_inf(0.3, 4.0, x1, x1, h03, bump)


def test_heat_tail_closed_form():
    for r in (0.3, 1.0, 2.5):
        for a in (0.5, 2.0):
            exact = special.erf(r / math.sqrt(2 * a)) / (2 * math.pi * r)
            assert heat_tail_integral(3, r, a) == pytest.approx(exact, rel=1e-9)


def test_c_infty(bump, h03):
    r = 1.3
    x = c_infty(0.3, (0, 0, 0), (r, 0, 0), h03, bump)
    assert x == pytest.approx(GAMMA2_03 * 0.5 * special.erf(r / 2) / (2 * math.pi * r), rel=1e-6)
    assert x == pytest.approx(c_infty_closed_form(3, r, gamma_squared(0.3, h03, bump)), rel=1e-9)
    vals = [c_infty(0.3, (0, 0, 0), (s, 0, 0), h03, bump) for s in (0.5, 1.0, 2.0)]
    assert vals[0] > vals[1] > vals[2]
    assert c_infty(0.0, (0, 0, 0), (1, 0, 0), h03, bump) == 0.0


def test_l2_error_beta_zero_and_sign(bump):
    assert l2_error_formula(0.0, 4.0, spec=bump).value == 0.0
    est = l2_error_formula(0.2, 4.0, spec=bump, n_outer=2048, n_inner=4, rng=2)
    assert est.value > -3 * est.std_error


def test_beta_L2(indicator, bump):
    assert critical_beta_spectral(indicator) == pytest.approx(math.pi / 2, abs=1e-5)
    lo, hi = beta_L2_estimate(indicator, bracket=(1.0, 2.0), tol=1e-3)
    assert hi - lo <= 1e-3
    assert abs(0.5 * (lo + hi) - math.pi / 2) < 5e-3
    with pytest.raises(InvalidBracketError):
        beta_L2_estimate(bump, bracket=(0.0, 0.05))
    with pytest.raises(InvalidParameterError):
        beta_L2_estimate(bump, bracket=(2.0, 1.0))
