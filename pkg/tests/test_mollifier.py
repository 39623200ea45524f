import math

import numpy as np
import pytest
from scipy import integrate

from polymerlab.errors import InvalidParameterError, SingularityError, UnsupportedModeError
from polymerlab.mollifier import (KernelSpec, R_eps, chi, heat_kernel, incomplete_heat_integral, integrate_radial,
                                  kernel_R, phi_eps, yukawa)

# frozen oracle values: scipy.quad on c exp(-1/(1-r^2)) and the 3-d convolution
# formula R(s) = 2 pi / s int r f(r) int_{|s-r|}^{s+r} u f(u) du dr, computed
# outside the package
NORM_CONST = 2.2671167396083267
PHI0 = 0.8340256392375336
R0 = 0.49395046820666705
R_AT = {0.5: 0.3116207137303464, 1.0: 0.07671329231237399, 1.5: 0.0018635334099411647}


def test_bump_normalisation(bump):
    assert bump.norm_const == pytest.approx(NORM_CONST, rel=1e-10)
    mass = integrate_radial(bump, lambda r: bump.phi_exact(np.array([r]))[0], 1.0)
    assert abs(mass - 1) < 1e-6


def test_phi_at_origin_matches_oracle(bump):
    assert phi_eps(bump, 1.0, np.zeros(3)) == pytest.approx(PHI0, rel=1e-12)


def test_phi_scaling_identity(bump):
    assert phi_eps(bump, 0.5, np.zeros(3)) == pytest.approx(8 * phi_eps(bump, 1.0, np.zeros(3)), rel=1e-14)


@pytest.mark.parametrize("r", [1.0, 1.2, 5.0])
def test_phi_vanishes_outside_support(bump, r):
    assert phi_eps(bump, 1.0, np.array([r, 0, 0])) == 0.0


def test_phi_table_monotone(bump):
    assert np.all(np.diff(bump.phi_table[:513]) <= 0)


def test_R_at_origin_is_phi_norm(bump):
    assert bump.R0 == pytest.approx(R0, rel=1e-10)


@pytest.mark.parametrize("s", sorted(R_AT))
def test_R_profile_matches_convolution_oracle(bump, s):
    assert kernel_R(bump, np.array([s, 0, 0])) == pytest.approx(R_AT[s], rel=1e-6, abs=1e-10)


def test_R_support_symmetry_and_mass(bump):
    assert kernel_R(bump, np.array([2.0, 0, 0])) == 0.0
    assert kernel_R(bump, np.array([0, 0, 3.0])) == 0.0
    assert np.all(np.diff(bump.R_table) <= 1e-15)
    x = np.array([0.3, -0.4, 0.5])
    assert kernel_R(bump, x) == kernel_R(bump, -x) == kernel_R(bump, x[::-1])
    # R is linearly interpolated from a table with step 1/512, worth about 2e-6 in mass
    r = np.linspace(0, 2, 200001)
    mass = integrate.simpson(4 * math.pi * r ** 2 * bump.R_radial(r), x=r)
    assert mass == pytest.approx(1.0, abs=1e-5)


def test_R_eps_scaling(bump):
    x = np.array([0.2, 0.1, 0.0])
    assert R_eps(bump, 0.5, x) == pytest.approx(8 * kernel_R(bump, 2 * x), rel=1e-14)


def test_indicator_mode(indicator):
    assert kernel_R(indicator, np.array([0.5, 0, 0])) == 1.0
    assert kernel_R(indicator, np.array([1.5, 0, 0])) == 0.0
    with pytest.raises(UnsupportedModeError):
        phi_eps(indicator, 1.0, np.zeros(3))


def test_invalid_kernel_parameters():
    with pytest.raises(InvalidParameterError):
        KernelSpec(2)
    with pytest.raises(InvalidParameterError):
        KernelSpec(3, "gauss")
    with pytest.raises(InvalidParameterError):
        KernelSpec(3, "bump", 0.0)


def test_heat_kernel_values():
    assert heat_kernel(3, 1.0, np.zeros(3)) == pytest.approx((2 * math.pi) ** -1.5, rel=1e-15)
    t = 0.7
    x = np.array([math.sqrt(2 * t * math.log(2)), 0, 0])
    assert heat_kernel(3, t, x) == pytest.approx(heat_kernel(3, t, np.zeros(3)) / 2, rel=1e-13)


@pytest.mark.parametrize("t", [0.1, 1.0, 7.5])
def test_heat_kernel_mass(t):
    mass, _ = integrate.quad(lambda r: 4 * math.pi * r * r * heat_kernel(3, t, np.array([r, 0, 0])), 0, np.inf)
    assert mass == pytest.approx(1.0, abs=1e-9)


def test_heat_kernel_rejects_nonpositive_time():
    with pytest.raises(InvalidParameterError):
        heat_kernel(3, 0.0, np.zeros(3))


def test_yukawa_homogeneity_and_constant():
    assert yukawa(3, np.array([1.0, 0, 0])) / yukawa(3, np.array([0, 2.0, 0])) == pytest.approx(2.0, rel=1e-15)
    assert yukawa(4, np.array([1.0, 0, 0, 0])) / yukawa(4, np.array([3.0, 0, 0, 0])) == pytest.approx(9.0, rel=1e-14)
    # oracle: int_0^inf G_t(z) dt at |z| = 1 is 1 / (2 pi) in d = 3
    assert chi(3) == pytest.approx(1 / (2 * math.pi), rel=1e-11)
    assert yukawa(3, np.array([1.0, 0, 0])) == pytest.approx(chi(3), rel=1e-15)


def test_yukawa_singular_at_origin():
    with pytest.raises(SingularityError):
        yukawa(3, np.zeros(3))


@pytest.mark.parametrize("r,a", [(0.0, 2.0), (1.0, 2.0), (3.0, 0.5)])
def test_incomplete_heat_integral_closed_form(r, a):
    ref, _ = integrate.quad(lambda u: (2 * math.pi * u) ** -1.5 * math.exp(-r * r / (2 * u)), a, np.inf,
                            epsrel=1e-12)
    assert incomplete_heat_integral(3, r, a) == pytest.approx(ref, rel=1e-9)


def test_export_csv(tmp_path, bump):
    p = tmp_path / "k.csv"
    bump.export_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "radius,phi,R"
    assert len(lines) == 1 + bump.radii.size
