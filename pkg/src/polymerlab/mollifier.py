"""Mollifier, correlation kernel, heat kernel and Yukawa potential.

The mollifier is radial, so everything is tabulated on a radial grid with step
``support_radius / 512`` and linearly interpolated. ``R = phi * phi`` is built
by a two-dimensional Gauss-Legendre rule in (radius, polar angle).
"""

import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import InvalidParameterError, SingularityError, UnsupportedModeError, require

TABLE_STEPS = 512


def sphere_area(d):
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _bump(r, support_radius):
    u = np.asarray(r, dtype=float) / support_radius
    out = np.zeros_like(u)
    inside = u < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def _radial_integral(f, d, upper):
    """int_{|x|<upper} f(|x|) dx for a radial profile f."""
    val, _ = integrate.quad(lambda r: sphere_area(d) * r ** (d - 1) * f(np.array([r]))[0],
                            0.0, upper, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def _radial_convolution(f, d, support, s, n_r=160, n_theta=160):
    """(f * f)(s) for a radial f supported in [0, support]."""
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * support * (xr + 1.0)
    wr = 0.5 * support * wr
    xt, wt = np.polynomial.legendre.leggauss(n_theta)
    theta = 0.5 * math.pi * (xt + 1.0)
    wt = 0.5 * math.pi * wt * np.sin(theta) ** (d - 2)
    fr = f(r) * r ** (d - 1) * wr
    cos_t = np.cos(theta)
    s = np.atleast_1d(s)
    out = np.empty(s.shape)
    for i, si in enumerate(s):
        dist = np.sqrt(np.maximum(si * si + r[:, None] ** 2 - 2.0 * si * r[:, None] * cos_t[None, :], 0.0))
        out[i] = fr @ (f(dist.ravel()).reshape(dist.shape) @ wt)
    return sphere_area(d - 1) * out


@functools.lru_cache(maxsize=32)
def _tables(d, profile, rp):
    """Radii, phi and R tables (read-only, shared between equal specs)."""
    radii = np.arange(2 * TABLE_STEPS + 1) * (rp / TABLE_STEPS)
    if profile == "bump":
        c = 1.0 / _radial_integral(lambda r: _bump(r, rp), d, rp)
        phi = c * _bump(radii, rp)
        R = _radial_convolution(lambda r: c * _bump(r, rp), d, rp, radii)
        R[-1] = 0.0
        R = np.maximum(R, 0.0)
    else:
        c = float("nan")
        phi = np.full(radii.shape, np.nan)
        R = (radii <= rp).astype(float)
    for val in (radii, phi, R):
        val.setflags(write=False)
    return radii, phi, R, c


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Mollifier choice and its derived radial tables.

    ``profile`` is ``"bump"`` (normalised ``exp(-1/(1-|x|^2))``, R built by
    convolution) or ``"indicator"`` (R is the indicator of the ball of radius
    ``support_radius`` directly; phi is not defined in this mode).
    """

    dimension: int = 3
    profile: str = "bump"
    support_radius: float = 1.0
    radii: np.ndarray = field(init=False, repr=False)
    phi_table: np.ndarray = field(init=False, repr=False)
    R_table: np.ndarray = field(init=False, repr=False)
    h_r: float = field(init=False, repr=False)
    norm_const: float = field(init=False, repr=False)

    def __post_init__(self):
        where = "mollifier.KernelSpec"
        require(int(self.dimension) == self.dimension and self.dimension >= 3,
                InvalidParameterError, where, f"dimension must be an integer >= 3, got {self.dimension}")
        require(self.profile in ("bump", "indicator"), InvalidParameterError, where,
                f"unknown profile {self.profile!r}")
        require(self.support_radius > 0, InvalidParameterError, where, "support_radius must be > 0")
        d, rp = int(self.dimension), float(self.support_radius)
        object.__setattr__(self, "dimension", d)
        object.__setattr__(self, "support_radius", rp)
        h = rp / TABLE_STEPS
        radii, phi, R, c = _tables(d, self.profile, rp)
        for name, val in (("radii", radii), ("phi_table", phi), ("R_table", R)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "h_r", h)
        object.__setattr__(self, "norm_const", c)

    @property
    def direct_R(self):
        return self.profile == "indicator"

    @property
    def R_support(self):
        """Radius beyond which R vanishes."""
        return self.support_radius if self.direct_R else 2.0 * self.support_radius

    @property
    def R0(self):
        return float(self.R_table[0])

    def require_phi(self, where):
        require(not self.direct_R, UnsupportedModeError, where,
                "phi is not available in direct-R (indicator) mode")

    def phi_radial(self, r):
        self.require_phi("mollifier.phi_radial")
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.radii[:TABLE_STEPS + 1], self.phi_table[:TABLE_STEPS + 1], right=0.0)

    def R_radial(self, r):
        r = np.asarray(r, dtype=float)
        if self.direct_R:
            return (r <= self.support_radius).astype(float)
        return np.interp(r, self.radii, self.R_table, right=0.0)

    def phi_exact(self, r):
        """Closed-form phi (no table), used as a reference."""
        self.require_phi("mollifier.phi_exact")
        return self.norm_const * _bump(r, self.support_radius)

    def export_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["radius", "phi", "R"])
            for r, p, q in zip(self.radii, self.phi_table, self.R_table):
                w.writerow([f"{r:.10g}", "" if np.isnan(p) else f"{p:.17g}", f"{q:.17g}"])


def _norm(x, d=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return abs(float(x))
    return np.linalg.norm(x, axis=-1)


def phi_eps(spec, eps, x):
    require(eps > 0, InvalidParameterError, "mollifier.phi_eps", f"eps must be > 0, got {eps}")
    spec.require_phi("mollifier.phi_eps")
    return eps ** (-spec.dimension) * spec.phi_radial(_norm(x) / eps)


def kernel_R(spec, x):
    return spec.R_radial(_norm(x))


def R_eps(spec, eps, x):
    require(eps > 0, InvalidParameterError, "mollifier.R_eps", f"eps must be > 0, got {eps}")
    return eps ** (-spec.dimension) * spec.R_radial(_norm(x) / eps)


def heat_kernel(d, t, x):
    """Transition density of d-dimensional standard Brownian motion."""
    require(t > 0, InvalidParameterError, "mollifier.heat_kernel", f"t must be > 0, got {t}")
    r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
    return (2.0 * math.pi * t) ** (-d / 2) * np.exp(-r2 / (2.0 * t))


def heat_kernel_radial(d, t, r):
    return (2.0 * math.pi * t) ** (-d / 2) * np.exp(-np.asarray(r, dtype=float) ** 2 / (2.0 * t))


@functools.lru_cache(maxsize=None)
def chi(d):
    """Yukawa constant: int_0^inf G_t(z) dt at |z| = 1."""
    require(d >= 3, InvalidParameterError, "mollifier.chi", "dimension must be >= 3")
    val, _ = integrate.quad(lambda t: heat_kernel_radial(d, t, 1.0), 0.0, np.inf,
                            epsabs=0.0, epsrel=1e-13, limit=400)
    return val


def yukawa(d, z):
    r = _norm(z)
    require(np.all(np.asarray(r) > 0), SingularityError, "mollifier.yukawa", "z must be nonzero")
    return chi(d) / np.asarray(r) ** (d - 2)


def integrate_radial(spec_or_d, f, upper):
    """int_{|x|<upper} f(|x|) dx by adaptive quadrature."""
    d = spec_or_d.dimension if isinstance(spec_or_d, KernelSpec) else int(spec_or_d)
    val, _ = integrate.quad(lambda r: sphere_area(d) * r ** (d - 1) * float(f(r)), 0.0, upper,
                            epsabs=1e-12, epsrel=1e-10, limit=1000)
    return val


def incomplete_heat_integral(d, r, a):
    """int_a^inf G_u(r) du in closed form (upper range of the Yukawa integral)."""
    if r == 0:
        return (2.0 * math.pi) ** (-d / 2) * a ** (1 - d / 2) / (d / 2 - 1)
    x = r * r / (2.0 * a)
    s = d / 2 - 1
    return (2.0 * math.pi) ** (-d / 2) * (r * r / 2.0) ** (-s) * special.gamma(s) * special.gammainc(s, x)
