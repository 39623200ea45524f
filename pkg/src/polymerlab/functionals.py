"""Noise-free quantities: Brownian exponential functionals and the h-equation.

``h_beta(z) = E_z[exp(beta^2 int_0^inf R(sqrt2 B(s)) ds)]`` solves

    h(y) = 1 + beta^2 int G0(y - x) R(sqrt2 x) h(x) dx,

with G0 the Yukawa potential. For radial R the sphere average of G0 is
``chi_d / max(|y|, r)^(d-2)`` (Newton's shell theorem), which reduces the
equation to one radial dimension:

    h(s) = 1 + beta^2 c_d int_0^{r_s} r^(d-1) max(s, r)^(2-d) R(sqrt2 r) h(r) dr,

where ``c_d = chi_d |S^(d-1)| = 2/(d-2)`` and ``r_s = supp(R)/sqrt2``. Beyond
``r_s`` the solution is ``1 + beta^2 c_d M s^(2-d)`` exactly.
"""

import csv
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import integrate

from .errors import (InvalidBracketError, InvalidParameterError, SingularityError,
                     SupercriticalBetaError, UnsupportedOrderError, require)
from .mollifier import KernelSpec, chi, heat_kernel_radial, incomplete_heat_integral, sphere_area
from .noise import steps_for
from .polymer import Estimate, mean_exp
from .rng import as_stream, normal3

DEFAULT_HORIZON = 64.0
DEFAULT_DT = 0.02
MAX_SERIES_ORDER = 3


# ---------------------------------------------------------------------------
# path functionals  int_0^T R(sqrt2 B(s)) ds

@nb.njit(inline="always", cache=True)
def _R_lookup(r, R_tab, h_r, direct, r_sup):
    if direct:
        return 1.0 if r <= r_sup else 0.0
    if r >= r_sup:
        return 0.0
    x = r / h_r
    i = int(x)
    if i >= R_tab.shape[0] - 1:
        return 0.0
    w = x - i
    return R_tab[i] * (1.0 - w) + R_tab[i + 1] * w


@nb.njit(cache=True, parallel=True)
def _functional_kernel(path_key, idx, starts, ends, bridge, n_steps, dt, trapezoid, half_step,
                       R_tab, h_r, direct, r_sup, out_S, out_half, out_end):
    m, d = starts.shape
    sqdt = math.sqrt(dt)
    T = n_steps * dt
    sq2 = math.sqrt(2.0)
    for row in nb.prange(m):
        p = idx[row]
        drift = np.zeros(d)
        inc = np.empty((n_steps if bridge else 0, d))
        if bridge:
            for a in range(d):
                wT = 0.0
                for k in range(n_steps):
                    inc[k, a] = sqdt * normal3(path_key, p, k, a)
                    wT += inc[k, a]
                drift[a] = (wT - (ends[row, a] - starts[row, a])) / T
        w = np.zeros(d)
        S = 0.0
        S_half = 0.0
        r2 = 0.0
        for k in range(n_steps + 1):
            r2 = 0.0
            t = k * dt
            for a in range(d):
                y = starts[row, a] + w[a] - t * drift[a]
                if bridge and k == n_steps:
                    y = ends[row, a]
                r2 += y * y
            val = _R_lookup(sq2 * math.sqrt(r2), R_tab, h_r, direct, r_sup)
            if trapezoid:
                wt = 0.5 * dt if (k == 0 or k == n_steps) else dt
            else:
                wt = dt if k < n_steps else 0.0
            if k == half_step:
                S_half = S + (0.5 * dt * val if trapezoid else 0.0)
            S += wt * val
            if k < n_steps:
                for a in range(d):
                    w[a] += inc[k, a] if bridge else sqdt * normal3(path_key, p, k, a)
        out_S[row] = S
        out_half[row] = S_half
        out_end[row] = math.sqrt(r2)


def run_functional(spec, starts, T, dt, key, ends=None, idx=None, rule="trapezoid"):
    """``(S, S_half, |B(T)|)`` for each row; rows with equal ``idx`` share their noise."""
    where = "functionals.path_functional"
    require(rule in ("trapezoid", "left"), InvalidParameterError, where, f"unknown rule {rule!r}")
    K = steps_for(T, dt, where)
    starts = np.ascontiguousarray(np.atleast_2d(starts), dtype=float)
    m = starts.shape[0]
    bridge = ends is not None
    ends = np.ascontiguousarray(np.atleast_2d(ends) if bridge else starts, dtype=float)
    idx = np.arange(m, dtype=np.int64) if idx is None else np.ascontiguousarray(idx, dtype=np.int64)
    S = np.empty(m)
    Sh = np.empty(m)
    end = np.empty(m)
    _functional_kernel(np.uint64(key), idx, starts, ends, bridge, K, float(dt), rule == "trapezoid",
                       K // 2, np.ascontiguousarray(spec.R_table), spec.h_r, spec.direct_R,
                       spec.R_support, S, Sh, end)
    return S, Sh, end


def _check_beta(beta, where):
    require(beta >= 0 and math.isfinite(beta), InvalidParameterError, where, f"beta must be >= 0, got {beta}")


def _point(z, d):
    return np.broadcast_to(np.asarray(z, dtype=float), (d,)).astype(float)


def _infinite_horizon_estimate(beta, spec, start, H, dt, n, rng, rule, where, params):
    d = spec.dimension
    if beta == 0:
        return Estimate(1.0, 0.0, n, "mc", params, tail_bound=0.0)
    S, S_half, end = run_functional(spec, np.tile(start, (n, 1)), H, dt, as_stream(rng).key, rule=rule)
    value, se = mean_exp(beta ** 2 * S, where=where)
    half, _ = mean_exp(beta ** 2 * S_half, where=where)
    # chance that a path re-enters supp R(sqrt2 .) after the horizon
    a = spec.R_support / math.sqrt(2.0)
    tail = float(np.mean(np.minimum(1.0, (a / np.maximum(end, 1e-300)) ** (d - 2))))
    est = Estimate(value, se, n, "mc", params, tail_bound=tail)
    growth = value - half
    if value > 1 and growth > 0.05 * (value - 1) and growth > 3 * se:
        est.warnings.append(f"horizon-too-small: mean still growing at H={H} "
                            f"(last-half growth {growth:.3g}, re-entry probability {tail:.3g})")
    return est


def h_beta_mc(beta, z, H=DEFAULT_HORIZON, dt=DEFAULT_DT, n=4096, rng=0, spec=None, rule="trapezoid"):
    """Monte-Carlo h_beta(z), horizon-truncated at ``H``."""
    spec = spec or KernelSpec()
    where = "functionals.h_beta_mc"
    _check_beta(beta, where)
    z = _point(z, spec.dimension)
    return _infinite_horizon_estimate(beta, spec, z, H, dt, n, rng, rule, where,
                                      dict(beta=beta, z=z.tolist(), H=H, dt=dt, rule=rule))


def pair_functional(beta, T, z, dt=DEFAULT_DT, n=4096, rng=0, spec=None, rule="trapezoid"):
    """E[exp(beta^2 int_0^T R(B2 - B1) ds)] for two Brownian motions started ``z`` apart.

    ``(B2 - B1)/sqrt2`` is a Brownian motion from ``z/sqrt2``.
    """
    spec = spec or KernelSpec()
    where = "functionals.pair_functional"
    _check_beta(beta, where)
    z = _point(z, spec.dimension) / math.sqrt(2.0)
    return _infinite_horizon_estimate(beta, spec, z, T, dt, n, rng, rule, where,
                                      dict(beta=beta, T=T, z=(z * math.sqrt(2.0)).tolist(), dt=dt, rule=rule))


def bridge_functional(beta, a, b, T, dt=DEFAULT_DT, n=4096, rng=0, spec=None, rule="trapezoid"):
    """A_beta(a, b, T): Brownian bridge from ``a`` to ``b`` over ``[0, T]``."""
    spec = spec or KernelSpec()
    where = "functionals.bridge_functional"
    _check_beta(beta, where)
    require(T >= dt, InvalidParameterError, where, "T must be >= dt")
    d = spec.dimension
    a, b = _point(a, d), _point(b, d)
    params = dict(beta=beta, a=a.tolist(), b=b.tolist(), T=T, dt=dt, rule=rule)
    if beta == 0:
        return Estimate(1.0, 0.0, n, "mc", params)
    S, _, _ = run_functional(spec, np.tile(a, (n, 1)), T, dt, as_stream(rng).key,
                             ends=np.tile(b, (n, 1)), rule=rule)
    value, se = mean_exp(beta ** 2 * S, where=where)
    return Estimate(value, se, n, "mc", params)


# ---------------------------------------------------------------------------
# the radial integral equation

@dataclass
class HBetaSolution:
    beta: float
    radii: np.ndarray
    values: np.ndarray
    iterations: int
    residual: float
    dimension: int = 3
    nodes: np.ndarray = field(default=None, repr=False)
    node_weights: np.ndarray = field(default=None, repr=False)
    node_values: np.ndarray = field(default=None, repr=False)

    @property
    def support(self):
        return float(self.nodes[-1])

    @property
    def moment(self):
        """M = int_0^{r_s} r^(d-1) R(sqrt2 r) h(r) dr."""
        return float(np.sum(self.node_weights * self.node_values))

    def __call__(self, s):
        """Nystrom evaluation of h at any radius (exact continuation past the grid)."""
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        d = self.dimension
        c = chi(d) * sphere_area(d)
        w = self.node_weights * self.node_values
        live = w != 0
        out = np.empty(flat.shape)
        for i0 in range(0, flat.size, 4096):
            blk = flat[i0:i0 + 4096]
            mx = np.maximum(blk[:, None], self.nodes[None, live])
            out[i0:i0 + 4096] = 1.0 + self.beta ** 2 * c * (mx ** (2 - d) @ w[live])
        return out.reshape(s.shape) if s.ndim else float(out[0])

    def export_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["radius", "value"])
            for r, v in zip(self.radii, self.values):
                wr.writerow([f"{r:.10g}", f"{v:.17g}"])


def _radial_operator(spec, r_max, m):
    """Trapezoid ring-kernel matrix on the nodes of ``[0, r_s]``."""
    d = spec.dimension
    r_s = spec.R_support / math.sqrt(2.0)
    h_target = r_max / (m - 1)
    n_in = max(64, int(math.ceil(r_s / h_target)))
    nodes = np.linspace(0.0, r_s, n_in + 1)
    w = np.full(nodes.size, r_s / n_in)
    w[0] *= 0.5
    w[-1] *= 0.5
    kw = w * nodes ** (d - 1) * spec.R_radial(math.sqrt(2.0) * nodes)
    c = chi(d) * sphere_area(d)
    with np.errstate(divide="ignore"):
        mx = np.maximum(nodes[:, None], nodes[None, :]) ** (2.0 - d)
    mx[:, kw == 0] = 0.0
    return nodes, kw, c * mx * kw[None, :]


def h_beta_fixed_point(beta, r_max=16.0, m=8193, spec=None, tol=1e-8, n_max=10_000, cap=1e8):
    """Solve the h-equation by Picard iteration from h = 1.

    Raises :class:`SupercriticalBetaError` when iterates exceed ``cap`` or are
    still growing after ``n_max`` sweeps; this is the numerical signature of
    ``beta >= beta_L2``.
    """
    spec = spec or KernelSpec()
    where = "functionals.h_beta_fixed_point"
    _check_beta(beta, where)
    require(r_max > 0 and m >= 2, InvalidParameterError, where, "need r_max > 0 and m >= 2")
    nodes, kw, K = _radial_operator(spec, r_max, m)
    K = beta ** 2 * K
    h = np.ones(nodes.size)
    it, res = 0, math.inf
    while it < n_max:
        new = 1.0 + K @ h
        res = float(np.max(np.abs(new - h)))
        h = new
        it += 1
        if not np.all(np.isfinite(h)) or h.max() > cap:
            raise SupercriticalBetaError(where, f"iterates exceeded {cap:g} after {it} sweeps at beta={beta}")
        if res < tol:
            break
    else:
        raise SupercriticalBetaError(where, f"no convergence in {n_max} sweeps at beta={beta} "
                                            f"(last update {res:.3g}, still growing)")
    sol = HBetaSolution(float(beta), np.linspace(0.0, r_max, m), None, it, res, spec.dimension,
                        nodes, kw, h)
    sol.values = sol(sol.radii)
    return sol


def fixed_point_converges(beta, spec, **kw):
    try:
        h_beta_fixed_point(beta, spec=spec, **kw)
        return True
    except SupercriticalBetaError:
        return False


def beta_L2_estimate(spec=None, bracket=(0.0, 10.0), tol=1e-3, **fixed_point_kw):
    """Bisection on fixed-point convergence; returns ``(lo, hi)`` with ``hi - lo <= tol``."""
    spec = spec or KernelSpec()
    where = "functionals.beta_L2_estimate"
    lo, hi = map(float, bracket)
    require(0 <= lo < hi and tol > 0, InvalidParameterError, where, "need 0 <= lo < hi and tol > 0")
    require(fixed_point_converges(lo, spec, **fixed_point_kw), InvalidBracketError, where,
            f"fixed point diverges at the lower end {lo}")
    require(not fixed_point_converges(hi, spec, **fixed_point_kw), InvalidBracketError, where,
            f"fixed point converges at the upper end {hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fixed_point_converges(mid, spec, **fixed_point_kw):
            lo = mid
        else:
            hi = mid
    return lo, hi


def critical_beta_spectral(spec=None, r_max=16.0, m=8193):
    """1 / sqrt(spectral radius) of the discretised operator (independent of the iteration)."""
    spec = spec or KernelSpec()
    _, _, K = _radial_operator(spec, r_max, m)
    rho = float(np.max(np.abs(np.linalg.eigvals(K))))
    return 1.0 / math.sqrt(rho)


def h_series_term(beta, k, z, spec=None, r_max=16.0, m=8193):
    """k-th Neumann term h_{beta;k}(z) = (K^k 1)(z) by nested radial quadrature."""
    spec = spec or KernelSpec()
    where = "functionals.h_series_term"
    require(int(k) == k and k >= 0, InvalidParameterError, where, "order must be a non-negative integer")
    require(k <= MAX_SERIES_ORDER, UnsupportedOrderError, where, f"order {k} > {MAX_SERIES_ORDER}")
    if k == 0:
        return 1.0
    nodes, kw, K = _radial_operator(spec, r_max, m)
    t = np.ones(nodes.size)
    for _ in range(int(k) - 1):
        t = beta ** 2 * (K @ t)
    d = spec.dimension
    s = float(np.linalg.norm(np.atleast_1d(z)))
    live = kw != 0
    c = chi(d) * sphere_area(d)
    return float(beta ** 2 * c * np.sum(kw[live] * t[live] * np.maximum(s, nodes[live]) ** (2 - d)))


def _radial_quad(f, upper, n=400):
    x, w = np.polynomial.legendre.leggauss(n)
    r = 0.5 * upper * (x + 1.0)
    return float(np.sum(0.5 * upper * w * f(r)))


def gamma_squared(beta, hsol, spec=None):
    """beta^2 int R(x) h(x / sqrt2) dx by radial Gauss-Legendre quadrature."""
    spec = spec or KernelSpec(dimension=hsol.dimension)
    d = spec.dimension
    if beta == 0:
        return 0.0
    area = sphere_area(d)
    return beta ** 2 * _radial_quad(lambda r: area * r ** (d - 1) * spec.R_radial(r) * hsol(r / math.sqrt(2.0)),
                                    spec.R_support)


def gamma_squared_rescaled(beta, hsol, spec=None):
    """The same constant written as 2^(d/2) beta^2 int R(sqrt2 x) h(x) dx."""
    spec = spec or KernelSpec(dimension=hsol.dimension)
    d = spec.dimension
    if beta == 0:
        return 0.0
    area = sphere_area(d)
    return 2 ** (d / 2) * beta ** 2 * _radial_quad(
        lambda r: area * r ** (d - 1) * spec.R_radial(math.sqrt(2.0) * r) * hsol(r),
        spec.R_support / math.sqrt(2.0))


def sample_R_density(spec, n, gen):
    """Points distributed with density R / int R (inverse CDF in the radius)."""
    d = spec.dimension
    if spec.direct_R:
        rad = spec.support_radius * gen.random(n) ** (1.0 / d)
    else:
        r = spec.radii
        dens = spec.R_table * r ** (d - 1)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(r))])
        rad = np.interp(gen.random(n) * cdf[-1], cdf, r)
    u = gen.standard_normal((n, d))
    return rad[:, None] * u / np.linalg.norm(u, axis=1, keepdims=True)


def R_integral(spec):
    d = spec.dimension
    if spec.direct_R:
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * spec.support_radius ** d
    return float(np.trapezoid(sphere_area(d) * spec.radii ** (d - 1) * spec.R_table, spec.radii))


def gamma_squared_mc(beta, spec=None, n_outer=4096, n_inner=1, H=DEFAULT_HORIZON, dt=DEFAULT_DT, rng=0):
    """Nested Monte Carlo: x ~ R/int R, then h(x / sqrt2) by Brownian paths."""
    spec = spec or KernelSpec()
    stream = as_stream(rng)
    if beta == 0:
        return Estimate(0.0, 0.0, n_outer, "mc", dict(beta=beta))
    x = sample_R_density(spec, n_outer, stream.child(1).generator()) / math.sqrt(2.0)
    starts = np.repeat(x, n_inner, axis=0)
    S, _, _ = run_functional(spec, starts, H, dt, stream.child(2).key)
    h = np.exp(beta ** 2 * S).reshape(n_outer, n_inner).mean(axis=1)
    vals = beta ** 2 * R_integral(spec) * h
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_outer)), n_outer, "mc",
                    dict(beta=beta, n_inner=n_inner, H=H, dt=dt))


# ---------------------------------------------------------------------------
# kernels of the L2 decomposition

@dataclass
class KernelEval:
    T: float
    x1: list
    x2: list
    value: float
    limit: float = None


def _sep(x1, x2):
    return float(np.linalg.norm(np.atleast_1d(np.asarray(x2, float) - np.asarray(x1, float))))


def H_T_inf_values(T, sep, hsol):
    """Vectorised T^((d-2)/2) (h(sqrt(T) sep / sqrt2) - 1)."""
    d = hsol.dimension
    return T ** ((d - 2) / 2) * (hsol(math.sqrt(T) * np.asarray(sep, float) / math.sqrt(2.0)) - 1.0)


def kernel_H_T_inf_limit(beta, x1, x2, hsol, spec=None):
    """Large-T limit G0(x2 - x1) 2^((d-2)/2) beta^2 int R(sqrt2 x) h(x) dx."""
    spec = spec or KernelSpec(dimension=hsol.dimension)
    d = spec.dimension
    r = _sep(x1, x2)
    require(r > 0, SingularityError, "functionals.kernel_H_T_inf", "x1 and x2 must differ")
    if beta == 0:
        return 0.0
    mass = 2 ** (-d / 2) * gamma_squared_rescaled(beta, hsol, spec)
    return chi(d) / r ** (d - 2) * 2 ** ((d - 2) / 2) * mass


def kernel_H_T_inf(beta, T, x1, x2, hsol, spec=None):
    where = "functionals.kernel_H_T_inf"
    r = _sep(x1, x2)
    require(r > 0, SingularityError, where, "x1 and x2 must differ")
    require(T > 0, InvalidParameterError, where, "T must be > 0")
    x1l = np.atleast_1d(np.asarray(x1, float)).tolist()
    x2l = np.atleast_1d(np.asarray(x2, float)).tolist()
    if beta == 0:
        return KernelEval(T, x1l, x2l, 0.0, 0.0)
    value = float(H_T_inf_values(T, r, hsol))
    return KernelEval(T, x1l, x2l, value, kernel_H_T_inf_limit(beta, x1, x2, hsol, spec))


def l2_error_formula(beta, T, hsol=None, spec=None, n_outer=2048, n_inner=256, dt=0.05, rng=0,
                     rule="trapezoid"):
    """Exact squared L2 error of the large-T decomposition by nested Monte Carlo.

    Outer: ``x1, x2, y1, y2 ~ G_1``. Inner: one Brownian bridge ensemble of
    the rescaled difference ``(B2 - B1)/sqrt2`` drives the four endpoint
    combinations of H_(0,T) with common random numbers. H_(T,inf) comes from
    the fixed-point solution.
    """
    spec = spec or KernelSpec()
    where = "functionals.l2_error_formula"
    _check_beta(beta, where)
    params = dict(beta=beta, T=T, n_outer=n_outer, n_inner=n_inner, dt=dt, rule=rule)
    if beta == 0:
        return Estimate(0.0, 0.0, n_outer, "mc", params)
    hsol = hsol or h_beta_fixed_point(beta, spec=spec)
    d = spec.dimension
    stream = as_stream(rng)
    gen = stream.child(1).generator()
    x1, x2, y1, y2 = (gen.standard_normal((n_outer, d)) for _ in range(4))
    scale = math.sqrt(T / 2.0)
    # term order: (y2 - y1), (x2 - y1), (y2 - x1), (x2 - x1); signs + - - +
    ends = np.stack([y2 - y1, x2 - y1, y2 - x1, x2 - x1], axis=1) * scale
    signs = np.array([1.0, -1.0, -1.0, 1.0])
    key = stream.child(2).key
    vals = np.empty(n_outer)
    chunk = max(1, 65536 // (4 * n_inner))
    for o0 in range(0, n_outer, chunk):
        o1 = min(n_outer, o0 + chunk)
        m = o1 - o0
        e = ends[o0:o1][:, :, None, :].repeat(n_inner, axis=2).reshape(-1, d)
        idx = (np.arange(o0, o1)[:, None, None] * n_inner
               + np.arange(n_inner)[None, None, :]).repeat(4, axis=1).reshape(-1)
        S, _, _ = run_functional(spec, np.zeros_like(e), T, dt, key, ends=e, idx=idx, rule=rule)
        A = np.exp(beta ** 2 * S).reshape(m, 4, n_inner).mean(axis=2)
        H0T = A @ signs
        HTi = H_T_inf_values(T, np.linalg.norm(x1[o0:o1] - x2[o0:o1], axis=1), hsol)
        vals[o0:o1] = H0T * HTi
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_outer)), n_outer, "mc", params)


# ---------------------------------------------------------------------------
# heat-kernel time integrals

def heat_tail_integral(d, r, a):
    """int_a^inf G_u(r) du by adaptive quadrature."""
    val, _ = integrate.quad(lambda u: heat_kernel_radial(d, u, r), a, np.inf, epsabs=0.0, epsrel=1e-12,
                            limit=400)
    return val


def c_infty(beta, xj, xj2, hsol, spec=None, gamma2=None):
    """gamma^2 int_0^inf G_{2s+2}(x_j - x_j') ds = gamma^2 / 2 int_2^inf G_u du."""
    spec = spec or KernelSpec(dimension=hsol.dimension)
    if beta == 0:
        return 0.0
    g2 = gamma_squared(beta, hsol, spec) if gamma2 is None else gamma2
    return g2 * 0.5 * heat_tail_integral(spec.dimension, _sep(xj, xj2), 2.0)


def c_infty_closed_form(d, r, gamma2):
    return gamma2 * 0.5 * incomplete_heat_integral(d, r, 2.0)
