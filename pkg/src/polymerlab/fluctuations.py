"""Rescaled fluctuations across independent noise replicas.

For space-time points ``(x_j, t_j)`` with ``t_M = max t_j`` and shifts
``delta_j = t_M - t_j``, one noise realisation serves every point:

    PF_j = T^((d-2)/4) (Z_inf(sqrt(T) x_j; xi(., . + delta_j T)) - Z_{t_j T}(...)),
    FE_j = T^((d-2)/4) (log Z_inf(...) - log Z_{t_j T}(...)),

with ``Z_inf`` replaced by ``Z_{T_max}``, ``T_max = t_max_factor * t_M * T``.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .errors import EnsembleAbortError, InvalidParameterError, require
from .io import atomic_write
from .mollifier import KernelSpec, heat_kernel_radial
from .noise import NoiseBox, line_integrals, steps_for, touched_cell_keys
from .polymer import Estimate, REPLICA_TAG, horizon_weights, mean_exp, sample_paths
from .rng import RngStream, derive_key

INNER_REL_SE_MAX = 0.10
INVALID_FRACTION_MAX = 0.05
FLUCT_TAG = 0xF1


# ---------------------------------------------------------------------------
# limiting covariance of U

@dataclass
class LimitReference:
    gamma2: float
    cov_U: np.ndarray
    var_Zinf: float = None
    kind: str = "pointwise"
    points: list = None


def _tail(d, r, a):
    """int_a^inf G_u(r) du."""
    val, _ = integrate.quad(lambda u: heat_kernel_radial(d, u, r), a, np.inf, epsabs=0.0,
                            epsrel=1e-11, limit=400)
    return val


def cov_U(gamma2, x1, t1, x2, t2, d=3):
    """gamma^2 int_0^inf G_{t1+t2+2s}(x1 - x2) ds = gamma^2/2 int_{t1+t2}^inf G_u du."""
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x1, float) - np.asarray(x2, float))))
    return 0.5 * gamma2 * _tail(d, r, t1 + t2)


def cov_U_reference(points, gamma2, d=3, var_Zinf=None):
    """Covariance matrix of U at the given ``(x, t)`` points."""
    M = len(points)
    cov = np.zeros((M, M))
    if gamma2 != 0:
        for i in range(M):
            for j in range(i, M):
                cov[i, j] = cov[j, i] = cov_U(gamma2, points[i][0], points[i][1], points[j][0], points[j][1], d)
    ev = np.linalg.eigvalsh(cov) if M else np.zeros(0)
    require(M == 0 or ev.min() >= -1e-10 * max(1.0, ev.max()), InvalidParameterError,
            "fluctuations.cov_U_reference", "covariance is not positive semidefinite")
    return LimitReference(float(gamma2), cov, var_Zinf, "pointwise",
                          [(np.atleast_1d(x).tolist(), float(t)) for x, t in points])


# ---------------------------------------------------------------------------
# test functions for spatial averages

@dataclass(frozen=True)
class AveragingFunction:
    """``f`` as a Gaussian mixture or a constant on an axis-aligned box.

    mixture: ``f(x) = sum_a weight_a N(x; mean_a, sigma_a^2 I)``.
    box: ``f(x) = height`` on ``[lo, hi]^d``.
    """

    kind: str
    weights: tuple = ()
    means: tuple = ()
    sigmas: tuple = ()
    lo: float = -1.0
    hi: float = 1.0
    height: float = 1.0

    @classmethod
    def mixture(cls, weights, means, sigmas):
        return cls("mixture", tuple(map(float, weights)), tuple(tuple(map(float, np.atleast_1d(m))) for m in means),
                   tuple(map(float, sigmas)))

    @classmethod
    def box(cls, lo, hi, height=1.0):
        return cls("box", lo=float(lo), hi=float(hi), height=float(height))

    @property
    def is_zero(self):
        if self.kind == "mixture":
            return all(w == 0 for w in self.weights)
        return self.height == 0 or self.hi <= self.lo

    def nodes(self, d, order=3):
        """Quadrature nodes and weights with ``sum w g(x) ~ int f g``."""
        if self.kind == "mixture":
            z, w = np.polynomial.hermite_e.hermegauss(order)
            w = w / math.sqrt(2 * math.pi)
            grid = np.stack(np.meshgrid(*([z] * d), indexing="ij"), -1).reshape(-1, d)
            wg = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), -1).reshape(-1, d), axis=1)
            xs, ws = [], []
            for c, m, s in zip(self.weights, self.means, self.sigmas):
                xs.append(np.broadcast_to(np.asarray(m, float), (d,)) + s * grid)
                ws.append(c * wg)
            return np.concatenate(xs), np.concatenate(ws)
        z, w = np.polynomial.legendre.leggauss(order)
        half = 0.5 * (self.hi - self.lo)
        z = self.lo + half * (z + 1)
        w = half * w
        grid = np.stack(np.meshgrid(*([z] * d), indexing="ij"), -1).reshape(-1, d)
        wg = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), -1).reshape(-1, d), axis=1)
        return grid, self.height * wg


def averaged_variance_reference(f, t, gamma2, d=3, order=3):
    """gamma^2 iint f(x) f(y) int_0^inf G_{2t+2s}(x - y) ds dx dy."""
    if f.is_zero or gamma2 == 0:
        return 0.0
    total = 0.0
    if f.kind == "mixture":
        for ca, ma, sa in zip(f.weights, f.means, f.sigmas):
            for cb, mb, sb in zip(f.weights, f.means, f.sigmas):
                r = float(np.linalg.norm(np.asarray(ma) - np.asarray(mb)))
                total += ca * cb * 0.5 * _tail(d, r, 2 * t + sa ** 2 + sb ** 2)
        return gamma2 * total
    x, w = f.nodes(d, order)
    for i in range(len(w)):
        for j in range(len(w)):
            total += w[i] * w[j] * 0.5 * _tail(d, float(np.linalg.norm(x[i] - x[j])), 2 * t)
    return gamma2 * total


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class FluctuationEnsemble:
    points: list
    kind: str
    beta: float
    T: float
    T_max: float
    samples: np.ndarray
    inner_mc: np.ndarray
    seeds: list
    valid: np.ndarray = None
    z_short: np.ndarray = None
    z_long: np.ndarray = None
    rel_se: np.ndarray = None
    tail_proxy: np.ndarray = None
    params: dict = field(default_factory=dict)

    @property
    def n_invalid(self):
        return int(np.sum(~self.valid)) if self.valid is not None else 0

    def valid_samples(self):
        return self.samples[self.valid] if self.valid is not None else self.samples

    def as_kind(self, kind):
        """Same replicas, other statistic (PF <-> FE)."""
        require(kind in ("PF", "FE"), InvalidParameterError, "fluctuations.as_kind", f"unknown kind {kind!r}")
        out = FluctuationEnsemble(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        out.kind = kind
        out.samples = _transform(kind, self.z_short, self.z_long, self.T, len(self.points[0][0]))
        return out

    def to_csv(self, path):
        lines = ["replica,point,value"]
        for r in range(self.samples.shape[0]):
            for j in range(self.samples.shape[1]):
                lines.append(f"{r},{j},{self.samples[r, j]:.17g}")
        atomic_write(path, "\n".join(lines) + "\n")
        meta = dict(points=self.points, kind=self.kind, beta=self.beta, T=self.T, T_max=self.T_max,
                    inner_mc=np.asarray(self.inner_mc).tolist(), seeds=[int(s) for s in self.seeds],
                    valid=None if self.valid is None else self.valid.tolist(),
                    n_invalid=self.n_invalid, params=self.params)
        atomic_write(str(path) + ".json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _transform(kind, zs, zl, T, d):
    pref = T ** ((d - 2) / 4)
    if kind == "PF":
        return pref * (zl - zs)
    with np.errstate(divide="ignore", invalid="ignore"):
        return pref * (np.log(zl) - np.log(zs))


def replica_seed(base_seed, r):
    return derive_key(base_seed, REPLICA_TAG, FLUCT_TAG, r) & 0x7FFFFFFFFFFFFFFF


def _replica(beta, xs, ts, T, T_max, inner_n, base_seed, r, spec, dx, dt, with_half):
    """Inner estimates of (Z_short, Z_long, Z_{T_max/2}) at each point for replica ``r``."""
    d = spec.dimension
    t_M = max(ts)
    shifts = [(t_M - t) * T for t in ts]
    starts = math.sqrt(T) * np.asarray(xs, dtype=float)
    box = NoiseBox.sized_for(replica_seed(base_seed, r), starts, T_max, spec, spatial_step=dx, time_step=dt)
    box = NoiseBox(box.seed, d, box.spatial_step, box.time_step, box.spatial_radius, T_max + max(shifts))
    stream = RngStream(int(base_seed), (FLUCT_TAG, int(r)))
    M = len(ts)
    out = np.empty((M, 3))
    se = np.empty((M, 3))
    for j in range(M):
        view = box.view().shifted(shifts[j])
        hz = [ts[j] * T, T_max] + ([0.5 * T_max] if with_half else [])
        logw, _ = horizon_weights(beta, hz, starts[j], view, spec, inner_n, stream.child(j))
        for h in range(len(hz)):
            out[j, h], se[j, h] = mean_exp(logw[:, h], where="fluctuations.build_ensemble")
        if not with_half:
            out[j, 2], se[j, 2] = np.nan, np.nan
    return out, se


def _grid_time(t, dt):
    return round(t / dt) * dt


def build_ensemble(kind, points, beta, T, T_max=None, inner_n=4096, replicas=512, base_seed=0, spec=None,
                   dx=0.25, dt=None, t_max_factor=16.0, bias_proxy=True, progress=None):
    """Fluctuation samples ``[replica, point]``; see the module docstring."""
    spec = spec or KernelSpec()
    where = "fluctuations.build_ensemble"
    require(kind in ("PF", "FE"), InvalidParameterError, where, f"unknown kind {kind!r}")
    require(beta >= 0, InvalidParameterError, where, "beta must be >= 0")
    require(len(points) >= 1 and replicas >= 1 and inner_n >= 1, InvalidParameterError, where,
            "need points, replicas and inner_n")
    dt = dx ** 2 if dt is None else dt
    d = spec.dimension
    xs = [np.broadcast_to(np.asarray(x, float), (d,)).copy() for x, _ in points]
    ts = [float(t) for _, t in points]
    require(all(t > 0 for t in ts), InvalidParameterError, where, "times must be > 0")
    keys = {(tuple(x), t) for x, t in zip(xs, ts)}
    require(len(keys) == len(points), InvalidParameterError, where, "points must be distinct")
    t_M = max(ts)
    T_max = t_max_factor * t_M * T if T_max is None else T_max
    require(T < T_max and T_max >= t_M * T, InvalidParameterError, where, "need T < T_max")
    for t in ts:
        steps_for(t * T, dt, where)
        steps_for((t_M - t) * T, dt, where)
    steps_for(T_max, dt, where)
    M = len(points)
    pts = [(x.tolist(), t) for x, t in zip(xs, ts)]
    seeds = [replica_seed(base_seed, r) for r in range(replicas)]
    params = dict(dx=dx, dt=dt, t_max_factor=t_max_factor, base_seed=base_seed,
                  kernel=dict(profile=spec.profile, support_radius=spec.support_radius, dimension=d))
    if beta == 0:
        z = np.ones((replicas, M))
        return FluctuationEnsemble(pts, kind, beta, T, T_max, np.zeros((replicas, M)),
                                   np.full(replicas, inner_n), seeds, np.ones(replicas, bool), z, z.copy(),
                                   np.zeros((replicas, M)), np.zeros((replicas, M)), params)
    zs = np.empty((replicas, M))
    zl = np.empty((replicas, M))
    rel = np.empty((replicas, M))
    tail = np.full((replicas, M), np.nan)
    used = np.full(replicas, inner_n)
    valid = np.ones(replicas, bool)
    half_ok = bias_proxy and 0.5 * T_max > max(ts) * T
    for r in range(replicas):
        for attempt in range(2):
            n = inner_n * (2 ** attempt)
            z, se = _replica(beta, xs, ts, T, T_max, n, base_seed, r, spec, dx, dt, half_ok)
            with np.errstate(divide="ignore", invalid="ignore"):
                rr = np.where(z[:, :2] > 0, se[:, :2] / z[:, :2], np.inf)
            if np.all(rr <= INNER_REL_SE_MAX):
                break
        used[r] = n
        zs[r], zl[r] = z[:, 0], z[:, 1]
        rel[r] = rr.max(axis=1)
        if half_ok:
            tail[r] = T ** ((d - 2) / 4) * (z[:, 1] - z[:, 2])
        valid[r] = bool(np.all(rr <= INNER_REL_SE_MAX) and np.all(z[:, :2] > 0))
        if progress:
            progress(r + 1, replicas)
    n_bad = int(np.sum(~valid))
    if n_bad > INVALID_FRACTION_MAX * replicas:
        raise EnsembleAbortError(where, f"{n_bad}/{replicas} replicas invalid (inner relative s.e. above "
                                        f"{INNER_REL_SE_MAX:.0%} after doubling inner_n, or a non-positive "
                                        f"estimate); raise inner_n or lower beta / T_max")
    samples = _transform(kind, zs, zl, T, d)
    params["bias_proxy_var"] = float(np.nanvar(tail)) if half_ok else None
    return FluctuationEnsemble(pts, kind, beta, T, T_max, samples, used, seeds, valid, zs, zl, rel, tail, params)


def build_averaged_ensemble(f, t, beta, T, T_max=None, inner_n=4096, replicas=512, base_seed=0, spec=None,
                            kind="FE", order=3, **kw):
    """Samples of ``int f(x) F(x, t) dx`` by quadrature over nodes sharing one noise per replica."""
    spec = spec or KernelSpec()
    d = spec.dimension
    if f.is_zero or beta == 0:
        x, w = f.nodes(d, order) if not f.is_zero else (np.zeros((1, d)), np.zeros(1))
        ens = FluctuationEnsemble([(x[0].tolist(), t)], kind, beta, T, T_max, np.zeros((replicas, 1)),
                                  np.full(replicas, inner_n), [replica_seed(base_seed, r) for r in range(replicas)],
                                  np.ones(replicas, bool))
        ens.params["test_function"] = asdict(f)
        return ens
    x, w = f.nodes(d, order)
    dx = kw.get("dx", 0.25)
    # start points sit on the lattice of the rescaled coordinates
    x = np.round(x * math.sqrt(T) / dx) * dx / math.sqrt(T)
    ens = build_ensemble(kind, [(xi, t) for xi in x], beta, T, T_max, inner_n, replicas, base_seed, spec, **kw)
    avg = ens.samples @ w
    out = FluctuationEnsemble([(x[0].tolist(), t)], kind, beta, T, ens.T_max, avg[:, None], ens.inner_mc,
                              ens.seeds, ens.valid, params=dict(ens.params, test_function=asdict(f),
                                                                nodes=x.tolist(), node_weights=w.tolist()))
    return out


# ---------------------------------------------------------------------------
# empirical L2 residual of the decomposition

def decomposition_residual_stat(beta, T, point=((0.0, 0.0, 0.0), 1.0), replicas=64, inner_n=4096, seed=0,
                                spec=None, n_y=64, dx=0.25, dt=None, t_max_factor=16.0):
    """E[(PF - Z_{tT} T^((d-2)/4) int G_t(x - y)(Z_inf(y sqrt(T); xi(., . + tT)) - 1) dy)^2].

    Each replica splits its inner paths and its ``y ~ G_t`` samples into two
    independent halves; the product of the two half-residuals is unbiased for
    the squared residual given the noise, so inner Monte-Carlo error does not
    bias the statistic.
    """
    spec = spec or KernelSpec()
    where = "fluctuations.decomposition_residual_stat"
    require(beta >= 0, InvalidParameterError, where, "beta must be >= 0")
    require(inner_n >= 2 and n_y >= 2, InvalidParameterError, where, "need inner_n >= 2 and n_y >= 2")
    params = dict(beta=beta, T=T, replicas=replicas, inner_n=inner_n, n_y=n_y, t_max_factor=t_max_factor)
    if beta == 0:
        return Estimate(0.0, 0.0, replicas, "mc", params)
    dt = dx ** 2 if dt is None else dt
    d = spec.dimension
    x = np.broadcast_to(np.asarray(point[0], float), (d,))
    t = float(point[1])
    T_max = t_max_factor * t * T
    tT = _grid_time(t * T, dt)
    pref = T ** ((d - 2) / 4)
    prods = np.empty(replicas)
    for r in range(replicas):
        base = RngStream(int(seed), (FLUCT_TAG, 0xD0, int(r)))
        gen = base.child(9).generator()
        ys = x + math.sqrt(t) * gen.standard_normal((n_y, d))
        starts_y = np.round(ys * math.sqrt(T) / dx) * dx
        x0 = np.round(x * math.sqrt(T) / dx) * dx
        all_starts = np.vstack([x0[None, :], starts_y])
        box = NoiseBox.sized_for(replica_seed(seed, r), all_starts, T_max, spec, spatial_step=dx, time_step=dt)
        view = box.view()
        later = view.shifted(tT)
        half = []
        for hidx in range(2):
            s = base.child(hidx)
            logw, _ = horizon_weights(beta, [tT, T_max], x0, view, spec, inner_n // 2, s.child(0))
            z_s, _ = mean_exp(logw[:, 0], where=where)
            z_l, _ = mean_exp(logw[:, 1], where=where)
            ys_h = starts_y[hidx::2]
            acc = 0.0
            for k, y0 in enumerate(ys_h):
                lw, _ = horizon_weights(beta, [T_max - tT], y0, later, spec, inner_n // 2, s.child(1 + k))
                zy, _ = mean_exp(lw[:, 0], where=where)
                acc += zy - 1.0
            half.append(pref * (z_l - z_s) - z_s * pref * acc / len(ys_h))
        prods[r] = half[0] * half[1]
    return Estimate(float(prods.mean()), float(prods.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0,
                    replicas, "mc", params)


# ---------------------------------------------------------------------------
# cost projection

def inner_relative_se(beta, R0, horizon, inner_n):
    """Expected inner relative standard error: sqrt((exp(beta^2 R(0) T) - 1) / n)."""
    return math.sqrt(math.expm1(beta ** 2 * R0 * horizon) / inner_n)


def kernel_throughput(spec, dx=0.25, dt=None, n=256, T=16.0, seed=0):
    """Measured path-steps per second of the noise kernel."""
    import time
    dt = dx ** 2 if dt is None else dt
    box = NoiseBox.sized_for(seed, np.zeros((1, spec.dimension)), T, spec, dx, dt)
    starts = np.zeros((n, spec.dimension))
    line_integrals(box.view(), spec, starts[:4], [dt], 1)  # compile
    t0 = time.perf_counter()
    line_integrals(box.view(), spec, starts, [T], 1)
    return n * round(T / dt) / (time.perf_counter() - t0)


def project_ensemble_cost(points, T, T_max, inner_n, replicas, throughput, dt=0.0625):
    """Seconds needed for one ensemble at the measured kernel throughput."""
    t_M = max(t for _, t in points)
    steps = sum(T_max / dt for _ in points)
    return replicas * inner_n * steps / throughput


# ---------------------------------------------------------------------------
# independence of restricted partition functions

@dataclass
class CellOverlap:
    keys: list
    n_paths: list
    overlap: int
    rho: float
    tau: float

    @property
    def disjoint(self):
        return self.overlap == 0


def restricted_cell_overlap(T, xs, exponent=0.4, n_paths=256, seed=0, spec=None, dx=0.25, dt=None):
    """Noise cells read by restricted partitions at ``sqrt(T) x_j`` with ``rho = tau = T^exponent``.

    ``tau`` is rounded down to the time grid. Returns the cell key sets and the
    size of their pairwise intersections.
    """
    spec = spec or KernelSpec()
    dt = dx ** 2 if dt is None else dt
    d = spec.dimension
    rho = T ** exponent
    tau = math.floor(rho / dt) * dt
    starts = [np.round(math.sqrt(T) * np.broadcast_to(np.asarray(x, float), (d,)) / dx) * dx for x in xs]
    box = NoiseBox.sized_for(seed, np.array(starts), tau, spec, dx, dt)
    view = box.view()
    keys, counts = [], []
    for j, x0 in enumerate(starts):
        b = sample_paths(x0, tau, dt, n_paths, "restricted", RngStream(int(seed), (FLUCT_TAG, 0xA1, j)), rho=rho)
        keys.append(touched_cell_keys(view, spec, b.trajectories))
        counts.append(int(len(b.trajectories)))
    overlap = sum(int(np.intersect1d(keys[i], keys[j]).size)
                  for i in range(len(keys)) for j in range(i + 1, len(keys)))
    return CellOverlap(keys, counts, overlap, rho, tau)
