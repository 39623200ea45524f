"""Brownian paths and Monte-Carlo partition functions in a fixed noise.

The partition function is

    Z_T(x) = E_x[ exp(beta * int_0^T xi_1(B(s), s) ds - beta^2 R(0) T / 2) ].

Paths are generated from counter-based streams keyed by (seed, path index), so
an estimate depends only on the seed, never on how work is split.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidParameterError, NumericalOverflowError, require
from .noise import NoiseBox, line_integrals, mollified_line_integral, steps_for
from .rng import RngStream, as_stream, counter_normals, derive_key

PATH_TAG = 0xB0
REPLICA_TAG = 0xE1


@dataclass
class Estimate:
    value: float
    std_error: float
    n_samples: int
    method: str = "mc"
    params: dict = field(default_factory=dict)
    tail_bound: float = None
    warnings: list = field(default_factory=list)

    def to_dict(self):
        out = asdict(self)
        out["n"] = out.pop("n_samples")
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def exact(value, method="quadrature", **params):
    return Estimate(float(value), 0.0, 0, method, params)


def mean_estimate(samples, method="mc", **params):
    x = np.asarray(samples, dtype=float)
    n = x.size
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(np.mean(x)), se, n, method, params)


def mean_exp(logw, mask=None, where="polymer.partition_mc"):
    """Mean and standard error of ``exp(logw)`` (zero where ``mask`` is False), max-shifted."""
    logw = np.asarray(logw, dtype=float)
    if mask is not None:
        logw = np.where(mask, logw, -np.inf)
    finite = logw[np.isfinite(logw)]
    if np.any(np.isnan(logw)) or np.any(logw == np.inf):
        raise NumericalOverflowError(where, "non-finite path weight; beta too large for the time step")
    n = logw.size
    if finite.size == 0:
        return 0.0, 0.0
    m = float(np.max(finite))
    w = np.exp(logw - m)
    scale = math.exp(m) if m < 700 else math.inf
    mean = float(np.mean(w)) * scale
    se = float(np.std(w, ddof=1) / math.sqrt(n)) * scale if n > 1 else 0.0
    if not (math.isfinite(mean) and math.isfinite(se)):
        raise NumericalOverflowError(where, f"weights overflow (max log-weight {m:.1f}); "
                                            "beta too large for the time step")
    return mean, se


@dataclass
class PathBundle:
    """Discretised trajectories on the grid ``0, dt, ..., T``.

    For ``kind == "restricted"`` only trajectories with
    ``max_k |w(t_k) - w(0)| <= rho`` are kept; ``n_total`` counts all draws.
    """

    start: np.ndarray
    times: np.ndarray
    trajectories: np.ndarray
    kind: str = "free"
    endpoint: np.ndarray = None
    rho: float = None
    n_total: int = 0
    indices: np.ndarray = None

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def acceptance(self):
        return self.trajectories.shape[0] / self.n_total


def brownian_increments(key, n, K, d, dt, p0=0):
    p = np.arange(p0, p0 + n)[:, None, None]
    k = np.arange(K)[None, :, None]
    a = np.arange(d)[None, None, :]
    return math.sqrt(dt) * counter_normals(key, p, k, a)


def sample_paths(start, T, dt, n, kind="free", rng=0, endpoint=None, rho=None):
    """Brownian paths, bridges or radius-restricted paths from ``start``.

    Free path ``p`` has increments ``sqrt(dt) * normal3(key, p, k, axis)``,
    identical to the paths generated inside the noise kernel.
    """
    where = "polymer.sample_paths"
    require(T > 0 and dt > 0, InvalidParameterError, where, "T and dt must be > 0")
    require(n >= 1, InvalidParameterError, where, "n must be >= 1")
    require(kind in ("free", "bridge", "restricted"), InvalidParameterError, where, f"unknown kind {kind!r}")
    K = steps_for(T, dt, where)
    start = np.atleast_1d(np.asarray(start, dtype=float))
    d = start.size
    inc = brownian_increments(as_stream(rng).key, n, K, d, dt)
    first = np.broadcast_to(start, (n, 1, d))
    traj = np.cumsum(np.concatenate([first, inc], axis=1), axis=1)
    times = np.arange(K + 1) * dt
    bundle = PathBundle(start, times, traj, kind, n_total=n, indices=np.arange(n))
    if kind == "bridge":
        require(endpoint is not None, InvalidParameterError, where, "bridge paths need an endpoint")
        b = np.broadcast_to(np.asarray(endpoint, dtype=float), (d,))
        u = (times / times[-1])[None, :, None]
        traj -= u * (traj[:, -1:, :] - b)
        traj[:, -1, :] = b
        bundle.endpoint = b
    elif kind == "restricted":
        require(rho is not None and rho > 0, InvalidParameterError, where, "rho must be > 0")
        keep = np.max(np.linalg.norm(traj - start, axis=2), axis=1) <= rho
        bundle.trajectories = traj[keep]
        bundle.indices = np.flatnonzero(keep)
        bundle.rho = float(rho)
    return bundle


def _starts(x, d, n):
    x = np.zeros(d) if x is None else np.broadcast_to(np.asarray(x, dtype=float), (d,))
    return np.ascontiguousarray(np.tile(x, (n, 1)))


def _check_beta(beta, where):
    require(beta >= 0 and math.isfinite(beta), InvalidParameterError, where, f"beta must be >= 0, got {beta}")


def partition_mc(beta, T, x, view, spec, paths=None, n_paths=4096, rng=0):
    """Estimate Z_T(x) in the noise ``view``.

    With an explicit :class:`PathBundle` the line integrals go through the
    reference route (slow, supports forced cells); otherwise paths are drawn
    inside the compiled kernel from the stream ``rng``.
    """
    where = "polymer.partition_mc"
    _check_beta(beta, where)
    require(T > 0, InvalidParameterError, where, "T must be > 0")
    params = dict(beta=beta, T=T)
    if beta == 0:
        n = paths.n_total if paths is not None else n_paths
        return Estimate(1.0, 0.0, n, "mc", params)
    if paths is not None:
        require(abs(paths.times[-1] - T) < 1e-9 * T, InvalidParameterError, where,
                "path horizon must equal T")
        I = np.array([mollified_line_integral(view, spec, tr, dt=paths.dt) for tr in paths.trajectories])
        logw = np.full(paths.n_total, -np.inf)
        logw[:I.size] = beta * I - 0.5 * beta ** 2 * spec.R0 * T
        n = paths.n_total
    else:
        I, _ = line_integrals(view, spec, _starts(x, view.dimension, n_paths), [T], as_stream(rng).key)
        logw = beta * I[:, 0] - 0.5 * beta ** 2 * spec.R0 * T
        n = n_paths
    value, se = mean_exp(logw, where=where)
    return Estimate(value, se, n, "mc", params)


def horizon_weights(beta, T_list, x, view, spec, n_paths, rng, restrict_time=0.0, rho=math.inf):
    """Log-weights ``[path, horizon]`` on one shared path set, plus restriction flags."""
    I, ok = line_integrals(view, spec, _starts(x, view.dimension, n_paths), list(T_list),
                           as_stream(rng).key, restrict_time=restrict_time, rho=rho)
    T = np.asarray(T_list, dtype=float)
    return beta * I - 0.5 * beta ** 2 * spec.R0 * T[None, :], ok


def partition_mc_coupled(beta, T_short, T_long, x, view, spec, n_paths=4096, rng=0):
    """``(Z_short, Z_long)`` on the same paths and noise.

    ``Z_long.params["difference"]`` holds the coupled difference and its
    standard error (path-wise paired, so far smaller than the two errors combined).
    """
    where = "polymer.partition_mc_coupled"
    _check_beta(beta, where)
    require(0 < T_short <= T_long, InvalidParameterError, where, "need 0 < T_short <= T_long")
    if beta == 0:
        short = Estimate(1.0, 0.0, n_paths, "mc", dict(beta=beta, T=T_short))
        long_ = Estimate(1.0, 0.0, n_paths, "mc", dict(beta=beta, T=T_long,
                                                       difference=dict(value=0.0, std_error=0.0)))
        return short, long_
    logw, _ = horizon_weights(beta, [T_short, T_long], x, view, spec, n_paths, rng)
    vs, ses = mean_exp(logw[:, 0], where=where)
    vl, sel = mean_exp(logw[:, 1], where=where)
    diff = np.exp(logw[:, 1]) - np.exp(logw[:, 0])
    if T_short == T_long:
        diff_est = dict(value=0.0, std_error=0.0)
    else:
        diff_est = dict(value=float(np.mean(diff)), std_error=float(np.std(diff, ddof=1) / math.sqrt(n_paths)))
    return (Estimate(vs, ses, n_paths, "mc", dict(beta=beta, T=T_short)),
            Estimate(vl, sel, n_paths, "mc", dict(beta=beta, T=T_long, difference=diff_est)))


def restricted_partition_mc(beta, tau, x, view, spec, rho, n_paths=4096, rng=0, paths=None):
    """Z_{tau; A}(x): paths leaving the ball of radius ``rho`` around x contribute 0."""
    where = "polymer.restricted_partition_mc"
    _check_beta(beta, where)
    require(rho > 0, InvalidParameterError, where, "rho must be > 0")
    params = dict(beta=beta, tau=tau, rho=rho)
    if paths is not None:
        require(paths.kind == "restricted", InvalidParameterError, where, "need restricted paths")
        if beta == 0:
            return Estimate(paths.acceptance, 0.0, paths.n_total, "mc", params)
        I = np.array([mollified_line_integral(view, spec, tr, dt=paths.dt) for tr in paths.trajectories])
        logw = np.full(paths.n_total, -np.inf)
        logw[:I.size] = beta * I - 0.5 * beta ** 2 * spec.R0 * tau
        value, se = mean_exp(logw, where=where)
        return Estimate(value, se, paths.n_total, "mc", params)
    logw, ok = horizon_weights(beta, [tau], x, view, spec, n_paths, rng, restrict_time=tau, rho=rho)
    value, se = mean_exp(logw[:, 0], mask=ok, where=where)
    params["acceptance"] = float(np.mean(ok))
    return Estimate(value, se, n_paths, "mc", params)


# ---------------------------------------------------------------------------
# two-level estimation over independent noise replicas

def replica_box(seed, r, starts, T, spec, dx=0.25, dt=None):
    noise_seed = derive_key(seed, REPLICA_TAG, r) & 0x7FFFFFFFFFFFFFFF
    return NoiseBox.sized_for(noise_seed, starts, T, spec, spatial_step=dx, time_step=dt)


def replica_stream(seed, r):
    return RngStream(int(seed), (PATH_TAG, int(r)))


def partition_replicas(beta, T_list, spec, replicas, n_paths, seed, x=None, dx=0.25, dt=None):
    """Inner estimates of Z_T over independent noise replicas.

    Returns ``(values, std_errors)`` of shape ``(replicas, len(T_list))``; all
    horizons in a row share the noise and the paths.
    """
    d = spec.dimension
    x = np.zeros(d) if x is None else np.asarray(x, dtype=float)
    T_list = list(T_list)
    vals = np.empty((replicas, len(T_list)))
    ses = np.empty_like(vals)
    for r in range(replicas):
        box = replica_box(seed, r, x[None, :], max(T_list), spec, dx, dt)
        logw, _ = horizon_weights(beta, T_list, x, box.view(), spec, n_paths, replica_stream(seed, r))
        for h in range(len(T_list)):
            vals[r, h], ses[r, h] = mean_exp(logw[:, h], where="polymer.partition_replicas")
    return vals, ses


def noise_variance(values, inner_se):
    """Debiased noise-variance of Z from inner estimates.

    ``var(Zhat) - mean(inner_se^2)`` removes the inner Monte-Carlo variance;
    the standard error comes from the replica-level jackknife-free formula
    ``sd((Zhat - mean)^2 - inner_se^2) / sqrt(replicas)``.
    """
    z = np.asarray(values, dtype=float)
    s2 = np.asarray(inner_se, dtype=float) ** 2
    r = z.size
    dev2 = (z - z.mean()) ** 2 * r / (r - 1) - s2
    return Estimate(float(dev2.mean()), float(dev2.std(ddof=1) / math.sqrt(r)), r, "mc",
                    dict(estimator="debiased two-level variance"))
