"""Counter-based random numbers.

All randomness in the package is a pure function of a 64-bit key and a tuple
of integer counters: ``normal(key, a, b, c)`` always returns the same value,
no matter which worker asks, in which order, or how often. Keys are derived
from a seed and a *stream path* (replica, path, purpose, ...) by hashing.

The mixing function is the splitmix64 finalizer; Gaussians come from the
inverse normal CDF (Wichura's AS241, ``PPND16``), which is accurate to about
1e-16 over the whole open unit interval.
"""

from dataclasses import dataclass, field

import numba as nb
import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(inline="always", cache=True)
def absorb(h, c):
    """Fold one signed integer counter into a hash state."""
    return mix64(h ^ (np.uint64(np.int64(c)) * _GOLDEN + _M1))


@nb.njit(inline="always", cache=True)
def to_unit(h):
    """Map 64 hash bits to a double strictly inside (0, 1)."""
    return (np.float64(h >> _S11) + 0.5) * _TWO_M53


@nb.njit(cache=True)
def ppnd16(p):
    """Inverse standard normal CDF (Wichura 1988, AS241)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@nb.njit(inline="always", cache=True)
def normal3(key, a, b, c):
    h = absorb(absorb(absorb(key, a), b), c)
    return ppnd16(to_unit(h))


@nb.njit(cache=True)
def _normals3(key, a, b, c, out):
    for i in range(out.shape[0]):
        out[i] = normal3(key, a[i], b[i], c[i])


@nb.njit(cache=True)
def _uniforms3(key, a, b, c, out):
    for i in range(out.shape[0]):
        out[i] = to_unit(absorb(absorb(absorb(key, a[i]), b[i]), c[i]))


@nb.njit(cache=True)
def _ppnd16_array(p, out):
    for i in range(p.shape[0]):
        out[i] = ppnd16(p[i])


def inverse_normal_cdf(p):
    p = np.ascontiguousarray(np.atleast_1d(p), dtype=np.float64)
    out = np.empty_like(p)
    _ppnd16_array(p.ravel(), out.ravel())
    return out


def counter_normals(key, a, b, c):
    """Vectorised ``normal3`` over broadcast counter arrays."""
    a, b, c = np.broadcast_arrays(np.asarray(a, np.int64), np.asarray(b, np.int64),
                                  np.asarray(c, np.int64))
    shape = a.shape
    out = np.empty(a.size)
    _normals3(np.uint64(key), a.ravel().copy(), b.ravel().copy(), c.ravel().copy(), out)
    return out.reshape(shape)


def counter_uniforms(key, a, b, c):
    a, b, c = np.broadcast_arrays(np.asarray(a, np.int64), np.asarray(b, np.int64),
                                  np.asarray(c, np.int64))
    shape = a.shape
    out = np.empty(a.size)
    _uniforms3(np.uint64(key), a.ravel().copy(), b.ravel().copy(), c.ravel().copy(), out)
    return out.reshape(shape)


def derive_key(seed, *path):
    """Hash a seed and a stream path into a 64-bit key."""
    # numba hands uint64 back as a Python int; re-wrap so large values stay unsigned
    h = np.uint64(mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _GOLDEN))
    for c in path:
        h = np.uint64(absorb(h, np.int64(c)))
    return int(h)


@dataclass(frozen=True)
class RngStream:
    """A named substream: ``seed`` plus a path of integers.

    ``key`` feeds the counter-based kernels; ``generator()`` gives a numpy
    Philox generator for ordinary vectorised sampling. Both are pure
    functions of ``(seed, path)``.
    """

    seed: int
    path: tuple = field(default_factory=tuple)

    def child(self, *more):
        return RngStream(self.seed, tuple(self.path) + tuple(int(m) for m in more))

    @property
    def key(self):
        return derive_key(self.seed, *self.path)

    def generator(self):
        ss = np.random.SeedSequence(entropy=self.seed & 0xFFFFFFFFFFFFFFFF,
                                    spawn_key=tuple(int(p) & 0xFFFFFFFF for p in self.path))
        return np.random.Generator(np.random.Philox(ss))


def as_stream(rng):
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected RngStream or int seed, got {type(rng).__name__}")
