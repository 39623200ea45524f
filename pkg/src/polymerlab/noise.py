"""Virtual space-time white noise on a lattice box.

A cell is a pair (time slot ``j``, lattice point ``i`` in Z^d) covering
``[j dt, (j+1) dt) x (i dx + [-dx/2, dx/2)^d)``. Its increment is
``sqrt(dx^d dt) * N`` where ``N`` is a counter-based Gaussian keyed on
``(seed, j, i)``, so nothing is ever stored: any worker can regenerate any
cell at any time.

Views never copy noise. A :class:`NoiseView` is an affine relabelling of the
base cells (time shift, time reversal, spatial offset, diffusive rescaling).
"""

import json
import math
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np

from .errors import (InvalidParameterError, OutOfDomainError, PathEscapeError,
                     UnsupportedModeError, require)
from .rng import absorb, derive_key, normal3, ppnd16, to_unit

NOISE_TAG = 0x5EED
PHI_TABLE_SIZE = 4096
MAX_SLAB_CELLS = 1 << 24

# kernel status codes
_OK, _ESCAPE, _TIME_OUT = 0, 1, 2


@dataclass(frozen=True)
class NoiseBox:
    """Immutable description of one white-noise realisation."""

    seed: int
    dimension: int = 3
    spatial_step: float = 0.25
    time_step: float = 0.0625
    spatial_radius: float = 16.0
    horizon: float = 64.0

    def __post_init__(self):
        where = "noise.NoiseBox"
        require(self.dimension >= 1, InvalidParameterError, where, "dimension must be >= 1")
        require(self.spatial_step > 0 and self.time_step > 0, InvalidParameterError, where,
                "spatial_step and time_step must be > 0")
        require(self.spatial_radius > 0 and self.horizon > 0, InvalidParameterError, where,
                "spatial_radius and horizon must be > 0")

    @classmethod
    def sized_for(cls, seed, starts, T, spec, spatial_step=0.25, time_step=None, sigmas=8.0):
        """Box covering every start point plus ``sigmas * sqrt(T) + r_phi``."""
        starts = np.atleast_2d(np.asarray(starts, dtype=float))
        dt = spatial_step ** 2 if time_step is None else time_step
        L = float(np.max(np.abs(starts))) + sigmas * math.sqrt(T) + spec.support_radius + spatial_step
        return cls(seed=int(seed), dimension=spec.dimension, spatial_step=spatial_step,
                   time_step=dt, spatial_radius=L, horizon=T)

    @property
    def key(self):
        return derive_key(self.seed, NOISE_TAG)

    @property
    def n_slots(self):
        return int(math.floor(self.horizon / self.time_step + 1e-9))

    @property
    def half_cells(self):
        return int(math.floor(self.spatial_radius / self.spatial_step + 1e-9))

    @property
    def increment_std(self):
        return math.sqrt(self.spatial_step ** self.dimension * self.time_step)

    def view(self):
        return NoiseView(self)


@dataclass(frozen=True)
class ForcedCells:
    """Test overlay: fixed base increments for chosen cells.

    ``default`` is the value of every unlisted cell, or ``None`` to fall back
    to the generated noise.
    """

    cells: dict = field(default_factory=dict)
    default: float = None

    @classmethod
    def from_json(cls, text_or_path):
        try:
            data = json.loads(text_or_path)
        except json.JSONDecodeError:
            with open(text_or_path) as fh:
                data = json.load(fh)
        unknown = set(data) - {"default", "cells"}
        require(not unknown, InvalidParameterError, "noise.ForcedCells", f"unknown keys {sorted(unknown)}")
        cells = {}
        for k, v in data.get("cells", {}).items():
            slot, _, pt = k.partition("/")
            cells[(int(slot),) + tuple(int(c) for c in pt.split(","))] = float(v)
        return cls(cells, data.get("default"))

    def to_json(self):
        return json.dumps({"default": self.default,
                           "cells": {f"{k[0]}/" + ",".join(str(c) for c in k[1:]): v
                                     for k, v in sorted(self.cells.items())}})

    def __add__(self, other):
        require(self.default is not None and other.default is not None, InvalidParameterError,
                "noise.ForcedCells", "only fully forced overlays can be added")
        keys = set(self.cells) | set(other.cells)
        return ForcedCells({k: self.cells.get(k, self.default) + other.cells.get(k, other.default)
                            for k in keys}, self.default + other.default)


@dataclass(frozen=True)
class NoiseView:
    """Affine relabelling of the cells of a :class:`NoiseBox`.

    View slot ``k`` is base slot ``slot_origin + slot_sign * k``; view lattice
    point ``i`` is base point ``cell_offset + i``. ``scale`` is the diffusive
    factor eps: view cells are eps^-1 wider and eps^-2 longer than base cells
    and carry the amplitude eps^-(d+2)/2, so the view is again a white noise.
    """

    box: NoiseBox
    slot_origin: int = 0
    slot_sign: int = 1
    cell_offset: tuple = None
    scale: float = 1.0
    forced: ForcedCells = None

    def __post_init__(self):
        if self.cell_offset is None:
            object.__setattr__(self, "cell_offset", (0,) * self.box.dimension)
        object.__setattr__(self, "cell_offset", tuple(int(c) for c in self.cell_offset))

    @property
    def dimension(self):
        return self.box.dimension

    @property
    def dx(self):
        return self.box.spatial_step / self.scale

    @property
    def dt(self):
        return self.box.time_step / self.scale ** 2

    @property
    def amplitude(self):
        return self.scale ** (-(self.dimension + 2) / 2)

    def _slots(self, tau, where):
        k = tau / self.dt
        require(abs(k - round(k)) < 1e-9 * max(1.0, abs(k)), InvalidParameterError, where,
                f"shift {tau} is not a multiple of the time step {self.dt}")
        return int(round(k))

    def shifted(self, tau):
        """The noise ``xi(., . + tau)``."""
        require(tau >= 0, InvalidParameterError, "noise.shifted", "time shift must be >= 0")
        k = self._slots(tau, "noise.shifted")
        return replace(self, slot_origin=self.slot_origin + self.slot_sign * k)

    @classmethod
    def rescaled(cls, box, eps, x0, t0):
        """``eps^{(d+2)/2} xi(eps y + x0, t0 - eps^2 s)``: diffusive rescaling with time reversal."""
        where = "noise.rescaled"
        require(eps > 0, InvalidParameterError, where, "eps must be > 0")
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), (box.dimension,))
        off = x0 / box.spatial_step
        require(np.allclose(off, np.round(off), atol=1e-9), InvalidParameterError, where,
                "x0 must lie on the lattice")
        j0 = t0 / box.time_step
        require(abs(j0 - round(j0)) < 1e-9 * max(1.0, j0), InvalidParameterError, where,
                "t0 must be a multiple of the time step")
        return cls(box, slot_origin=int(round(j0)) - 1, slot_sign=-1,
                   cell_offset=tuple(int(c) for c in np.round(off)), scale=float(eps))

    def with_forced(self, overlay):
        return replace(self, forced=overlay)

    def base_index(self, slot, point):
        """Map a view cell to base indices, raising if it leaves the box."""
        bslot = self.slot_origin + self.slot_sign * int(slot)
        bpt = tuple(int(o) + int(p) for o, p in zip(self.cell_offset, point))
        require(len(bpt) == self.dimension, InvalidParameterError, "noise.noise_increment",
                f"cell must have {self.dimension} coordinates")
        require(0 <= bslot < self.box.n_slots, OutOfDomainError, "noise.noise_increment",
                f"time slot {slot} maps to base slot {bslot} outside [0, {self.box.n_slots})")
        require(max(abs(c) for c in bpt) <= self.box.half_cells, OutOfDomainError,
                "noise.noise_increment", f"lattice point {tuple(point)} lies outside the box")
        return bslot, bpt

    def kernel_params(self):
        return dict(noise_key=np.uint64(self.box.key), n_slots=self.box.n_slots,
                    half=self.box.half_cells, inc_scale=self.amplitude * self.box.increment_std,
                    so=self.slot_origin, ss=self.slot_sign,
                    off=np.array(self.cell_offset, dtype=np.int64), dx=self.dx)


@nb.njit(cache=True)
def _cell_hash(key, slot, pt, off):
    h = absorb(key, slot)
    for a in range(pt.shape[0]):
        h = absorb(h, pt[a] + off[a])
    return h


@nb.njit(cache=True)
def _base_normals(key, slots, pts, out):
    zero = np.zeros(pts.shape[1], dtype=np.int64)
    for n in range(slots.shape[0]):
        out[n] = ppnd16(to_unit(_cell_hash(key, slots[n], pts[n], zero)))


def base_normals(box, slots, points):
    """Standard normals behind base cells (no bounds check)."""
    slots = np.ascontiguousarray(np.atleast_1d(slots), dtype=np.int64)
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.int64)
    out = np.empty(slots.shape[0])
    _base_normals(np.uint64(box.key), slots, points, out)
    return out


def noise_increment(view, cell):
    """Increment of one view cell ``(lattice point, time slot)``."""
    point, slot = cell
    bslot, bpt = view.base_index(slot, point)
    if view.forced is not None:
        key = (bslot,) + bpt
        if key in view.forced.cells:
            return view.amplitude * view.forced.cells[key]
        if view.forced.default is not None:
            return view.amplitude * view.forced.default
    return view.amplitude * view.box.increment_std * float(base_normals(view.box, [bslot], [bpt])[0])


# ---------------------------------------------------------------------------
# mollifier lookup shared by both evaluation routes

def phi_sq_table(spec):
    """phi sampled on a uniform grid in ``s = (r / r_phi)^2``."""
    spec.require_phi("noise.mollified_line_integral")
    s = np.linspace(0.0, 1.0, PHI_TABLE_SIZE + 1)
    return spec.phi_exact(spec.support_radius * np.sqrt(s))


@nb.njit(inline="always", cache=True)
def _phi_lookup(tab, u):
    x = u * (tab.shape[0] - 1)
    i = int(x)
    if i >= tab.shape[0] - 1:
        return 0.0
    w = x - i
    return tab[i] * (1.0 - w) + tab[i + 1] * w


def neighbor_offsets(d, dx, r_phi):
    """Lattice offsets that can fall within ``r_phi`` of a point rounded to the lattice."""
    reach = r_phi + 0.5 * math.sqrt(d) * dx
    m = int(math.ceil(reach / dx))
    axes = np.arange(-m, m + 1)
    grid = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    keep = np.sum(grid.astype(float) ** 2, axis=1) * dx * dx <= reach * reach
    return np.ascontiguousarray(grid[keep], dtype=np.int64)


def column_offsets(d, dx, r_phi):
    """Offsets in the first d-1 axes; the last axis is scanned as a column."""
    off = neighbor_offsets(d - 1, dx, r_phi) if d > 1 else np.zeros((1, 0), dtype=np.int64)
    return np.ascontiguousarray(np.hstack([off, np.zeros((off.shape[0], 1), dtype=np.int64)]))


# ---------------------------------------------------------------------------
# path kernel: Brownian paths generated on the fly, noise integrated along them

@nb.njit(cache=True)
def _fill_slab(key, bslot, lo, dims, off, slab):
    """Standard normals of a box of cells, last axis fastest (odometer order)."""
    d = lo.shape[0]
    idx = np.zeros(d, dtype=np.int64)
    prefix = np.empty(d + 1, dtype=np.uint64)
    prefix[0] = absorb(key, bslot)
    for a in range(d - 1):
        prefix[a + 1] = absorb(prefix[a], lo[a] + off[a])
    last = dims[d - 1]
    base_last = lo[d - 1] + off[d - 1]
    f = 0
    while f < slab.shape[0]:
        h = prefix[d - 1]
        for c in range(last):
            slab[f + c] = ppnd16(to_unit(absorb(h, base_last + c)))
        f += last
        # advance the odometer over the leading axes
        a = d - 2
        while a >= 0:
            idx[a] += 1
            if idx[a] < dims[a]:
                break
            idx[a] = 0
            a -= 1
        if a < 0:
            break
        for b in range(a, d - 1):
            prefix[b + 1] = absorb(prefix[b], lo[b] + idx[b] + off[b])


@nb.njit(cache=True, parallel=True)
def path_kernel(noise_key, n_slots, half, inc_scale, so, ss, off, dx, dt,
                path_key, p0, starts, n_steps, rec_steps, restrict_steps, rho2,
                phi_tab, r_phi2, nbr, out_I, out_ok):
    """Integrate the mollified noise along ``starts.shape[0]`` Brownian paths.

    Path ``p`` uses increments ``sqrt(dt) * normal3(path_key, p0 + p, k, axis)``.
    ``out_I[:, r]`` receives the line integral up to step ``rec_steps[r]``.
    ``out_ok[p]`` is cleared when the path leaves the ball of radius
    ``sqrt(rho2)`` around its start during the first ``restrict_steps`` steps.
    Returns ``(status, step)``.
    """
    n, d = starts.shape
    n_nbr = nbr.shape[0]
    reach = int(math.ceil(math.sqrt(r_phi2) / dx)) + 1
    pos = starts.copy()
    acc = np.zeros(n)
    base = np.empty((n, d), dtype=np.int64)
    lo = np.empty(d, dtype=np.int64)
    hi = np.empty(d, dtype=np.int64)
    dims = np.empty(d, dtype=np.int64)
    stride = np.empty(d, dtype=np.int64)
    sqdt = math.sqrt(dt)
    inv_r2 = 1.0 / r_phi2
    for p in range(n):
        out_ok[p] = True
    ri = 0
    while ri < rec_steps.shape[0] and rec_steps[ri] == 0:
        for p in range(n):
            out_I[p, ri] = 0.0
        ri += 1
    for k in range(n_steps):
        bslot = so + ss * k
        if bslot < 0 or bslot >= n_slots:
            return _TIME_OUT, k
        for a in range(d):
            lo[a] = 1 << 62
            hi[a] = -(1 << 62)
        for p in range(n):
            for a in range(d):
                b = int(math.floor(pos[p, a] / dx + 0.5))
                base[p, a] = b
                lo[a] = min(lo[a], b)
                hi[a] = max(hi[a], b)
        cells = 1
        for a in range(d):
            lo[a] -= reach
            hi[a] += reach
            if lo[a] + off[a] < -half or hi[a] + off[a] > half:
                return _ESCAPE, k
            dims[a] = hi[a] - lo[a] + 1
            cells *= dims[a]
        if cells <= MAX_SLAB_CELLS and cells < n * n_nbr * (2 * reach + 1) // 2:
            slab = np.empty(cells)
            _fill_slab(noise_key, bslot, lo, dims, off, slab)
            s_ = 1
            for a in range(d - 1, -1, -1):
                stride[a] = s_
                s_ *= dims[a]
            for p in nb.prange(n):
                tot = 0.0
                for o in range(n_nbr):
                    r2 = 0.0
                    flat = 0
                    for a in range(d - 1):
                        c = base[p, a] + nbr[o, a]
                        y = pos[p, a] - c * dx
                        r2 += y * y
                        flat += (c - lo[a]) * stride[a]
                    if r2 >= r_phi2:
                        continue
                    z = pos[p, d - 1]
                    w = math.sqrt(r_phi2 - r2)
                    for c in range(int(math.ceil((z - w) / dx)), int(math.floor((z + w) / dx)) + 1):
                        y = z - c * dx
                        q = r2 + y * y
                        if q < r_phi2:
                            tot += _phi_lookup(phi_tab, q * inv_r2) * slab[flat + c - lo[d - 1]]
                acc[p] += tot * inc_scale
        else:
            for p in nb.prange(n):
                tot = 0.0
                for o in range(n_nbr):
                    r2 = 0.0
                    h0 = absorb(noise_key, bslot)
                    for a in range(d - 1):
                        c = base[p, a] + nbr[o, a]
                        y = pos[p, a] - c * dx
                        r2 += y * y
                        h0 = absorb(h0, c + off[a])
                    if r2 >= r_phi2:
                        continue
                    z = pos[p, d - 1]
                    w = math.sqrt(r_phi2 - r2)
                    for c in range(int(math.ceil((z - w) / dx)), int(math.floor((z + w) / dx)) + 1):
                        y = z - c * dx
                        q = r2 + y * y
                        if q < r_phi2:
                            h = absorb(h0, c + off[d - 1])
                            tot += _phi_lookup(phi_tab, q * inv_r2) * ppnd16(to_unit(h))
                acc[p] += tot * inc_scale
        for p in nb.prange(n):
            disp = 0.0
            for a in range(d):
                pos[p, a] += sqdt * normal3(path_key, p0 + p, k, a)
                y = pos[p, a] - starts[p, a]
                disp += y * y
            if k < restrict_steps and disp > rho2:
                out_ok[p] = False
        while ri < rec_steps.shape[0] and rec_steps[ri] == k + 1:
            for p in range(n):
                out_I[p, ri] = acc[p]
            ri += 1
    return _OK, n_steps


def steps_for(T, dt, where):
    k = T / dt
    require(abs(k - round(k)) < 1e-9 * max(1.0, k), InvalidParameterError, where,
            f"time {T} is not a multiple of the time step {dt}")
    return int(round(k))


def line_integrals(view, spec, starts, T_list, path_key, p0=0, n_steps=None,
                   restrict_time=0.0, rho=math.inf):
    """Line integrals of the mollified view noise along kernel-generated paths.

    Returns ``(I, ok)`` with ``I[p, r]`` the integral over ``[0, T_list[r]]``.
    Forced overlays are not supported here; use :func:`mollified_line_integral`.
    """
    where = "noise.mollified_line_integral"
    require(view.forced is None, UnsupportedModeError, where,
            "forced overlays need explicit paths (numpy route)")
    starts = np.ascontiguousarray(np.atleast_2d(starts), dtype=float)
    rec = np.array([steps_for(t, view.dt, where) for t in T_list], dtype=np.int64)
    order = np.argsort(rec, kind="stable")
    if n_steps is None:
        n_steps = int(rec.max()) if rec.size else 0
    r_steps = steps_for(restrict_time, view.dt, where) if restrict_time > 0 else 0
    out = np.empty((starts.shape[0], rec.size))
    ok = np.empty(starts.shape[0], dtype=np.bool_)
    kp = view.kernel_params()
    status, k = path_kernel(kp["noise_key"], kp["n_slots"], kp["half"], kp["inc_scale"], kp["so"],
                            kp["ss"], kp["off"], kp["dx"], view.dt, np.uint64(path_key), int(p0),
                            starts, int(n_steps), rec[order], int(r_steps),
                            float(rho) ** 2 if np.isfinite(rho) else np.inf,
                            phi_sq_table(spec), spec.support_radius ** 2,
                            column_offsets(view.dimension, view.dx, spec.support_radius), out, ok)
    if status == _ESCAPE:
        raise PathEscapeError(where, f"a path left the noise box (radius {view.box.spatial_radius}) "
                                     f"minus the mollifier margin at step {k}; enlarge the box")
    if status == _TIME_OUT:
        raise OutOfDomainError(where, f"time slot {k} maps outside the box horizon {view.box.horizon}")
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return out[:, inv], ok


# ---------------------------------------------------------------------------
# reference route on explicit trajectories (supports forced overlays)

def _touched(view, spec, pos, k):
    """View lattice points within r_phi of ``pos`` and their phi weights."""
    nbr = neighbor_offsets(view.dimension, view.dx, spec.support_radius)
    base = np.floor(pos / view.dx + 0.5).astype(np.int64)
    cells = base + nbr
    r2 = np.sum((pos - cells * view.dx) ** 2, axis=1)
    keep = r2 < spec.support_radius ** 2
    return cells[keep], r2[keep]


def touched_cells(view, spec, trajectory, n_steps=None):
    """Set of base ``(slot, i_1, ..., i_d)`` indices read along one trajectory."""
    traj = np.asarray(trajectory, dtype=float)
    K = traj.shape[0] - 1 if n_steps is None else n_steps
    out = set()
    for k in range(K):
        cells, _ = _touched(view, spec, traj[k], k)
        bslot = view.slot_origin + view.slot_sign * k
        for c in cells:
            out.add((bslot,) + tuple(int(o) + int(x) for o, x in zip(view.cell_offset, c)))
    return out


def encode_cells(cells):
    """Pack base ``(slot, i_1, ..., i_d)`` rows into int64 keys (slot < 2^20, |i| < 2^13)."""
    cells = np.asarray(cells, dtype=np.int64)
    d = cells.shape[1] - 1
    bits = (63 - 20) // d
    require(np.all((cells[:, 0] >= 0) & (cells[:, 0] < 1 << 20)) and np.all(np.abs(cells[:, 1:]) < 1 << (bits - 1)),
            OutOfDomainError, "noise.encode_cells", "cell index out of the packable range")
    key = cells[:, 0].copy()
    for a in range(d):
        key = (key << bits) | (cells[:, 1 + a] + (1 << (bits - 1)))
    return key


def touched_cell_keys(view, spec, trajectories, n_steps=None):
    """Sorted unique packed keys of every base cell read by a bundle of trajectories."""
    traj = np.asarray(trajectories, dtype=float)
    if traj.ndim == 2:
        traj = traj[None]
    K = traj.shape[1] - 1 if n_steps is None else n_steps
    nbr = neighbor_offsets(view.dimension, view.dx, spec.support_radius)
    off = np.array(view.cell_offset, dtype=np.int64)
    r_phi2 = spec.support_radius ** 2
    keys = []
    for k in range(K):
        pos = traj[:, k, :]
        base = np.floor(pos / view.dx + 0.5).astype(np.int64)
        cells = base[:, None, :] + nbr[None, :, :]
        r2 = np.sum((pos[:, None, :] - cells * view.dx) ** 2, axis=2)
        cells = cells[r2 < r_phi2] + off
        bslot = view.slot_origin + view.slot_sign * k
        rows = np.concatenate([np.full((len(cells), 1), bslot, dtype=np.int64), cells], axis=1)
        keys.append(np.unique(encode_cells(rows)))
    return np.unique(np.concatenate(keys)) if keys else np.zeros(0, np.int64)


def mollified_line_integral(view, spec, trajectory, dt=None):
    """sum_k sum_c phi(B(t_k) - y_c) eta_{c,k} along one trajectory (left endpoints)."""
    where = "noise.mollified_line_integral"
    traj = np.asarray(trajectory, dtype=float)
    require(traj.ndim == 2 and traj.shape[1] == view.dimension, InvalidParameterError, where,
            "trajectory must have shape (steps + 1, d)")
    if dt is not None:
        require(abs(dt - view.dt) < 1e-12 * view.dt, InvalidParameterError, where,
                "path time grid must match the noise time step")
    tab = phi_sq_table(spec)
    r_phi2 = spec.support_radius ** 2
    box = view.box
    off = np.array(view.cell_offset, dtype=np.int64)
    total = 0.0
    for k in range(traj.shape[0] - 1):
        cells, r2 = _touched(view, spec, traj[k], k)
        bslot = view.slot_origin + view.slot_sign * k
        bcells = cells + off
        if not 0 <= bslot < box.n_slots:
            raise OutOfDomainError(where, f"time slot {k} maps outside the box horizon {box.horizon}")
        if cells.size and np.max(np.abs(bcells)) > box.half_cells:
            raise PathEscapeError(where, f"trajectory left the safe region at step {k}")
        eta = box.increment_std * base_normals(box, np.full(len(cells), bslot), bcells)
        if view.forced is not None:
            for n, c in enumerate(bcells):
                key = (bslot,) + tuple(int(v) for v in c)
                if key in view.forced.cells:
                    eta[n] = view.forced.cells[key]
                elif view.forced.default is not None:
                    eta[n] = view.forced.default
        u = r2 / r_phi2 * (tab.size - 1)
        i = u.astype(np.int64)
        w = u - i
        phi = tab[i] * (1 - w) + tab[np.minimum(i + 1, tab.size - 1)] * w
        total += float(np.sum(phi * eta)) * view.amplitude
    return total


def discrete_R(spec, dx, z1, z2):
    """sum_c dx^d phi(z1 - y_c) phi(z2 - y_c): noise covariance per unit time."""
    d = spec.dimension
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    m = int(math.ceil((spec.support_radius + np.max(np.abs(z1 - z2))) / dx)) + 2
    center = np.floor(0.5 * (z1 + z2) / dx + 0.5)
    axes = [np.arange(-m, m + 1) + center[a] for a in range(d)]
    y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d) * dx
    p1 = spec.phi_exact(np.linalg.norm(z1 - y, axis=1))
    p2 = spec.phi_exact(np.linalg.norm(z2 - y, axis=1))
    return dx ** d * float(np.sum(p1 * p2))
