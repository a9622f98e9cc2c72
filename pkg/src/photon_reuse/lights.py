"""Light sources, emission warps and per-light distribution maps.

Each light maps an emission (surface point, direction) to a point of the
canonical box [0,1)^4: two surface axes followed by two direction axes. The
direction axes are chosen so the light's own emission density is uniform in
the box (sin^2 theta for cosine emitters, the normalised cos-range for point
and spot lights, azimuth / 2pi). A distribution map is a regular grid over
that box, so the target map is flat in expectation and a sample drawn
uniformly inside one cell is exactly the emission pdf restricted to the cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from ._jit import kernel, prange
from .geometry import interpolate_transform, quat_to_matrix

POINT, SPOT, DISC, RECT = 0, 1, 2, 3
KINDS = {"point": POINT, "spot": SPOT, "disc_area": DISC, "rect_area": RECT}

MAX_CELLS = 1 << 22
TWO_PI = 2.0 * math.pi


class LightError(ValueError):
    pass


def sample_keyframes(keyframes, frame):
    """Transform at ``frame`` from a sorted (frame, RigidTransform) list."""
    if frame <= keyframes[0][0]:
        return keyframes[0][1]
    for (f0, x0), (f1, x1) in zip(keyframes, keyframes[1:]):
        if frame <= f1:
            return interpolate_transform(x0, x1, (frame - f0) / (f1 - f0))
    return keyframes[-1][1]


@dataclass
class Light:
    kind: str
    flux: np.ndarray
    keyframes: list
    cone_angle: float = 0.0        # full apex angle in degrees (spot)
    radius: float = 0.0            # disc
    half_extents: tuple = (0.0, 0.0)  # rect

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LightError(f"unknown light kind {self.kind!r}")
        self.flux = np.asarray(self.flux, dtype=np.float64).reshape(3)
        if np.any(self.flux < 0):
            raise LightError("light flux must be non-negative")
        if not self.keyframes:
            raise LightError("light needs at least one keyframe")
        self.keyframes = sorted(self.keyframes, key=lambda kv: kv[0])
        if self.kind == "spot" and not 0.0 < self.cone_angle < 180.0:
            raise LightError("spot cone angle must lie in (0, 180) degrees")
        if self.kind == "disc_area" and not self.radius > 0:
            raise LightError("disc light radius must be positive")
        if self.kind == "rect_area" and not min(self.half_extents) > 0:
            raise LightError("rect light half extents must be positive")

    @property
    def code(self):
        return KINDS[self.kind]

    @property
    def is_area(self):
        return self.code in (DISC, RECT)

    @property
    def area(self):
        if self.code == DISC:
            return math.pi * self.radius ** 2
        if self.code == RECT:
            return 4.0 * self.half_extents[0] * self.half_extents[1]
        return 0.0

    @property
    def moving(self):
        first = self.keyframes[0][1]
        return any(x != first for _, x in self.keyframes[1:])

    def transform_at(self, frame):
        return sample_keyframes(self.keyframes, frame)

    def pose_at(self, frame):
        xf = self.transform_at(frame)
        m = quat_to_matrix(xf.rotation)
        pose = np.zeros(16)
        pose[0] = self.code
        pose[1:4] = xf.translation
        pose[4:7] = m[:, 0]
        pose[7:10] = m[:, 1]
        pose[10:13] = m[:, 2]
        if self.code == DISC:
            pose[13] = self.radius
        elif self.code == RECT:
            pose[13], pose[14] = self.half_extents
        elif self.code == SPOT:
            pose[15] = math.cos(math.radians(self.cone_angle / 2.0))
        return pose


def normalize_dims(dims, light_code):
    """Four axis counts; point/spot lights accept (theta, phi) or (1, 1, theta, phi)."""
    dims = tuple(int(d) for d in dims)
    if any(d <= 0 for d in dims):
        raise LightError(f"distribution map dims must be positive, got {dims}")
    if light_code in (POINT, SPOT):
        if len(dims) == 2:
            dims = (1, 1) + dims
        if len(dims) != 4 or dims[0] != 1 or dims[1] != 1:
            raise LightError("point/spot lights use 2-D maps (or 4-D with unit surface axes)")
    elif len(dims) != 4:
        raise LightError("area lights use 4-D distribution maps")
    if math.prod(dims) > MAX_CELLS:
        raise LightError(f"distribution map exceeds {MAX_CELLS} cells")
    return np.array(dims, dtype=np.int64)


# ---------------------------------------------------------------------------
# kernels: canonical coordinates <-> (origin, direction)

@kernel
def _azimuth(x, y):
    a = math.atan2(y, x) / TWO_PI
    if a < 0.0:
        a += 1.0
    if a >= 1.0:
        a = 0.0
    return a


@kernel
def light_coords(pose, ox, oy, oz, dx, dy, dz):
    """Canonical coordinates of an emission; first value False when invalid."""
    kind = int(pose[0])
    rx, ry, rz = ox - pose[1], oy - pose[2], oz - pose[3]
    lx = rx * pose[4] + ry * pose[5] + rz * pose[6]
    ly = rx * pose[7] + ry * pose[8] + rz * pose[9]
    lz = rx * pose[10] + ry * pose[11] + rz * pose[12]
    ux = dx * pose[4] + dy * pose[5] + dz * pose[6]
    uy = dx * pose[7] + dy * pose[8] + dz * pose[9]
    uz = dx * pose[10] + dy * pose[11] + dz * pose[12]
    c0 = 0.0
    c1 = 0.0
    c2 = 0.0
    if kind == POINT or kind == SPOT:
        if lx * lx + ly * ly + lz * lz > 1e-12:
            return False, 0.0, 0.0, 0.0, 0.0
        if kind == POINT:
            c2 = 0.5 * (1.0 - uz)
        else:
            cmax = pose[15]
            if uz <= cmax:
                return False, 0.0, 0.0, 0.0, 0.0
            c2 = (1.0 - uz) / (1.0 - cmax)
    else:
        size = pose[13] if pose[13] > pose[14] else pose[14]
        if abs(lz) > 1e-6 * (size if size > 1.0 else 1.0):
            return False, 0.0, 0.0, 0.0, 0.0
        if kind == DISC:
            c0 = (lx * lx + ly * ly) / (pose[13] * pose[13])
            c1 = _azimuth(lx, ly)
        else:
            c0 = 0.5 * (lx / pose[13] + 1.0)
            c1 = 0.5 * (ly / pose[14] + 1.0)
            if c1 < 0.0:
                return False, 0.0, 0.0, 0.0, 0.0
        if c0 < 0.0 or c0 >= 1.0 or c1 >= 1.0:
            return False, 0.0, 0.0, 0.0, 0.0
        if uz <= 0.0:
            return False, 0.0, 0.0, 0.0, 0.0
        c2 = 1.0 - uz * uz
    if c2 < 0.0:
        c2 = 0.0
    if c2 >= 1.0:
        return False, 0.0, 0.0, 0.0, 0.0
    return True, c0, c1, c2, _azimuth(ux, uy)


@kernel
def coords_cell(dims, c0, c1, c2, c3):
    i0 = min(int(c0 * dims[0]), dims[0] - 1)
    i1 = min(int(c1 * dims[1]), dims[1] - 1)
    i2 = min(int(c2 * dims[2]), dims[2] - 1)
    i3 = min(int(c3 * dims[3]), dims[3] - 1)
    return ((i0 * dims[1] + i1) * dims[2] + i2) * dims[3] + i3


@kernel
def parametrise_one(pose, dims, ox, oy, oz, dx, dy, dz):
    ok, c0, c1, c2, c3 = light_coords(pose, ox, oy, oz, dx, dy, dz)
    if not ok:
        return -1
    return coords_cell(dims, c0, c1, c2, c3)


@kernel
def warp_coords(pose, c0, c1, c2, c3):
    """(origin, direction, unrestricted pdf) for canonical coordinates."""
    kind = int(pose[0])
    lx = 0.0
    ly = 0.0
    pdf = 0.0
    if kind == POINT:
        cos_t = 1.0 - 2.0 * c2
        pdf = 1.0 / (4.0 * math.pi)
    elif kind == SPOT:
        cmax = pose[15]
        cos_t = 1.0 - c2 * (1.0 - cmax)
        pdf = 1.0 / (TWO_PI * (1.0 - cmax))
    else:
        if kind == DISC:
            r = pose[13] * math.sqrt(c0)
            phi = TWO_PI * c1
            lx = r * math.cos(phi)
            ly = r * math.sin(phi)
            area = math.pi * pose[13] * pose[13]
        else:
            lx = (2.0 * c0 - 1.0) * pose[13]
            ly = (2.0 * c1 - 1.0) * pose[14]
            area = 4.0 * pose[13] * pose[14]
        cos_t = math.sqrt(1.0 - c2)
        pdf = cos_t / (math.pi * area)
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    phi_d = TWO_PI * c3
    ux = sin_t * math.cos(phi_d)
    uy = sin_t * math.sin(phi_d)
    uz = cos_t
    ox = pose[1] + lx * pose[4] + ly * pose[7]
    oy = pose[2] + lx * pose[5] + ly * pose[8]
    oz = pose[3] + lx * pose[6] + ly * pose[9]
    dx = ux * pose[4] + uy * pose[7] + uz * pose[10]
    dy = ux * pose[5] + uy * pose[8] + uz * pose[11]
    dz = ux * pose[6] + uy * pose[9] + uz * pose[12]
    inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
    return ox, oy, oz, dx * inv, dy * inv, dz * inv, pdf


@kernel
def sample_cell_one(pose, dims, cell, seed, stream, epoch, counter, purpose):
    i3 = cell % dims[3]
    rest = cell // dims[3]
    i2 = rest % dims[2]
    rest = rest // dims[2]
    i1 = rest % dims[1]
    i0 = rest // dims[1]
    c0 = (i0 + _rng.uniform(seed, stream, epoch, counter, purpose, 0)) / dims[0]
    c1 = (i1 + _rng.uniform(seed, stream, epoch, counter, purpose, 1)) / dims[1]
    c2 = (i2 + _rng.uniform(seed, stream, epoch, counter, purpose, 2)) / dims[2]
    c3 = (i3 + _rng.uniform(seed, stream, epoch, counter, purpose, 3)) / dims[3]
    return warp_coords(pose, c0, c1, c2, c3)


@kernel(parallel=True)
def parametrise_batch(pose, dims, origins, dirs, active, cells):
    for i in prange(origins.shape[0]):
        if active[i]:
            cells[i] = parametrise_one(pose, dims, origins[i, 0], origins[i, 1], origins[i, 2],
                                       dirs[i, 0], dirs[i, 1], dirs[i, 2])
        else:
            cells[i] = -1


@kernel(parallel=True)
def sample_cells(pose, dims, cells, seed, streams, epochs, counter, purpose, origins, dirs, pdfs):
    for i in prange(cells.shape[0]):
        ox, oy, oz, dx, dy, dz, pdf = sample_cell_one(pose, dims, cells[i], seed, streams[i],
                                                      epochs[i], counter, purpose)
        origins[i, 0] = ox
        origins[i, 1] = oy
        origins[i, 2] = oz
        dirs[i, 0] = dx
        dirs[i, 1] = dy
        dirs[i, 2] = dz
        pdfs[i] = pdf


# ---------------------------------------------------------------------------
# Python surface

@dataclass(frozen=True)
class EmissionSample:
    origin: np.ndarray
    dir: np.ndarray
    pdf: float


@dataclass(frozen=True)
class CellDomain:
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, coords):
        c = np.asarray(coords)
        return bool(np.all(c >= self.lo) and np.all(c < self.hi))


@dataclass
class DistributionMap:
    dims: tuple
    counts: np.ndarray

    @classmethod
    def zeros(cls, dims):
        dims = tuple(int(d) for d in dims)
        if any(d <= 0 for d in dims):
            raise LightError(f"distribution map dims must be positive, got {dims}")
        n = math.prod(dims)
        if n > MAX_CELLS:
            raise LightError(f"distribution map exceeds {MAX_CELLS} cells")
        return cls(dims, np.zeros(n, dtype=np.int64))

    @property
    def n_cells(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    def copy(self):
        return DistributionMap(self.dims, self.counts.copy())

    def grid(self):
        return self.counts.reshape(self.dims)


def _pose_array(pose):
    """Accept a packed pose or a Light (posed at frame 0)."""
    if isinstance(pose, Light):
        return pose.pose_at(0)
    return np.ascontiguousarray(pose, dtype=np.float64)


def _dims4(dims):
    dims = tuple(int(d) for d in dims)
    return np.array((1,) * (4 - len(dims)) + dims, dtype=np.int64)


def parametrise(pose, dims, origin, direction):
    """Linear cell index of an emission, or None when it lies outside the light's domain."""
    cell = parametrise_one(_pose_array(pose), _dims4(dims), origin[0], origin[1],
                           origin[2], direction[0], direction[1], direction[2])
    return None if cell < 0 else int(cell)


def canonical_coords(pose, origin, direction):
    ok, c0, c1, c2, c3 = light_coords(_pose_array(pose), origin[0], origin[1], origin[2],
                                      direction[0], direction[1], direction[2])
    return np.array([c0, c1, c2, c3]) if ok else None


def cell_domain(dims, cell):
    dims = np.asarray(dims, dtype=np.int64)
    n = int(np.prod(dims))
    if not 0 <= cell < n:
        raise LightError(f"cell {cell} out of range for {n} cells")
    idx = np.array(np.unravel_index(int(cell), tuple(dims)))
    return CellDomain(idx / dims, (idx + 1) / dims)


def sample_in_cell(pose, dims, cell, rng, stream=0):
    """One emission sample uniform in ``cell``'s canonical box.

    ``pdf`` is the unrestricted emission density at the sample; paths carry
    flux / N_target regardless of which cell they were drawn in.
    """
    dims = _dims4(dims)
    cell_domain(dims, cell)
    ox, oy, oz, dx, dy, dz, pdf = sample_cell_one(_pose_array(pose), dims, int(cell), rng.seed,
                                                  stream, rng.epoch, rng.counter, rng.purpose)
    return EmissionSample(np.array([ox, oy, oz]), np.array([dx, dy, dz]), float(pdf))


def sample_emission_batch(pose, dims, cells, seed, streams, epochs, counter=0, purpose=_rng.EMIT):
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    n = cells.shape[0]
    origins = np.empty((n, 3))
    dirs = np.empty((n, 3))
    pdfs = np.empty(n)
    sample_cells(_pose_array(pose), _dims4(dims), cells, int(seed),
                 np.ascontiguousarray(streams, dtype=np.int64),
                 np.ascontiguousarray(epochs, dtype=np.int64), int(counter), int(purpose),
                 origins, dirs, pdfs)
    return origins, dirs, pdfs


def parametrise_many(pose, dims, origins, dirs, active=None):
    n = origins.shape[0]
    cells = np.empty(n, dtype=np.int64)
    if active is None:
        active = np.ones(n, dtype=np.bool_)
    parametrise_batch(_pose_array(pose), _dims4(dims), np.ascontiguousarray(origins),
                      np.ascontiguousarray(dirs), np.ascontiguousarray(active), cells)
    return cells


def init_dm_target(pose, dims, n_paths, seed, light_index=0):
    """Target map from binning ``n_paths`` unrestricted emission samples."""
    if n_paths <= 0:
        raise LightError("n_paths must be positive")
    dm = DistributionMap.zeros(dims)
    full = np.array([1, 1, 1, 1], dtype=np.int64)
    streams = np.arange(n_paths, dtype=np.int64)
    epochs = np.zeros(n_paths, dtype=np.int64)
    origins, dirs, _ = sample_emission_batch(pose, full, np.zeros(n_paths, dtype=np.int64), seed,
                                             streams, epochs, light_index, _rng.DM_TARGET)
    cells = parametrise_many(pose, dm.dims, origins, dirs)
    bad = np.flatnonzero(cells < 0)
    for i in bad:  # rim samples that rounding pushed outside the domain
        c = np.array([_rng.uniform(seed, int(i), 0, light_index, _rng.DM_TARGET, d) for d in range(4)])
        cells[i] = coords_cell(_dims4(dm.dims), c[0], c[1], c[2], c[3])
    dm.counts[:] = np.bincount(cells, minlength=dm.n_cells)
    return dm


def compute_dm_current(pose, dims, origins, dirs, active):
    """Current map over active paths; returns (map, per-path cell or -1)."""
    dm = DistributionMap.zeros(dims)
    cells = parametrise_many(pose, dims, origins, dirs, active)
    valid = cells >= 0
    dm.counts[:] = np.bincount(cells[valid], minlength=dm.n_cells)
    return dm, cells


def prune_probability(dm_c, dm_t):
    if dm_c <= 0 or dm_c <= dm_t:
        return 0.0
    return (dm_c - dm_t) / dm_c


@kernel
def _mark_pruned(cells, frozen_c, dm_t, u, marks):
    for i in range(cells.shape[0]):
        c = cells[i]
        marks[i] = False
        if c < 0:
            continue
        n = frozen_c[c]
        t = dm_t[c]
        if n > t and u[i] < (n - t) / n:
            marks[i] = True


def prune_paths(cells, dm_c, dm_t, u):
    """Two-pass pruning; returns the positions (into ``cells``) of pruned paths.

    Pass one marks against the frozen pre-prune counts, pass two decrements
    ``dm_c`` in place.
    """
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    marks = np.zeros(cells.shape[0], dtype=np.bool_)
    _mark_pruned(cells, dm_c.counts.copy(), dm_t.counts, np.ascontiguousarray(u, dtype=np.float64),
                 marks)
    pruned = np.flatnonzero(marks)
    np.subtract.at(dm_c.counts, cells[pruned], 1)
    return pruned


def fill_targets(dm_c, dm_t):
    """Cell of every path to emit so underfull cells reach the target; updates ``dm_c``."""
    deficit = np.maximum(dm_t.counts - dm_c.counts, 0)
    cells = np.repeat(np.arange(dm_c.n_cells, dtype=np.int64), deficit)
    dm_c.counts += deficit
    return cells


def fill_dm(dm_c, dm_t, pose, seed, streams=None, epochs=None):
    """New emission samples for every deficit; returns (cells, origins, dirs)."""
    cells = fill_targets(dm_c, dm_t)
    n = cells.shape[0]
    streams = np.arange(n, dtype=np.int64) if streams is None else streams
    epochs = np.ones(n, dtype=np.int64) if epochs is None else epochs
    origins, dirs, _ = sample_emission_batch(pose, dm_c.dims, cells, seed, streams, epochs)
    return cells, origins, dirs
