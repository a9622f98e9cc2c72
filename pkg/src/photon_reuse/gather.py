"""Fixed-radius photon density estimate at camera hits, and a PPM writer."""

from __future__ import annotations

import math

import numpy as np

from ._jit import kernel, prange
from .geometry import INF, scene_nearest

_BIAS = 1 << 20
_BITS = 21


@kernel
def _pack(ix, iy, iz):
    return ((ix + _BIAS) << (2 * _BITS)) | ((iy + _BIAS) << _BITS) | (iz + _BIAS)


@kernel
def _cell_of(x, inv):
    return np.int64(math.floor(x * inv))


@kernel(parallel=True)
def _keys(points, inv, out):
    for i in prange(points.shape[0]):
        out[i] = _pack(_cell_of(points[i, 0], inv), _cell_of(points[i, 1], inv),
                       _cell_of(points[i, 2], inv))


class GatherGrid:
    """Uniform hash over photon positions with cell size equal to the gather radius.

    Keys pack three 21-bit cell coordinates, so lookups are exact within
    +-2^20 cells of the origin; photons are sorted by key and each cell is
    a contiguous run.
    """

    def __init__(self, positions, radius):
        if not radius > 0:
            raise ValueError("gather radius must be positive")
        self.radius = float(radius)
        self.inv = 1.0 / self.radius
        self.positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
        keys = np.empty(self.positions.shape[0], dtype=np.int64)
        _keys(self.positions, self.inv, keys)
        self.order = np.argsort(keys, kind="stable").astype(np.int64)
        self.keys = keys[self.order]

    def query(self, point, r=None):
        """Indices of every photon within distance ``r`` (<= cell size) of ``point``."""
        r = self.radius if r is None else float(r)
        if r > self.radius:
            raise ValueError("query radius exceeds the grid cell size")
        out = np.empty(self.positions.shape[0], dtype=np.int64)
        n = _query(self.keys, self.order, self.positions, self.inv, point[0], point[1], point[2],
                   r, out)
        return np.sort(out[:n])


@kernel
def _query(keys, order, positions, inv, x, y, z, r, out):
    cx, cy, cz = _cell_of(x, inv), _cell_of(y, inv), _cell_of(z, inv)
    n = 0
    r2 = r * r
    for i in range(-1, 2):
        for j in range(-1, 2):
            for k in range(-1, 2):
                key = _pack(cx + i, cy + j, cz + k)
                lo = np.searchsorted(keys, key)
                while lo < keys.shape[0] and keys[lo] == key:
                    q = order[lo]
                    dx = positions[q, 0] - x
                    dy = positions[q, 1] - y
                    dz = positions[q, 2] - z
                    if dx * dx + dy * dy + dz * dz <= r2:
                        out[n] = q
                        n += 1
                    lo += 1
    return n


@kernel(parallel=True)
def _gather_pixels(S, ray_o, ray_d, keys, order, positions, energy, pobj, inv, r, out):
    norm = 1.0 / (math.pi * math.pi * r * r)
    r2 = r * r
    for px in prange(ray_d.shape[0]):
        t, obj, _, _, _ = scene_nearest(S, ray_o[0], ray_o[1], ray_o[2], ray_d[px, 0],
                                        ray_d[px, 1], ray_d[px, 2], 0.0, INF)
        out[px, 0] = 0.0
        out[px, 1] = 0.0
        out[px, 2] = 0.0
        if obj < 0:
            continue
        x = ray_o[0] + t * ray_d[px, 0]
        y = ray_o[1] + t * ray_d[px, 1]
        z = ray_o[2] + t * ray_d[px, 2]
        cx, cy, cz = _cell_of(x, inv), _cell_of(y, inv), _cell_of(z, inv)
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        # fixed neighbour order keeps the float sum identical across schedules
        for i in range(-1, 2):
            for j in range(-1, 2):
                for k in range(-1, 2):
                    key = _pack(cx + i, cy + j, cz + k)
                    lo = np.searchsorted(keys, key)
                    while lo < keys.shape[0] and keys[lo] == key:
                        q = order[lo]
                        lo += 1
                        if pobj[q] != obj:
                            continue
                        dx = positions[q, 0] - x
                        dy = positions[q, 1] - y
                        dz = positions[q, 2] - z
                        if dx * dx + dy * dy + dz * dz <= r2:
                            s0 += energy[q, 0]
                            s1 += energy[q, 1]
                            s2 += energy[q, 2]
        out[px, 0] = s0 * S.obj_albedo[obj, 0] * norm
        out[px, 1] = s1 * S.obj_albedo[obj, 1] * norm
        out[px, 2] = s2 * S.obj_albedo[obj, 2] * norm


def camera_rays(camera):
    """Unit directions through pixel centres, row-major from the top-left."""
    w, h = camera.resolution
    fwd = camera.look_at - camera.position
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, camera.up)
    if np.linalg.norm(right) < 1e-12:
        right = np.cross(fwd, [1.0, 0.0, 0.0])
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)
    half_h = math.tan(math.radians(camera.fov) / 2.0)
    half_w = half_h * w / h
    xs = ((np.arange(w) + 0.5) / w * 2.0 - 1.0) * half_w
    ys = (1.0 - (np.arange(h) + 0.5) / h * 2.0) * half_h
    d = fwd[None, None] + xs[None, :, None] * right + ys[:, None, None] * up
    d /= np.linalg.norm(d, axis=2, keepdims=True)
    return d.reshape(-1, 3)


def gather_image(state, positions, energies, object_ids, camera, radius):
    """Radiance image (H, W, 3) float32 from photons given as flat arrays."""
    w, h = camera.resolution
    grid = GatherGrid(positions, radius)
    e = np.ascontiguousarray(energies, dtype=np.float64).reshape(-1, 3)
    pobj = np.ascontiguousarray(object_ids, dtype=np.int64).reshape(-1)
    out = np.zeros((w * h, 3))
    _gather_pixels(state.arrays, np.ascontiguousarray(camera.position, dtype=np.float64),
                   camera_rays(camera), grid.keys, grid.order, grid.positions, e, pobj,
                   grid.inv, float(radius), out)
    return out.reshape(h, w, 3).astype(np.float32)


def render_engine(engine, camera=None, radius=None):
    t = engine.table
    pos, _, energy, oid = t.live_photons()
    cam = engine.scene.camera if camera is None else camera
    return gather_image(engine.state, pos, energy, oid, cam, t.radius if radius is None else radius)


def tonemap(img, gamma=2.2):
    v = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) ** (1.0 / gamma)
    return np.round(v * 255.0).astype(np.uint8)


def encode_ppm(img):
    img = np.asarray(img)
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + tonemap(img).tobytes()


def write_image(img, path):
    data = encode_ppm(img)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc.strerror or exc}") from exc
