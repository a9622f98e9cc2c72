"""Rays, boxes, rigid transforms, a median-split BVH and the intersection kernels."""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from ._jit import kernel

INF = math.inf
# stands in for 1/0 in slab tests; keeps 0 * big == 0 instead of nan
_BIG = 1e30


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    dir: np.ndarray
    t_min: float = 0.0
    t_max: float = INF

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.dir, dtype=np.float64).reshape(3)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "dir", d)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise GeometryError("ray direction must be unit length")
        if not (self.t_min >= 0.0 and self.t_max > self.t_min):
            raise GeometryError("ray interval must satisfy 0 <= t_min < t_max")


@dataclass(frozen=True)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise GeometryError("Aabb requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_points(cls, pts):
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        return cls(pts.min(axis=0), pts.max(axis=0))

    def union(self, other):
        return Aabb(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def inflate(self, amount):
        return Aabb(self.lo - amount, self.hi + amount)

    def corners(self):
        idx = np.array([[i >> 2 & 1, i >> 1 & 1, i & 1] for i in range(8)])
        return np.where(idx == 0, self.lo, self.hi)

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def __eq__(self, other):
        return (isinstance(other, Aabb) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))


# ---------------------------------------------------------------------------
# quaternions (w, x, y, z) and rigid transforms

def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q)


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    s = math.sin(angle / 2.0)
    return np.array([math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return q if q[0] >= 0 else -q


def quat_looking(normal, tangent_hint=None):
    """Rotation taking local +z to ``normal`` (local +x toward ``tangent_hint``)."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    hint = np.array([1.0, 0.0, 0.0]) if tangent_hint is None else np.asarray(tangent_hint, float)
    if abs(np.dot(hint, n)) > 0.99:
        hint = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([0.0, 0.0, 1.0])
    t = hint - np.dot(hint, n) * n
    t /= np.linalg.norm(t)
    b = np.cross(n, t)
    return quat_from_matrix(np.column_stack([t, b, n]))


def quat_slerp(a, b, t):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = float(np.dot(a, b))
    if d < 0.0:
        b = -b
        d = -d
    if d > 0.9995:
        return quat_normalize(a + t * (b - a))
    theta = math.acos(min(d, 1.0))
    s = math.sin(theta)
    return (math.sin((1 - t) * theta) / s) * a + (math.sin(t * theta) / s) * b


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise GeometryError("rotation quaternion must have unit norm")
        if not self.scale > 0:
            raise GeometryError("scale must be positive")
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def identity(cls):
        return cls()

    def matrix(self):
        return quat_to_matrix(self.rotation) * self.scale

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix().T + self.translation

    def __eq__(self, other):
        return (isinstance(other, RigidTransform)
                and np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation)
                and self.scale == other.scale)

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes(), self.scale))


def interpolate_transform(a, b, t):
    """Linear translation/scale, spherical-linear rotation."""
    if t <= 0.0:
        return a
    if t >= 1.0:
        return b
    q = quat_normalize(quat_slerp(a.rotation, b.rotation, t))
    return RigidTransform(q, (1 - t) * a.translation + t * b.translation,
                          (1 - t) * a.scale + t * b.scale)


def transform_aabb(box, xf):
    return Aabb.from_points(xf.apply(box.corners()))


# ---------------------------------------------------------------------------
# triangle soups

def as_triangles(triangles):
    tris = np.asarray(triangles, dtype=np.float64)
    if tris.ndim == 2 and tris.shape[1] == 9:
        tris = tris.reshape(-1, 3, 3)
    if tris.ndim != 3 or tris.shape[1:] != (3, 3):
        raise GeometryError(f"expected (n, 3, 3) triangle array, got shape {tris.shape}")
    return tris


def triangle_areas(tris):
    return 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)


def triangle_frames(tris):
    """(v0, e1, e2, unit normal) arrays for Moller-Trumbore."""
    v0 = np.ascontiguousarray(tris[:, 0])
    e1 = np.ascontiguousarray(tris[:, 1] - tris[:, 0])
    e2 = np.ascontiguousarray(tris[:, 2] - tris[:, 0])
    n = np.cross(e1, e2)
    ln = np.linalg.norm(n, axis=1)
    n = n / np.where(ln > 0, ln, 1.0)[:, None]
    return v0, e1, e2, np.ascontiguousarray(n)


@dataclass
class Bvh:
    node_lo: np.ndarray
    node_hi: np.ndarray
    node_left: np.ndarray   # -1 marks a leaf; right child is node_right
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    perm: np.ndarray        # bvh slot -> input triangle index
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray

    @property
    def n_nodes(self):
        return self.node_lo.shape[0]

    @property
    def n_triangles(self):
        return self.perm.shape[0]

    @classmethod
    def empty(cls):
        z3 = np.zeros((0, 3))
        zi = np.zeros(0, dtype=np.int64)
        return cls(z3, z3.copy(), zi, zi.copy(), zi.copy(), zi.copy(), zi.copy(),
                   z3.copy(), z3.copy(), z3.copy(), z3.copy())


LEAF_SIZE = 4


def build_bvh(triangles, leaf_size=LEAF_SIZE, *, area_tol=1e-14):
    tris = as_triangles(triangles)
    if tris.shape[0] == 0:
        raise GeometryError("cannot build a BVH over zero triangles")
    if np.any(triangle_areas(tris) <= area_tol):
        raise GeometryError("degenerate triangle in BVH input")
    lo_t = tris.min(axis=1)
    hi_t = tris.max(axis=1)
    cent = tris.mean(axis=1)

    order = np.arange(tris.shape[0])
    lo_l, hi_l, left, right, start, count = [], [], [], [], [], []
    # (node index, begin, end) over ``order``
    stack = [(0, 0, tris.shape[0])]
    lo_l.append(None); hi_l.append(None); left.append(-1); right.append(-1)
    start.append(0); count.append(0)
    while stack:
        node, b, e = stack.pop()
        ids = order[b:e]
        lo_l[node] = lo_t[ids].min(axis=0)
        hi_l[node] = hi_t[ids].max(axis=0)
        n = e - b
        if n <= leaf_size:
            start[node] = b
            count[node] = n
            continue
        c = cent[ids]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        ids = ids[np.argsort(c[:, axis], kind="stable")]
        order[b:e] = ids
        mid = b + n // 2
        kids = []
        for _ in range(2):
            kids.append(len(lo_l))
            lo_l.append(None); hi_l.append(None); left.append(-1); right.append(-1)
            start.append(0); count.append(0)
        left[node], right[node] = kids
        stack.append((kids[1], mid, e))
        stack.append((kids[0], b, mid))

    v0, e1, e2, nrm = triangle_frames(tris[order])
    return Bvh(np.array(lo_l), np.array(hi_l), np.array(left, dtype=np.int64),
               np.array(right, dtype=np.int64), np.array(start, dtype=np.int64),
               np.array(count, dtype=np.int64), order.astype(np.int64), v0, e1, e2, nrm)


# ---------------------------------------------------------------------------
# kernels

@kernel
def _inv(d):
    if d == 0.0:
        return _BIG
    return 1.0 / d


@kernel
def ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, i, tmin, tmax):
    """Moller-Trumbore with inclusive edges; returns t or inf."""
    e1x, e1y, e1z = e1[i, 0], e1[i, 1], e1[i, 2]
    e2x, e2y, e2z = e2[i, 0], e2[i, 1], e2[i, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return INF
    inv = 1.0 / det
    sx, sy, sz = ox - v0[i, 0], oy - v0[i, 1], oz - v0[i, 2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return INF
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return INF
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t > tmin and t < tmax:
        return t
    return INF


@kernel
def ray_box(ox, oy, oz, ix, iy, iz, lo, hi, k, tmin, tmax):
    """Slab entry distance of a ray into box ``k`` (inf on miss)."""
    t0 = (lo[k, 0] - ox) * ix
    t1 = (hi[k, 0] - ox) * ix
    if t0 > t1:
        t0, t1 = t1, t0
    tn, tf = t0, t1
    t0 = (lo[k, 1] - oy) * iy
    t1 = (hi[k, 1] - oy) * iy
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > tn:
        tn = t0
    if t1 < tf:
        tf = t1
    t0 = (lo[k, 2] - oz) * iz
    t1 = (hi[k, 2] - oz) * iz
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > tn:
        tn = t0
    if t1 < tf:
        tf = t1
    if tn < tmin:
        tn = tmin
    if tf > tmax:
        tf = tmax
    if tn <= tf:
        return tn
    return INF


@kernel
def segment_box(ax, ay, az, bx, by, bz, lo, hi, k, is_ray):
    """Closed segment [a, b] (or ray a + t(b - a), t >= 0) against closed box ``k``."""
    t0 = 0.0
    t1 = INF if is_ray else 1.0
    for axis in range(3):
        if axis == 0:
            a, d = ax, bx - ax
        elif axis == 1:
            a, d = ay, by - ay
        else:
            a, d = az, bz - az
        blo = lo[k, axis]
        bhi = hi[k, axis]
        if d == 0.0:
            if a < blo or a > bhi:
                return False
            continue
        ta = (blo - a) / d
        tb = (bhi - a) / d
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    return True


@kernel
def bvh_nearest(ox, oy, oz, dx, dy, dz, tmin, tmax, node_lo, node_hi, node_left,
                node_right, node_start, node_count, v0, e1, e2):
    """Nearest hit over a BVH; returns (t, bvh triangle slot or -1)."""
    best_t = tmax
    best_i = -1
    if node_lo.shape[0] == 0:
        return INF, -1
    ix, iy, iz = _inv(dx), _inv(dy), _inv(dz)
    stack = np.empty(64, dtype=np.int64)
    sp = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if ray_box(ox, oy, oz, ix, iy, iz, node_lo, node_hi, node, tmin, best_t) == INF:
            continue
        if node_left[node] < 0:
            s = node_start[node]
            for i in range(s, s + node_count[node]):
                t = ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, i, tmin, best_t)
                if t < best_t:
                    best_t = t
                    best_i = i
        else:
            stack[sp] = node_right[node]
            stack[sp + 1] = node_left[node]
            sp += 2
    if best_i < 0:
        return INF, -1
    return best_t, best_i


def bvh_intersect(bvh, ray):
    """Nearest (t, input triangle index) or None."""
    o, d = ray.origin, ray.dir
    t, slot = bvh_nearest(o[0], o[1], o[2], d[0], d[1], d[2], ray.t_min, ray.t_max,
                          bvh.node_lo, bvh.node_hi, bvh.node_left, bvh.node_right,
                          bvh.node_start, bvh.node_count, bvh.v0, bvh.e1, bvh.e2)
    if slot < 0:
        return None
    return float(t), int(bvh.perm[slot])


def segment_intersects_aabb(a, b, box):
    lo = box.lo.reshape(1, 3)
    hi = box.hi.reshape(1, 3)
    return bool(segment_box(a[0], a[1], a[2], b[0], b[1], b[2], lo, hi, 0, False))


# ---------------------------------------------------------------------------
# placed scene geometry, read by every tracing kernel

SceneArrays = namedtuple("SceneArrays", [
    # static BVH
    "node_lo", "node_hi", "node_left", "node_right", "node_start", "node_count",
    "s_v0", "s_e1", "s_e2", "s_nrm", "s_obj",
    # dynamic triangles, grouped per dynamic object
    "d_v0", "d_e1", "d_e2", "d_nrm", "d_obj", "d_first", "d_count", "d_lo", "d_hi",
    # conservative (prev U cur, inflated) bounds and per-object motion flag
    "t_lo", "t_hi", "d_moved",
    # per object id
    "obj_albedo", "obj_gloss", "obj_moved",
    # scalars: ray epsilon, AreClose tolerance, scene diagonal
    "eps", "close_tol", "diag",
])


@kernel
def scene_nearest(S, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Nearest hit over static BVH and placed dynamic objects.

    Returns (t, object id, nx, ny, nz); object id is -1 on a miss and the
    normal is the unflipped geometric normal.
    """
    t, slot = bvh_nearest(ox, oy, oz, dx, dy, dz, tmin, tmax, S.node_lo, S.node_hi,
                          S.node_left, S.node_right, S.node_start, S.node_count,
                          S.s_v0, S.s_e1, S.s_e2)
    best_t = t
    obj = -1
    nx, ny, nz = 0.0, 0.0, 0.0
    if slot >= 0:
        obj = S.s_obj[slot]
        nx, ny, nz = S.s_nrm[slot, 0], S.s_nrm[slot, 1], S.s_nrm[slot, 2]
    else:
        best_t = tmax
    n_dyn = S.d_first.shape[0]
    if n_dyn > 0:
        ix, iy, iz = _inv(dx), _inv(dy), _inv(dz)
        for k in range(n_dyn):
            if ray_box(ox, oy, oz, ix, iy, iz, S.d_lo, S.d_hi, k, tmin, best_t) == INF:
                continue
            f = S.d_first[k]
            for i in range(f, f + S.d_count[k]):
                ti = ray_triangle(ox, oy, oz, dx, dy, dz, S.d_v0, S.d_e1, S.d_e2, i, tmin, best_t)
                if ti < best_t:
                    best_t = ti
                    obj = S.d_obj[i]
                    nx, ny, nz = S.d_nrm[i, 0], S.d_nrm[i, 1], S.d_nrm[i, 2]
    if obj < 0:
        return INF, -1, 0.0, 0.0, 0.0
    return best_t, obj, nx, ny, nz


@dataclass(frozen=True)
class Hit:
    t: float
    object_id: int
    position: np.ndarray
    normal: np.ndarray


def intersect_scene(ray, state):
    """Nearest hit of ``ray`` against a finalized SceneState, or None."""
    o, d = ray.origin, ray.dir
    t, obj, nx, ny, nz = scene_nearest(state.arrays, o[0], o[1], o[2], d[0], d[1], d[2],
                                       ray.t_min, ray.t_max)
    if obj < 0:
        return None
    return Hit(float(t), int(obj), o + t * d, np.array([nx, ny, nz]))
