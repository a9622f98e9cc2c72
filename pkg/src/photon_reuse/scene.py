"""Scene documents, keyframed objects and lights, and per-frame placed geometry."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (Aabb, Bvh, GeometryError, RigidTransform, SceneArrays, as_triangles,
                       build_bvh, quat_looking, transform_aabb, triangle_areas, triangle_frames)
from .lights import Light, LightError, sample_keyframes

EPS_SCALE = 1e-4


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Material:
    kind: str = "diffuse"
    albedo: tuple = (0.5, 0.5, 0.5)
    glossy_exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in ("diffuse", "glossy"):
            raise SceneError(f"unknown material kind {self.kind!r}")
        a = tuple(float(x) for x in self.albedo)
        if len(a) != 3 or min(a) < 0.0 or max(a) > 1.0:
            raise SceneError(f"albedo must lie in [0, 1]^3, got {a}")
        if self.kind == "glossy" and self.glossy_exponent < 1.0:
            raise SceneError("glossy exponent must be >= 1")
        object.__setattr__(self, "albedo", a)


@dataclass
class SceneObject:
    id: int
    mesh: np.ndarray
    material: Material
    keyframes: list = field(default_factory=lambda: [(0, RigidTransform())])
    name: str = ""

    @property
    def dynamic(self):
        first = self.keyframes[0][1]
        return any(x != first for _, x in self.keyframes[1:])

    def transform_at(self, frame):
        return sample_keyframes(self.keyframes, frame)

    @property
    def local_bounds(self):
        return Aabb.from_points(self.mesh.reshape(-1, 3))


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    fov: float = 60.0
    resolution: tuple = (64, 48)
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise SceneError("camera fov must lie in (0, 180)")
        w, h = self.resolution
        if int(w) < 1 or int(h) < 1:
            raise SceneError("camera resolution must be at least 1x1")
        object.__setattr__(self, "resolution", (int(w), int(h)))
        for name in ("position", "look_at", "up"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))


@dataclass(frozen=True)
class PlacedObject:
    id: int
    triangles: np.ndarray
    bounds_current: Aabb
    bounds_previous: Aabb
    moved: bool


@dataclass
class SceneState:
    frame: int
    static_bvh: Bvh
    placed_dynamics: list
    arrays: SceneArrays
    light_poses: list


class Scene:
    def __init__(self, objects, lights, camera, frames=1, name="scene"):
        self.objects = list(objects)
        self.lights = list(lights)
        self.camera = camera
        self.frames = int(frames)
        self.name = name
        if [o.id for o in self.objects] != list(range(len(self.objects))):
            raise SceneError("object ids must be dense 0..N-1")
        if not self.lights:
            raise SceneError("scene needs at least one light")
        self._static_bvh = None
        self._static_obj = None
        self.diag = self._diagonal()
        self.eps = EPS_SCALE * self.diag
        self.albedo = np.array([o.material.albedo for o in self.objects]).reshape(-1, 3)
        self.gloss = np.array([o.material.glossy_exponent if o.material.kind == "glossy" else 0.0
                               for o in self.objects])

    @property
    def static_objects(self):
        return [o for o in self.objects if not o.dynamic]

    @property
    def dynamic_objects(self):
        return [o for o in self.objects if o.dynamic]

    def _diagonal(self):
        pts = []
        for o in self.objects:
            if o.dynamic:
                box = o.local_bounds
                for _, xf in o.keyframes:
                    pts.append(transform_aabb(box, xf).corners())
            else:
                pts.append(o.transform_at(0).apply(o.mesh.reshape(-1, 3)))
        for light in self.lights:
            pts.extend(xf.translation[None] for _, xf in light.keyframes)
        box = Aabb.from_points(np.concatenate(pts))
        return max(box.diagonal, 1e-9)

    def static_bvh(self):
        if self._static_bvh is None:
            statics = self.static_objects
            if not statics:
                self._static_bvh = Bvh.empty()
                self._static_obj = np.zeros(0, dtype=np.int64)
            else:
                tris = np.concatenate([o.transform_at(0).apply(o.mesh) for o in statics])
                ids = np.concatenate([np.full(o.mesh.shape[0], o.id) for o in statics])
                self._static_bvh = build_bvh(tris)
                self._static_obj = ids[self._static_bvh.perm].astype(np.int64)
        return self._static_bvh

    def state_at(self, frame):
        return state_at(self, frame)

    def triangle_count(self):
        return sum(o.mesh.shape[0] for o in self.objects)


def _placed(obj, frame, inflate):
    xf = obj.transform_at(frame)
    box = obj.local_bounds
    cur = transform_aabb(box, xf)
    if frame > 0:
        prev_xf = obj.transform_at(frame - 1)
        prev = transform_aabb(box, prev_xf)
        moved = prev_xf != xf
    else:
        prev, moved = cur, False
    return PlacedObject(obj.id, xf.apply(obj.mesh), cur, prev, moved)


def state_at(scene, frame):
    if frame < 0:
        raise SceneError("frame must be non-negative")
    bvh = scene.static_bvh()
    inflate = EPS_SCALE * scene.diag
    placed = [_placed(o, frame, inflate) for o in scene.dynamic_objects]

    n_obj = len(scene.objects)
    obj_moved = np.zeros(n_obj, dtype=np.bool_)
    if placed:
        tris = np.concatenate([p.triangles for p in placed])
        d_v0, d_e1, d_e2, d_nrm = triangle_frames(tris)
        d_obj = np.concatenate([np.full(p.triangles.shape[0], p.id) for p in placed]).astype(np.int64)
        counts = np.array([p.triangles.shape[0] for p in placed], dtype=np.int64)
        first = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        d_lo = np.array([p.bounds_current.lo for p in placed])
        d_hi = np.array([p.bounds_current.hi for p in placed])
        union = [p.bounds_current.union(p.bounds_previous).inflate(inflate) for p in placed]
        t_lo = np.array([u.lo for u in union])
        t_hi = np.array([u.hi for u in union])
        d_moved = np.array([p.moved for p in placed], dtype=np.bool_)
        obj_moved[[p.id for p in placed]] = d_moved
    else:
        z3 = np.zeros((0, 3))
        zi = np.zeros(0, dtype=np.int64)
        d_v0, d_e1, d_e2, d_nrm = z3, z3, z3, z3
        d_obj, counts, first = zi, zi, zi
        d_lo = d_hi = t_lo = t_hi = z3
        d_moved = np.zeros(0, dtype=np.bool_)

    arrays = SceneArrays(
        bvh.node_lo, bvh.node_hi, bvh.node_left, bvh.node_right, bvh.node_start, bvh.node_count,
        bvh.v0, bvh.e1, bvh.e2, bvh.normal, scene._static_obj,
        d_v0, d_e1, d_e2, d_nrm, d_obj, first, counts, d_lo, d_hi,
        t_lo, t_hi, d_moved,
        np.ascontiguousarray(scene.albedo, dtype=np.float64), scene.gloss, obj_moved,
        float(scene.eps), float(EPS_SCALE * scene.diag), float(scene.diag),
    )
    poses = [light.pose_at(frame) for light in scene.lights]
    return SceneState(frame, bvh, placed, arrays, poses)


# ---------------------------------------------------------------------------
# document loading

def box_triangles(lo, hi):
    """Twelve triangles of an axis-aligned box."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    c = [np.where([i >> 2 & 1, i >> 1 & 1, i & 1], hi, lo) for i in range(8)]
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, cc, d in quads:
        tris.append([c[a], c[b], c[cc]])
        tris.append([c[a], c[cc], c[d]])
    return np.array(tris)


def load_obj(path):
    """Positions and faces of an ASCII OBJ file; polygons are fan-triangulated."""
    verts, tris = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                    idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                    for k in range(1, len(idx) - 1):
                        tris.append([verts[idx[0]], verts[idx[k]], verts[idx[k + 1]]])
            except (ValueError, IndexError) as exc:
                raise SceneError(f"{path}:{lineno}: malformed OBJ line: {exc}") from None
    if not tris:
        raise SceneError(f"{path}: OBJ file has no faces")
    return np.array(tris, dtype=np.float64)


class _Doc:
    """Strict accessor over a parsed JSON mapping with path-qualified errors."""

    def __init__(self, data, where, allowed, required=()):
        if not isinstance(data, dict):
            raise SceneError(f"{where}: expected an object")
        unknown = set(data) - set(allowed)
        if unknown:
            raise SceneError(f"{where}: unknown field(s) {sorted(unknown)}")
        missing = [k for k in required if k not in data]
        if missing:
            raise SceneError(f"{where}: missing field(s) {missing}")
        self.data = data
        self.where = where

    def get(self, key, default=None):
        return self.data.get(key, default)

    def vec(self, key, n, default=None):
        v = self.data.get(key, default)
        try:
            arr = np.asarray(v, dtype=np.float64).reshape(n)
        except (TypeError, ValueError):
            raise SceneError(f"{self.where}.{key}: expected {n} numbers") from None
        if not np.all(np.isfinite(arr)):
            raise SceneError(f"{self.where}.{key}: values must be finite")
        return arr

    def num(self, key, default=None):
        v = self.data.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SceneError(f"{self.where}.{key}: expected a number")
        return float(v)


def _keyframes(items, where, light=False):
    if items is None:
        return [(0, RigidTransform())]
    if not isinstance(items, list) or not items:
        raise SceneError(f"{where}: expected a non-empty list")
    out = []
    allowed = ["frame", "translation", "rotation", "scale"]
    if light:
        allowed = ["frame", "position", "rotation", "normal", "tangent"]
    for i, kf in enumerate(items):
        d = _Doc(kf, f"{where}[{i}]", allowed, ["frame"])
        frame = d.get("frame")
        if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
            raise SceneError(f"{d.where}.frame: expected a non-negative integer")
        if light:
            if "rotation" in d.data and "normal" in d.data:
                raise SceneError(f"{d.where}: give either rotation or normal, not both")
            if "normal" in d.data:
                tangent = d.vec("tangent", 3) if "tangent" in d.data else None
                q = quat_looking(d.vec("normal", 3), tangent)
            else:
                q = d.vec("rotation", 4, [1, 0, 0, 0])
            t = d.vec("position", 3, [0, 0, 0])
            s = 1.0
        else:
            q = d.vec("rotation", 4, [1, 0, 0, 0])
            t = d.vec("translation", 3, [0, 0, 0])
            s = d.num("scale", 1.0)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise SceneError(f"{d.where}.rotation: quaternion is not unit length")
        try:
            out.append((frame, RigidTransform(q, t, s)))
        except GeometryError as exc:
            raise SceneError(f"{d.where}: {exc}") from None
    frames = [f for f, _ in out]
    if len(set(frames)) != len(frames):
        raise SceneError(f"{where}: duplicate keyframe frames")
    return sorted(out, key=lambda kv: kv[0])


def _mesh(entry, where, base_dir):
    d = _Doc(entry, where, ["triangles", "obj", "box"])
    if len(d.data) != 1:
        raise SceneError(f"{where}: give exactly one of triangles, obj, box")
    if "triangles" in d.data:
        try:
            tris = as_triangles(d.get("triangles"))
        except (GeometryError, ValueError, TypeError) as exc:
            raise SceneError(f"{where}.triangles: {exc}") from None
    elif "obj" in d.data:
        p = Path(d.get("obj"))
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        if not p.exists():
            raise SceneError(f"{where}.obj: mesh file {str(p)!r} not found")
        tris = load_obj(p)
    else:
        b = _Doc(d.get("box"), f"{where}.box", ["lo", "hi"], ["lo", "hi"])
        lo, hi = b.vec("lo", 3), b.vec("hi", 3)
        if np.any(lo >= hi):
            raise SceneError(f"{where}.box: lo must be below hi")
        tris = box_triangles(lo, hi)
    if tris.shape[0] == 0:
        raise SceneError(f"{where}: mesh has no triangles")
    if np.any(triangle_areas(tris) <= 1e-14):
        raise SceneError(f"{where}: mesh contains degenerate triangles")
    return tris


def scene_from_dict(doc, base_dir=None):
    top = _Doc(doc, "scene", ["name", "frames", "camera", "objects", "lights"],
               ["objects", "lights", "camera"])
    frames = top.get("frames", 1)
    if isinstance(frames, bool) or not isinstance(frames, int) or frames < 1:
        raise SceneError("scene.frames: expected a positive integer")

    c = _Doc(top.get("camera"), "scene.camera", ["position", "look_at", "fov", "resolution", "up"],
             ["position", "look_at"])
    res = c.get("resolution", [64, 48])
    if not (isinstance(res, list) and len(res) == 2 and all(isinstance(v, int) for v in res)):
        raise SceneError("scene.camera.resolution: expected [width, height]")
    try:
        camera = Camera(c.vec("position", 3), c.vec("look_at", 3), c.num("fov", 60.0), tuple(res),
                        c.vec("up", 3, [0, 1, 0]))
    except SceneError as exc:
        raise SceneError(f"scene.camera: {exc}") from None

    objs = top.get("objects")
    if not isinstance(objs, list):
        raise SceneError("scene.objects: expected a list")
    objects = []
    for i, entry in enumerate(objs):
        where = f"scene.objects[{i}]"
        d = _Doc(entry, where, ["name", "mesh", "material", "keyframes"], ["mesh"])
        m = _Doc(d.get("material", {}), f"{where}.material", ["kind", "albedo", "glossy_exponent"])
        try:
            mat = Material(m.get("kind", "diffuse"), tuple(m.vec("albedo", 3, [0.5, 0.5, 0.5])),
                           m.num("glossy_exponent", 1.0))
        except SceneError as exc:
            raise SceneError(f"{where}.material: {exc}") from None
        objects.append(SceneObject(i, _mesh(d.get("mesh"), f"{where}.mesh", base_dir), mat,
                                   _keyframes(d.get("keyframes"), f"{where}.keyframes"),
                                   d.get("name", f"object{i}")))

    lts = top.get("lights")
    if not isinstance(lts, list) or not lts:
        raise SceneError("scene.lights: expected a non-empty list")
    lights = []
    for i, entry in enumerate(lts):
        where = f"scene.lights[{i}]"
        d = _Doc(entry, where, ["kind", "flux", "radius", "half_extents", "cone_angle", "keyframes"],
                 ["kind", "flux", "keyframes"])
        try:
            lights.append(Light(
                d.get("kind"), d.vec("flux", 3),
                _keyframes(d.get("keyframes"), f"{where}.keyframes", light=True),
                cone_angle=d.num("cone_angle", 0.0), radius=d.num("radius", 0.0),
                half_extents=tuple(d.vec("half_extents", 2, [0, 0]))))
        except LightError as exc:
            raise SceneError(f"{where}: {exc}") from None

    return Scene(objects, lights, camera, frames, top.get("name", "scene"))


def load_scene(source):
    """Scene from a dict, a JSON path, a JSON string, or ``builtin:<name>``."""
    if isinstance(source, dict):
        return scene_from_dict(source)
    text = str(source)
    if text.startswith("builtin:"):
        from .builtin_scenes import builtin_document
        return scene_from_dict(builtin_document(text[len("builtin:"):]))
    if text.lstrip().startswith("{"):
        label, base, raw = "<string>", None, text
    else:
        path = Path(text)
        if not path.exists():
            raise SceneError(f"scene file {text!r} not found")
        label, base, raw = str(path), path.parent, path.read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{label}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return scene_from_dict(doc, base)
