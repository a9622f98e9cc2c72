"""Procedural scene documents: closed rooms of boxes with animated lights and objects.

All rooms are closed so that diffuse paths never escape; the path length is
then the bounce budget and per-frame ray counts are comparable across modes.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import quat_from_axis_angle, quat_looking

DOWN = [0.0, -1.0, 0.0]
WALL = [0.6, 0.6, 0.6]


def _box(lo, hi):
    return {"box": {"lo": list(map(float, lo)), "hi": list(map(float, hi))}}


def _boxes(*pairs):
    from .scene import box_triangles
    tris = np.concatenate([box_triangles(lo, hi) for lo, hi in pairs])
    return {"triangles": tris.reshape(-1, 9).tolist()}


def _obj(name, mesh, albedo, keyframes=None):
    o = {"name": name, "mesh": mesh, "material": {"kind": "diffuse", "albedo": list(albedo)}}
    if keyframes is not None:
        o["keyframes"] = keyframes
    return o


def _kf(frame, translation=(0, 0, 0), yaw=0.0, scale=1.0):
    q = quat_from_axis_angle([0, 1, 0], yaw)
    return {"frame": int(frame), "translation": [float(v) for v in translation],
            "rotation": [float(v) for v in q], "scale": float(scale)}


def _light_kf(frame, position, normal=DOWN, tangent=None):
    q = quat_looking(normal, tangent)
    return {"frame": int(frame), "position": [float(v) for v in position],
            "rotation": [float(v) for v in q]}


def _camera(position, look_at, fov=70.0, resolution=(64, 48)):
    return {"position": list(position), "look_at": list(look_at), "fov": fov,
            "resolution": list(resolution)}


def static_box():
    return {
        "name": "static-box", "frames": 10,
        "camera": _camera([0.0, 1.5, 1.9], [0.0, 1.0, 0.0]),
        "objects": [
            _obj("room", _box([-2, 0, -2], [2, 3, 2]), WALL),
            _obj("red-block", _box([-1.0, 0, -1.0], [-0.3, 1.0, -0.3]), [0.7, 0.3, 0.3]),
            _obj("green-block", _box([0.4, 0, 0.2], [1.2, 0.6, 1.0]), [0.3, 0.7, 0.3]),
        ],
        "lights": [{"kind": "disc_area", "flux": [30.0, 30.0, 30.0], "radius": 0.4,
                    "keyframes": [_light_kf(0, [0.0, 2.9, 0.0])]}],
    }


def moving_cube(frames=100):
    # cube albedo sits within 0.1% of the room so energy-threshold reuse can
    # accept vertices that slide between the two; the red panel cannot.
    return {
        "name": "moving-cube", "frames": frames,
        "camera": _camera([0.0, 1.5, 1.9], [0.0, 0.6, 0.0]),
        "objects": [
            _obj("room", _box([-2, 0, -2], [2, 3, 2]), WALL),
            _obj("red-panel", _box([-1.98, 0.2, -1.2], [-1.9, 2.0, 1.2]), [0.7, 0.2, 0.2]),
            _obj("cube", _box([-0.25, 0, -0.25], [0.25, 0.5, 0.25]), [0.6003, 0.6, 0.5997],
                 [_kf(0, [-1.2, 0, 0.2]), _kf(frames, [1.2, 0, -0.2])]),
        ],
        "lights": [{"kind": "rect_area", "flux": [40.0, 40.0, 40.0], "half_extents": [0.5, 0.5],
                    "keyframes": [_light_kf(0, [0.0, 2.95, 0.0])]}],
    }


def parallel_spot(frames=30, stop=20):
    return {
        "name": "parallel-spot", "frames": frames,
        "camera": _camera([0.0, 2.0, 2.8], [0.0, 0.0, 0.0]),
        "objects": [
            _obj("room", _box([-3, 0, -3], [3, 3, 3]), WALL),
            _obj("block", _box([0.5, 0, -0.5], [1.5, 0.8, 0.5]), [0.4, 0.4, 0.7]),
        ],
        "lights": [{"kind": "spot", "flux": [30.0, 30.0, 30.0], "cone_angle": 60.0,
                    "keyframes": [_light_kf(0, [-1.0, 2.5, 0.0]),
                                  _light_kf(stop, [1.0, 2.5, 0.0])]}],
    }


def merry_go_round(frames=100):
    table_top = 0.75
    objects = [
        _obj("room", _box([-4, 0, -4], [4, 3, 4]), WALL),
        _obj("table", _box([-1.2, 0, -0.8], [1.2, table_top, 0.8]), [0.55, 0.45, 0.35]),
    ]
    step = 5
    keys = list(range(0, frames + 1, step))
    for i, x in enumerate([-0.7, 0.0, 0.7]):
        kfs = [_kf(f, [x, table_top, 0.0], yaw=2 * math.pi * f / frames + i,
                   scale=1.0 + 0.3 * math.sin(2 * math.pi * f / 50.0 + i)) for f in keys]
        objects.append(_obj(f"teapot{i}", _box([-0.15, 0, -0.15], [0.15, 0.3, 0.15]),
                            [0.7, 0.7, 0.2], kfs))
    for i in range(8):
        phase = 2 * math.pi * i / 8
        kfs = []
        for f in keys:
            a = phase + 2 * math.pi * f / frames
            kfs.append(_kf(f, [2.2 * math.cos(a), 0.0, 2.2 * math.sin(a)], yaw=-a))
        objects.append(_obj(f"bunny{i}", _box([-0.15, 0, -0.2], [0.15, 0.35, 0.2]),
                            [0.8, 0.8, 0.8], kfs))
    return {
        "name": "merry-go-round-analog", "frames": frames,
        "camera": _camera([0.0, 2.2, 3.8], [0.0, 0.5, 0.0]),
        "objects": objects,
        "lights": [{"kind": "disc_area", "flux": [60.0, 60.0, 60.0], "radius": 0.5,
                    "keyframes": [_light_kf(0, [0.0, 2.9, 0.0])]}],
    }


def armadillo(frames=100):
    walk1, wait = int(0.35 * frames), int(0.6 * frames)
    door1, stand, door2 = [-3.5, 0, 1.5], [0.0, 0, -1.6], [3.5, 0, 1.5]
    kfs = []
    for f in range(0, frames + 1, 5):
        if f <= walk1:
            s = f / walk1
            p = [(1 - s) * door1[k] + s * stand[k] for k in range(3)]
            yaw = math.atan2(stand[0] - door1[0], stand[2] - door1[2])
        elif f <= wait:
            p, yaw = stand, 0.0
        else:
            s = (f - wait) / (frames - wait)
            p = [(1 - s) * stand[k] + s * door2[k] for k in range(3)]
            yaw = math.atan2(door2[0] - stand[0], door2[2] - stand[2])
        kfs.append(_kf(f, p, yaw=yaw))
    # the walker holds still at the stand; drop interior keyframes there
    walker = _boxes(([-0.25, 0, -0.12], [-0.05, 0.8, 0.12]), ([0.05, 0, -0.12], [0.25, 0.8, 0.12]),
                    ([-0.28, 0.8, -0.15], [0.28, 1.4, 0.15]), ([-0.12, 1.4, -0.12], [0.12, 1.65, 0.12]))
    return {
        "name": "armadillo-analog", "frames": frames,
        "camera": _camera([0.0, 2.0, 2.8], [0.0, 0.8, -1.0]),
        "objects": [
            _obj("room", _box([-4, 0, -3], [4, 3, 3]), WALL),
            _obj("stand", _box([-0.4, 0, -2.6], [0.4, 1.0, -2.1]), [0.5, 0.35, 0.25]),
            _obj("table", _box([-2.5, 0, -1.0], [2.5, 0.75, 0.2]), [0.55, 0.45, 0.35]),
            _obj("armadillo", walker, [0.6, 0.55, 0.5], kfs),
        ],
        "lights": [{"kind": "disc_area", "flux": [60.0, 60.0, 60.0], "radius": 0.5,
                    "keyframes": [_light_kf(0, [0.0, 2.9, 0.0])]}],
    }


def villa(frames=100):
    objects = [
        _obj("house", _box([-4, 0, -2], [4, 3, 2]), WALL),
        _obj("dividing-wall", _boxes(([-0.05, 0, -2], [0.05, 3, -0.5]),
                                     ([-0.05, 0, 0.5], [0.05, 3, 2]),
                                     ([-0.05, 2.2, -0.5], [0.05, 3, 0.5])), [0.7, 0.7, 0.65]),
        _obj("counter", _box([-3.9, 0, -1.9], [-1.5, 0.9, -1.3]), [0.5, 0.5, 0.55]),
        _obj("kitchen-table", _box([-2.8, 0, 0.3], [-1.6, 0.75, 1.3]), [0.55, 0.4, 0.3]),
        _obj("sofa", _box([2.0, 0, -1.9], [3.8, 0.8, -1.0]), [0.3, 0.35, 0.6]),
        _obj("coffee-table", _box([2.3, 0, 0.0], [3.3, 0.45, 0.8]), [0.6, 0.5, 0.4]),
    ]
    kfs = []
    for f in range(0, frames + 1, 10):
        a = 2 * math.pi * f / frames
        pos = [-2.2 + 0.6 * math.cos(a), 1.5, 0.6 * math.sin(a)]
        aim = [0.0 + 0.4 * math.sin(a), 0.6, 0.3 * math.cos(a)]
        kfs.append(_light_kf(f, pos, np.subtract(aim, pos)))
    return {
        "name": "villa-analog", "frames": frames,
        "camera": _camera([3.8, 1.6, 1.8], [0.0, 1.0, 0.0]),
        "objects": objects,
        "lights": [{"kind": "disc_area", "flux": [40.0, 38.0, 30.0], "radius": 0.12,
                    "keyframes": kfs}],
    }


BUILTINS = {
    "static-box": static_box,
    "moving-cube": moving_cube,
    "parallel-spot": parallel_spot,
    "merry-go-round-analog": merry_go_round,
    "armadillo-analog": armadillo,
    "villa-analog": villa,
}
ALIASES = {"villa-torch": "villa-analog", "merry-go-round": "merry-go-round-analog",
           "armadillo": "armadillo-analog", "villa": "villa-analog"}
DYNAMIC_ANALOGS = ("merry-go-round-analog", "armadillo-analog", "villa-analog")


def builtin_document(name):
    key = ALIASES.get(name, name)
    if key not in BUILTINS:
        from .scene import SceneError
        raise SceneError(f"unknown builtin scene {name!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[key]()
