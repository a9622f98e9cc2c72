"""Command-line driver.

Run a scene::

    photon-reuse --scene builtin:moving-cube --mode error --frames 20 --out runs/cube

Summarise runs against a baseline::

    photon-reuse report runs/base/stats.csv runs/naive/stats.csv runs/error/stats.csv
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import __version__
from ._jit import THREADS_ENV, default_workers, set_workers
from .geometry import GeometryError
from .lights import LightError
from .pipeline import EngineError, TIMING_FIELDS, Engine, write_stats_csv
from .scene import SceneError, load_scene
from .store import PHOTON_DTYPE, MAX_BOUNCES

DEFAULTS = {
    "scene": "builtin:static-box",
    "mode": "naive",
    "paths": 100_000,
    "bounces": 7,
    "dm": "8x8x64x64",
    "threshold": 0.001,
    "frames": None,
    "seed": 0,
    "radius": 0.1,
    "out": "photon-reuse-out",
    "images": "on",
    "workers": None,
    "memory_budget": 4096.0,
}
# flags that do not change results; left out of the echoed config
_RUNTIME_ONLY = ("out", "workers")


class UsageError(Exception):
    pass


class ReportError(Exception):
    pass


def _parser():
    p = argparse.ArgumentParser(
        prog="photon-reuse",
        description="Trace photon paths over animation frames with temporal path reuse.",
        epilog="Use 'photon-reuse report CSV [CSV ...]' to compare runs against a baseline.",
        argument_default=argparse.SUPPRESS)
    p.add_argument("--scene", help="scene JSON file or builtin:<name>")
    p.add_argument("--mode", choices=("baseline", "naive", "error"))
    p.add_argument("--paths", type=int, help="number of photon paths (default 100000)")
    p.add_argument("--bounces", type=int, help=f"max photons per path, 1..{MAX_BOUNCES}")
    p.add_argument("--dm", help="distribution-map dims AxBxCxD (default 8x8x64x64)")
    p.add_argument("--threshold", type=float, help="relative energy threshold for --mode error")
    p.add_argument("--frames", type=int, help="frames to run (default: the scene's length)")
    p.add_argument("--seed", type=int)
    p.add_argument("--radius", type=float, help="gather radius in world units")
    p.add_argument("--out", help="output directory")
    p.add_argument("--images", choices=("on", "off"))
    p.add_argument("--workers", type=int, help=f"worker threads (env {THREADS_ENV} overrides)")
    p.add_argument("--config", help="config.json from an earlier run; explicit flags win")
    p.add_argument("--memory-budget", dest="memory_budget", type=float,
                   help="photon-map budget in MiB (default 4096)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def parse_dims(text):
    parts = str(text).lower().split("x")
    try:
        dims = [int(v) for v in parts]
    except ValueError:
        raise UsageError(f"--dm expects AxBxCxD integers, got {text!r}") from None
    if len(dims) not in (2, 4) or any(d < 1 for d in dims):
        raise UsageError(f"--dm expects 2 or 4 positive integers, got {text!r}")
    return tuple(dims)


def resolve_config(ns):
    cfg = dict(DEFAULTS)
    given = vars(ns)
    if "config" in given:
        try:
            loaded = json.loads(Path(given["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read --config {given['config']}: {exc}") from None
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown keys in {given['config']}: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in given.items() if k != "config"})
    if cfg["mode"] not in ("baseline", "naive", "error"):
        raise UsageError(f"invalid mode {cfg['mode']!r}")
    if cfg["paths"] < 1:
        raise UsageError("--paths must be >= 1")
    if not 1 <= cfg["bounces"] <= MAX_BOUNCES:
        raise UsageError(f"--bounces must lie in 1..{MAX_BOUNCES}")
    if not cfg["threshold"] >= 0:
        raise UsageError("--threshold must be >= 0")
    if cfg["frames"] is not None and cfg["frames"] < 1:
        raise UsageError("--frames must be >= 1")
    if not cfg["radius"] > 0:
        raise UsageError("--radius must be > 0")
    if cfg["images"] not in ("on", "off"):
        raise UsageError("--images must be on or off")
    parse_dims(cfg["dm"])
    need = cfg["paths"] * cfg["bounces"] * PHOTON_DTYPE.itemsize / float(1 << 20)
    if need > cfg["memory_budget"]:
        raise UsageError(f"photon map needs {need:.1f} MiB, over the "
                         f"{cfg['memory_budget']:.1f} MiB budget")
    env = os.environ.get(THREADS_ENV)
    if env:
        cfg["workers"] = int(env)
    elif cfg["workers"] is None:
        cfg["workers"] = default_workers()
    if cfg["workers"] < 1:
        raise UsageError("--workers must be >= 1")
    return cfg


def run(cfg, log=None):
    from .gather import render_engine, write_image

    log = sys.stderr if log is None else log
    scene = load_scene(cfg["scene"])
    frames = cfg["frames"] if cfg["frames"] is not None else scene.frames
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    set_workers(cfg["workers"])
    engine = Engine(scene, cfg["mode"], cfg["threshold"], cfg["paths"], cfg["bounces"],
                    parse_dims(cfg["dm"]), cfg["seed"], cfg["radius"])
    echo = {k: v for k, v in cfg.items() if k not in _RUNTIME_ONLY}
    echo["frames"] = frames
    (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    stats = []
    for f in range(frames):
        s = engine.run_frame(f)
        stats.append(s)
        if cfg["images"] == "on":
            write_image(render_engine(engine), out / f"frame_{f:04d}.ppm")
        print(f"frame {f}: traced {s.rays_traced} reused {s.rays_reused} "
              f"visibility {s.visibility_rays}", file=log)
    write_stats_csv(out / "stats.csv", stats)
    return stats


def _read_stats(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc.strerror or exc}") from None
    if not rows or "mode" not in rows[0] or "rays_traced" not in rows[0]:
        raise ReportError(f"{path}: not a stats CSV")
    modes = {r["mode"] for r in rows}
    if len(modes) != 1:
        raise ReportError(f"{path}: expected one mode per file, found {sorted(modes)}")
    return modes.pop(), rows


def report(paths, out=None):
    """Per-frame and mean ray-count ratios against the baseline run; returns the table rows."""
    out = sys.stdout if out is None else out
    runs = {}
    for p in paths:
        mode, rows = _read_stats(p)
        if mode in runs:
            raise ReportError(f"two runs for mode {mode!r}")
        runs[mode] = rows
    if "baseline" not in runs:
        raise ReportError("report needs a baseline run")
    n = {len(rows) for rows in runs.values()}
    if len(n) != 1:
        raise ReportError(f"mismatched frame counts: "
                          f"{ {m: len(r) for m, r in runs.items()} }")
    order = [m for m in ("baseline", "naive", "error") if m in runs]
    base = runs["baseline"]
    table = []
    for i, brow in enumerate(base):
        row = {"frame": int(brow["frame"])}
        b = int(brow["rays_traced"])
        for m in order:
            r = runs[m][i]
            if int(r["frame"]) != row["frame"]:
                raise ReportError(f"frame mismatch in {m} run at row {i}")
            traced, reused = int(r["rays_traced"]), int(r["rays_reused"])
            row[f"{m}_ratio"] = traced / b if b else 1.0
            row[f"{m}_reuse"] = reused / (traced + reused) if traced + reused else 0.0
        table.append(row)
    head = ["frame"] + [f"{m}_ratio" for m in order] + [f"{m}_reuse" for m in order]
    print("  ".join(f"{h:>14}" for h in head), file=out)
    for row in table:
        print("  ".join(f"{row[h]:>14}" if h == "frame" else f"{row[h]:>14.4f}" for h in head),
              file=out)
    mean = {h: sum(r[h] for r in table) / len(table) for h in head[1:]}
    print("  ".join([f"{'mean':>14}"] + [f"{mean[h]:>14.4f}" for h in head[1:]]), file=out)
    return table


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] == "report":
        if len(argv) < 2 or any(a.startswith("-") for a in argv[1:]):
            print("usage: photon-reuse report CSV [CSV ...]", file=sys.stderr)
            return 2
        try:
            report(argv[1:])
        except ReportError as exc:
            print(f"photon-reuse report: error: {exc}", file=sys.stderr)
            return 1
        return 0
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(ns)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"photon-reuse: error: {exc}", file=sys.stderr)
        return 2
    try:
        run(cfg)
    except (SceneError, LightError, GeometryError, EngineError) as exc:
        print(f"photon-reuse: scene error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"photon-reuse: {exc}", file=sys.stderr)
        return 1
    return 0


__all__ = ["main", "report", "run", "resolve_config", "parse_dims", "TIMING_FIELDS"]
