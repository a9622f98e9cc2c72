"""Per-frame photon path engine with three reuse policies.

``baseline`` regenerates every path every frame. ``naive`` retraces a path
from its first segment that touches the conservative bounds of a moved
object. ``error`` repairs flagged segments in place with visibility rays and
only retraces once a vertex's reflected energy leaves the threshold band.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from ._jit import set_workers
from .lights import compute_dm_current, init_dm_target, normalize_dims, prune_paths
from .lights import fill_targets, sample_emission_batch
from .store import NO_OBJECT, PhotonMap, pack_path_info
from .tracing import (flag_naive, flag_segments, path_uniforms, trace_requests, update_origins,
                      verify_error_based)

MODES = ("baseline", "naive", "error")
STAGES = ("update_origins", "occlusions", "dm_current", "prune", "fill", "trace")
STAT_FIELDS = ("frame", "mode", "rays_traced", "rays_reused", "paths_replaced", "paths_pruned",
               "paths_filled", "visibility_rays")
TIMING_FIELDS = tuple("t_" + s for s in STAGES)


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class EngineMode:
    kind: str = "naive"
    threshold: float = 0.001

    def __post_init__(self):
        if self.kind not in MODES:
            raise EngineError(f"mode must be one of {MODES}, got {self.kind!r}")
        if not self.threshold >= 0.0:
            raise EngineError("energy threshold must be >= 0")


@dataclass
class FrameStats:
    frame: int
    mode: str
    rays_traced: int = 0
    rays_reused: int = 0
    paths_replaced: int = 0
    paths_pruned: int = 0
    paths_filled: int = 0
    visibility_rays: int = 0
    timings: dict = field(default_factory=lambda: {s: 0.0 for s in STAGES})

    def row(self):
        out = {k: getattr(self, k) for k in STAT_FIELDS}
        out.update({"t_" + k: f"{v:.6f}" for k, v in self.timings.items()})
        return out


def energies_close(e_old, e_new, threshold):
    """Per-channel relative band test in float64, conjunction over channels."""
    for o, n in zip(e_old, e_new):
        o = float(o)
        d = float(n) - o
        lim = threshold * o
        if not -lim <= d <= lim:
            return False
    return True


class PathTable:
    """Struct-of-arrays path storage; column ``p`` of every array is path slot ``p``."""

    def __init__(self, capacity, max_bounces, n_lights=1, radius=0.1):
        self.max_bounces = int(max_bounces)
        self.radius = float(radius)
        self.base_energy = np.zeros((n_lights, 3), dtype=np.float32)
        self._allocate(int(capacity))

    def _allocate(self, capacity):
        B = self.max_bounces
        self.capacity = capacity
        self.photons = PhotonMap(capacity, B)
        self.pos = np.zeros((B, capacity, 3))
        self.nrm = np.zeros((B, capacity, 3))
        self.outdir = np.zeros((B, capacity, 3))
        self.origin = np.zeros((capacity, 3))
        self.emit_dir = np.zeros((capacity, 3))
        self.light_idx = np.full(capacity, -1, dtype=np.int64)
        self.epoch = np.zeros(capacity, dtype=np.int64)
        self.cell = np.full(capacity, -1, dtype=np.int64)
        self.nph = np.zeros(capacity, dtype=np.int64)
        self.nseg = np.zeros(capacity, dtype=np.int64)

    def grow(self, capacity):
        if capacity <= self.capacity:
            return
        old = {k: getattr(self, k) for k in ("pos", "nrm", "outdir", "origin", "emit_dir",
                                             "light_idx", "epoch", "cell", "nph", "nseg")}
        photons = self.photons.resized(capacity)
        n = self.capacity
        self._allocate(capacity)
        self.photons = photons
        for k, v in old.items():
            if v.ndim == 3:
                getattr(self, k)[:, :n] = v
            else:
                getattr(self, k)[:n] = v

    @property
    def live(self):
        return self.light_idx >= 0

    @property
    def inc(self):
        return self.photons.grid["incoming"]

    @property
    def oid(self):
        return self.photons.grid["object_id"]

    @property
    def energy(self):
        return self.photons.grid["energy"]

    @property
    def photon_radius(self):
        return self.photons.grid["radius"]

    def free(self, slots):
        slots = np.asarray(slots, dtype=np.int64)
        self.light_idx[slots] = -1
        self.cell[slots] = -1
        self.nph[slots] = 0
        self.nseg[slots] = 0
        g = self.photons.grid
        g["object_id"][:, slots] = NO_OBJECT
        g["energy"][:, slots] = 0.0
        g["incoming"][:, slots] = 0.0
        g["radius"][:, slots] = 0.0

    def live_photons(self):
        """(positions, normals, energies, object ids) of every stored photon."""
        B = self.max_bounces
        mask = np.arange(B)[:, None] < self.nph[None, :]
        mask &= self.live[None, :]
        return self.pos[mask], self.nrm[mask], self.energy[mask], self.oid[mask]


# ---------------------------------------------------------------------------
# stage functions over a PathTable

def update_path_origins(table, state, light, live=None):
    """Re-anchor every live path of ``light`` on its pose in ``state``.

    Returns (valid mask over slots, visibility rays cast).
    """
    live = table.live if live is None else live
    valid = np.ones(table.capacity, dtype=np.bool_)
    vis = np.zeros(table.capacity, dtype=np.int64)
    update_origins(state.arrays, state.light_poses[light], light, live, table.light_idx,
                   table.origin, table.emit_dir, table.pos, table.inc, table.nph, valid, vis)
    return valid, int(vis.sum())


def detect_occlusions_naive(table, state, live=None):
    """First segment index touching a moved object's conservative bounds, or -1."""
    live = table.live if live is None else live
    out = np.empty(table.capacity, dtype=np.int64)
    flag_naive(state.arrays, live, table.origin, table.emit_dir, table.pos, table.outdir,
               table.nph, table.nseg, out)
    return out


def segment_flags(table, state, live=None):
    """(B, C) boolean bounds flags for every stored segment."""
    live = table.live if live is None else live
    out = np.zeros((table.max_bounces, table.capacity), dtype=np.bool_)
    flag_segments(state.arrays, live, table.origin, table.emit_dir, table.pos, table.outdir,
                  table.nph, table.nseg, out)
    return out


def verify_paths_error_based(table, state, threshold, seed, live=None):
    """Repair flagged segments in place; returns (retrace start or -1 per slot, visibility rays)."""
    live = table.live if live is None else live
    retrace = np.empty(table.capacity, dtype=np.int64)
    vis = np.empty(table.capacity, dtype=np.int64)
    verify_error_based(state.arrays, live, float(threshold), table.light_idx, table.epoch,
                       table.origin, table.emit_dir, table.base_energy, table.pos, table.nrm,
                       table.outdir, table.inc, table.oid, table.energy, table.photon_radius,
                       table.nph, table.nseg, int(seed), np.float32(table.radius), retrace, vis)
    return retrace, int(vis.sum())


def trace_paths(table, state, slots, starts, seed):
    """Trace each (slot, start segment) request; returns rays cast per request."""
    slots = np.ascontiguousarray(slots, dtype=np.int64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    rays = np.zeros(slots.shape[0], dtype=np.int64)
    if slots.shape[0]:
        trace_requests(state.arrays, slots, starts, table.light_idx, table.epoch, table.origin,
                       table.emit_dir, table.base_energy, table.pos, table.nrm, table.outdir,
                       table.inc, table.oid, table.energy, table.photon_radius, table.nph,
                       table.nseg, int(seed), np.float32(table.radius), rays)
    return rays


def prune_uniforms(seed, slots, epochs, frame):
    out = np.empty(len(slots))
    path_uniforms(int(seed), np.ascontiguousarray(slots, dtype=np.int64),
                  np.ascontiguousarray(epochs, dtype=np.int64), int(frame), _rng.PRUNE, out)
    return out


# ---------------------------------------------------------------------------

def _split_paths(n_paths, lights):
    w = np.array([max(float(np.sum(l.flux)), 0.0) for l in lights])
    w = np.ones_like(w) if w.sum() <= 0 else w / w.sum()
    counts = np.floor(w * n_paths).astype(np.int64)
    counts[-1] += n_paths - counts.sum()
    return counts


class Engine:
    def __init__(self, scene, mode="naive", threshold=0.001, n_paths=100_000, max_bounces=7,
                 dm_dims=(8, 8, 64, 64), seed=0, radius=0.1, workers=None):
        self.scene = scene
        self.mode = mode if isinstance(mode, EngineMode) else EngineMode(mode, threshold)
        if n_paths < 1:
            raise EngineError("n_paths must be positive")
        self.n_paths = int(n_paths)
        self.seed = int(seed)
        if workers is not None:
            set_workers(workers)
        lights = scene.lights
        self.table = PathTable(self.n_paths, max_bounces, len(lights), radius)
        self.dims = []
        self.dm_target = []
        counts = _split_paths(self.n_paths, lights)
        pose0 = [l.pose_at(0) for l in lights]
        for i, light in enumerate(lights):
            dims = normalize_dims(dm_dims, light.code)
            dm_t = init_dm_target(pose0[i], dims, max(int(counts[i]), 1), self.seed, i)
            self.dims.append(dims)
            self.dm_target.append(dm_t)
            flux = np.asarray(light.flux, dtype=np.float64)
            self.table.base_energy[i] = (flux / dm_t.total).astype(np.float32)
        self.dm_current = [None] * len(lights)
        self.last_frame = None
        self.last_poses = None
        self.state = None
        self.path_info = np.zeros(self.table.capacity, dtype=np.uint32)
        self.retrace_start = np.full(self.table.capacity, -1, dtype=np.int64)
        self.regenerated = np.zeros(self.table.capacity, dtype=np.bool_)
        self.history = []

    @property
    def baseline(self):
        return self.mode.kind == "baseline"

    def run_frame(self, frame):
        scene = self.scene
        table = self.table
        stats = FrameStats(frame, self.mode.kind)
        clock = time.perf_counter
        state = scene.state_at(frame)
        S = state.arrays
        cold = self.baseline or self.last_frame is None or frame != self.last_frame + 1
        cap = table.capacity
        replaced = np.zeros(cap, dtype=np.bool_)
        req = np.full(cap, -1, dtype=np.int64)
        pruned_slots = np.zeros(0, dtype=np.int64)

        if cold:
            live = table.live.copy()
            table.free(np.flatnonzero(live))
            self.dm_current = [None] * len(scene.lights)
        else:
            live = table.live.copy()
            t0 = clock()
            for l, pose in enumerate(state.light_poses):
                if np.array_equal(pose, self.last_poses[l]):
                    continue
                valid, vis = update_path_origins(table, state, l, live)
                stats.visibility_rays += vis
                bad = live & (table.light_idx == l) & ~valid
                replaced |= bad
            live &= ~replaced
            t1 = clock()
            stats.timings["update_origins"] = t1 - t0

            if bool(np.any(S.d_moved)):
                if self.mode.kind == "naive":
                    req = detect_occlusions_naive(table, state, live)
                else:
                    req, vis = verify_paths_error_based(table, state, self.mode.threshold,
                                                        self.seed, live)
                    stats.visibility_rays += vis
            t2 = clock()
            stats.timings["occlusions"] = t2 - t1

            slot_ids = np.arange(cap)
            for l in range(len(scene.lights)):
                mine = live & (table.light_idx == l)
                dm_c, cells = compute_dm_current(state.light_poses[l], self.dims[l], table.origin,
                                                 table.emit_dir, mine)
                bad = mine & (cells < 0)
                replaced |= bad
                table.cell[mine] = cells[mine]
                self.dm_current[l] = dm_c
            live &= ~replaced
            t3 = clock()
            stats.timings["dm_current"] = t3 - t2

            pruned = []
            for l in range(len(scene.lights)):
                slots = slot_ids[live & (table.light_idx == l)]
                u = prune_uniforms(self.seed, slots, table.epoch[slots], frame)
                hit = prune_paths(table.cell[slots], self.dm_current[l], self.dm_target[l], u)
                pruned.append(slots[hit])
            pruned_slots = np.sort(np.concatenate(pruned)) if pruned else pruned_slots
            stats.paths_pruned = int(pruned_slots.shape[0])
            stats.paths_replaced = int(replaced.sum())
            gone = np.concatenate([np.flatnonzero(replaced), pruned_slots])
            table.free(gone)
            req[gone] = -1
            t4 = clock()
            stats.timings["prune"] = t4 - t3

        t4 = clock()
        fills = []
        for l, light in enumerate(scene.lights):
            dm_c = self.dm_current[l]
            if dm_c is None:
                dm_c = self.dm_target[l].copy()
                dm_c.counts[:] = 0
                self.dm_current[l] = dm_c
            fills.append(fill_targets(dm_c, self.dm_target[l]))
        n_fill = int(sum(f.shape[0] for f in fills))
        slots = self._allocate_slots(pruned_slots, n_fill)
        cap = table.capacity
        if req.shape[0] < cap:
            req = np.concatenate([req, np.full(cap - req.shape[0], -1, dtype=np.int64)])
        regenerated = np.zeros(cap, dtype=np.bool_)
        at = 0
        for l, cells in enumerate(fills):
            n = cells.shape[0]
            if n == 0:
                continue
            mine = slots[at:at + n]
            at += n
            table.epoch[mine] += 1
            origins, dirs, _ = sample_emission_batch(state.light_poses[l], self.dims[l], cells,
                                                     self.seed, mine, table.epoch[mine], 0,
                                                     _rng.EMIT)
            table.origin[mine] = origins
            table.emit_dir[mine] = dirs
            table.light_idx[mine] = l
            table.cell[mine] = cells
            req[mine] = 0
            regenerated[mine] = True
        stats.paths_filled = n_fill
        t5 = clock()
        stats.timings["fill"] = t5 - t4

        todo = np.flatnonzero(req >= 0)
        rays = trace_paths(table, state, todo, req[todo], self.seed)
        stats.rays_traced = int(rays.sum())
        stats.timings["trace"] = clock() - t5
        stats.rays_reused = int(table.nseg[table.live].sum()) - stats.rays_traced

        self.retrace_start = req
        self.regenerated = regenerated
        self._pack_info(req, replaced, regenerated)
        self.last_frame = frame
        self.last_poses = [p.copy() for p in state.light_poses]
        self.state = state
        self.history.append(stats)
        return stats

    def _allocate_slots(self, pruned_slots, n):
        """Pruned slots first, then other free slots, then new columns."""
        table = self.table
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        free = np.flatnonzero(~table.live)
        others = np.setdiff1d(free, pruned_slots, assume_unique=True)
        order = np.concatenate([pruned_slots, others]).astype(np.int64)
        if order.shape[0] < n:
            old = table.capacity
            need = old + n - order.shape[0]
            table.grow(need)
            order = np.concatenate([order, np.arange(old, need, dtype=np.int64)])
        return order[:n]

    def _pack_info(self, req, replaced, regenerated):
        t = self.table
        cap = t.capacity
        rep = np.zeros(cap, dtype=np.bool_)
        rep[:replaced.shape[0]] = replaced
        rep |= ~t.live
        start = np.where(req > 0, req, 0)
        self.path_info = pack_path_info(np.maximum(t.cell, 0), np.maximum(t.nseg, 1), start, rep,
                                        t.live & ~regenerated)

    def run(self, frames):
        return [self.run_frame(f) for f in frames]


def run_frame(engine, frame):
    return engine.run_frame(frame)


def write_stats_csv(path, stats, include_timings=True):
    names = list(STAT_FIELDS) + (list(TIMING_FIELDS) if include_timings else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names, extrasaction="ignore")
        w.writeheader()
        for s in stats:
            w.writerow(s.row())
