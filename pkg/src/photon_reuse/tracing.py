"""Path tracing and path-verification kernels over the struct-of-arrays path table.

Array conventions (C = path capacity, B = bounce budget):

* ``origin``/``emit_dir`` (C, 3): emission ray of each path.
* ``pos``/``nrm``/``outdir`` (B, C, 3): vertex position, shading normal facing
  the incoming ray, and the direction leaving the vertex.
* ``inc``/``oid``/``energy`` (B, C, ...): photon record fields.
* ``nph`` photons stored, ``nseg`` segments traced. A path that escaped has
  ``nseg == nph + 1``; its last segment is a ray.

The direction leaving vertex ``b`` is always drawn with counter ``b + 1`` of
the path's (slot, epoch) stream, so retracing from any vertex reproduces the
numbers a cold trace would have used there.
"""

from __future__ import annotations

import math

import numpy as np

from . import rng as _rng
from ._jit import kernel, prange
from .geometry import INF, scene_nearest, segment_box
from .lights import light_coords
from .store import NO_OBJECT


@kernel
def _onb(nx, ny, nz):
    # branchless orthonormal basis around a unit vector
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    return (1.0 + sign * nx * nx * a, sign * b, -sign * nx,
            b, sign + ny * ny * a, -ny)


@kernel
def bounce_direction(S, obj, nx, ny, nz, dx, dy, dz, seed, slot, epoch, counter):
    """Direction leaving a vertex; ``ok`` is False when the sample is absorbed."""
    u1 = _rng.uniform(seed, slot, epoch, counter, _rng.BOUNCE, 0)
    u2 = _rng.uniform(seed, slot, epoch, counter, _rng.BOUNCE, 1)
    phi = 2.0 * math.pi * u2
    gloss = S.obj_gloss[obj]
    if gloss > 0.0:
        dn = dx * nx + dy * ny + dz * nz
        ax, ay, az = dx - 2.0 * dn * nx, dy - 2.0 * dn * ny, dz - 2.0 * dn * nz
        cos_a = u1 ** (1.0 / (gloss + 1.0))
    else:
        ax, ay, az = nx, ny, nz
        cos_a = math.sqrt(1.0 - u1)
    sin_a = math.sqrt(max(0.0, 1.0 - cos_a * cos_a))
    tx, ty, tz, bx, by, bz = _onb(ax, ay, az)
    c, s = sin_a * math.cos(phi), sin_a * math.sin(phi)
    ox = tx * c + bx * s + ax * cos_a
    oy = ty * c + by * s + ay * cos_a
    oz = tz * c + bz * s + az * cos_a
    inv = 1.0 / math.sqrt(ox * ox + oy * oy + oz * oz)
    ox, oy, oz = ox * inv, oy * inv, oz * inv
    ok = ox * nx + oy * ny + oz * nz > 0.0
    return ok, ox, oy, oz


@kernel
def _facing(nx, ny, nz, dx, dy, dz):
    if nx * dx + ny * dy + nz * dz > 0.0:
        return -nx, -ny, -nz
    return nx, ny, nz


@kernel
def reflect_energy(e_in, albedo):
    return np.float32(np.float64(e_in) * albedo)


@kernel
def _clear_from(p, first, oid, energy, inc):
    for b in range(first, oid.shape[0]):
        oid[b, p] = NO_OBJECT
        for c in range(3):
            energy[b, p, c] = 0.0
            inc[b, p, c] = 0.0


@kernel
def _store_photon(S, p, b, obj, px, py, pz, nx, ny, nz, dx, dy, dz, e0, e1, e2,
                  pos, nrm, inc, oid, energy, radius, gather_radius):
    pos[b, p, 0] = px
    pos[b, p, 1] = py
    pos[b, p, 2] = pz
    nrm[b, p, 0] = nx
    nrm[b, p, 1] = ny
    nrm[b, p, 2] = nz
    inc[b, p, 0] = dx
    inc[b, p, 1] = dy
    inc[b, p, 2] = dz
    oid[b, p] = obj
    energy[b, p, 0] = e0
    energy[b, p, 1] = e1
    energy[b, p, 2] = e2
    radius[b, p] = gather_radius


@kernel
def trace_one(S, p, start, light_idx, epoch, origin, emit_dir, base_energy, pos, nrm, outdir,
              inc, oid, energy, radius, nph, nseg, seed, gather_radius):
    """Trace path ``p`` from segment ``start``; returns the number of rays cast."""
    B = pos.shape[0]
    if start == 0:
        ox, oy, oz = origin[p, 0], origin[p, 1], origin[p, 2]
        dx, dy, dz = emit_dir[p, 0], emit_dir[p, 1], emit_dir[p, 2]
        l = light_idx[p]
        e0, e1, e2 = base_energy[l, 0], base_energy[l, 1], base_energy[l, 2]
    else:
        ox, oy, oz = pos[start - 1, p, 0], pos[start - 1, p, 1], pos[start - 1, p, 2]
        dx, dy, dz = outdir[start - 1, p, 0], outdir[start - 1, p, 1], outdir[start - 1, p, 2]
        e0, e1, e2 = energy[start - 1, p, 0], energy[start - 1, p, 1], energy[start - 1, p, 2]
    ep = epoch[p]
    b = start
    while True:
        t, obj, nx, ny, nz = scene_nearest(S, ox, oy, oz, dx, dy, dz, S.eps, INF)
        if obj < 0:
            nph[p] = b
            nseg[p] = b + 1
            break
        nx, ny, nz = _facing(nx, ny, nz, dx, dy, dz)
        px, py, pz = ox + t * dx, oy + t * dy, oz + t * dz
        e0 = reflect_energy(e0, S.obj_albedo[obj, 0])
        e1 = reflect_energy(e1, S.obj_albedo[obj, 1])
        e2 = reflect_energy(e2, S.obj_albedo[obj, 2])
        _store_photon(S, p, b, obj, px, py, pz, nx, ny, nz, dx, dy, dz, e0, e1, e2,
                      pos, nrm, inc, oid, energy, radius, gather_radius)
        if b == B - 1:
            nph[p] = B
            nseg[p] = B
            break
        ok, qx, qy, qz = bounce_direction(S, obj, nx, ny, nz, dx, dy, dz, seed, p, ep, b + 1)
        if not ok:
            nph[p] = b + 1
            nseg[p] = b + 1
            break
        outdir[b, p, 0] = qx
        outdir[b, p, 1] = qy
        outdir[b, p, 2] = qz
        ox, oy, oz = px, py, pz
        dx, dy, dz = qx, qy, qz
        b += 1
    _clear_from(p, nph[p], oid, energy, inc)
    return nseg[p] - start


@kernel(parallel=True)
def trace_requests(S, req_slot, req_start, light_idx, epoch, origin, emit_dir, base_energy, pos,
                   nrm, outdir, inc, oid, energy, radius, nph, nseg, seed, gather_radius, rays):
    for r in prange(req_slot.shape[0]):
        rays[r] = trace_one(S, req_slot[r], req_start[r], light_idx, epoch, origin, emit_dir,
                            base_energy, pos, nrm, outdir, inc, oid, energy, radius, nph, nseg,
                            seed, gather_radius)


# ---------------------------------------------------------------------------
# conservative bounds test

@kernel
def _segment_ends(p, s, origin, emit_dir, pos, outdir, nph):
    """Endpoints of segment ``s``; escape segments come back as a unit-step ray."""
    if s == 0:
        ax, ay, az = origin[p, 0], origin[p, 1], origin[p, 2]
        dx, dy, dz = emit_dir[p, 0], emit_dir[p, 1], emit_dir[p, 2]
    else:
        ax, ay, az = pos[s - 1, p, 0], pos[s - 1, p, 1], pos[s - 1, p, 2]
        dx, dy, dz = outdir[s - 1, p, 0], outdir[s - 1, p, 1], outdir[s - 1, p, 2]
    if s < nph[p]:
        return ax, ay, az, pos[s, p, 0], pos[s, p, 1], pos[s, p, 2], False
    return ax, ay, az, ax + dx, ay + dy, az + dz, True


@kernel
def segment_flagged(S, ax, ay, az, bx, by, bz, is_ray):
    for k in range(S.t_lo.shape[0]):
        if S.d_moved[k] and segment_box(ax, ay, az, bx, by, bz, S.t_lo, S.t_hi, k, is_ray):
            return True
    return False


@kernel
def first_flagged(S, p, origin, emit_dir, pos, outdir, nph, nseg):
    for s in range(nseg[p]):
        ax, ay, az, bx, by, bz, is_ray = _segment_ends(p, s, origin, emit_dir, pos, outdir, nph)
        if segment_flagged(S, ax, ay, az, bx, by, bz, is_ray):
            return s
    return -1


@kernel(parallel=True)
def flag_naive(S, live, origin, emit_dir, pos, outdir, nph, nseg, out):
    for p in prange(live.shape[0]):
        out[p] = first_flagged(S, p, origin, emit_dir, pos, outdir, nph, nseg) if live[p] else -1


@kernel(parallel=True)
def flag_segments(S, live, origin, emit_dir, pos, outdir, nph, nseg, out):
    """Per-segment bounds flags, (B, C); used by diagnostics and the oracle tests."""
    for p in prange(live.shape[0]):
        for s in range(out.shape[0]):
            out[s, p] = False
        if not live[p]:
            continue
        for s in range(nseg[p]):
            ax, ay, az, bx, by, bz, is_ray = _segment_ends(p, s, origin, emit_dir, pos, outdir, nph)
            out[s, p] = segment_flagged(S, ax, ay, az, bx, by, bz, is_ray)


# ---------------------------------------------------------------------------
# energy-threshold verification

@kernel
def energy_close(e_old, e_new, threshold):
    d = np.float64(e_new) - np.float64(e_old)
    lim = threshold * np.float64(e_old)
    return -lim <= d <= lim


@kernel
def verify_one(S, p, threshold, light_idx, epoch, origin, emit_dir, base_energy, pos, nrm,
               outdir, inc, oid, energy, radius, nph, nseg, seed, gather_radius):
    """Walk the segments of path ``p`` and repair or truncate it in place.

    Returns (retrace start or -1, visibility rays cast).
    """
    B = pos.shape[0]
    tol = S.close_tol
    vis = 0
    moved_origin = False
    s = 0
    while s < nseg[p]:
        ax, ay, az, bx, by, bz, escape = _segment_ends(p, s, origin, emit_dir, pos, outdir, nph)
        on_moved = (not escape) and S.obj_moved[oid[s, p]]
        if not (moved_origin or on_moved or segment_flagged(S, ax, ay, az, bx, by, bz, escape)):
            s += 1
            continue
        if moved_origin and not escape:
            dx, dy, dz = bx - ax, by - ay, bz - az
            inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
            dx, dy, dz = dx * inv, dy * inv, dz * inv
        elif escape:
            dx, dy, dz = bx - ax, by - ay, bz - az
        elif s == 0:
            dx, dy, dz = emit_dir[p, 0], emit_dir[p, 1], emit_dir[p, 2]
        else:
            dx, dy, dz = outdir[s - 1, p, 0], outdir[s - 1, p, 1], outdir[s - 1, p, 2]
        vis += 1
        t, obj, nx, ny, nz = scene_nearest(S, ax, ay, az, dx, dy, dz, S.eps, INF)
        if obj < 0:
            if not escape:
                # the segment now leaves the scene
                if s > 0:
                    outdir[s - 1, p, 0] = dx
                    outdir[s - 1, p, 1] = dy
                    outdir[s - 1, p, 2] = dz
                nph[p] = s
                nseg[p] = s + 1
                _clear_from(p, s, oid, energy, inc)
            return -1, vis
        nx, ny, nz = _facing(nx, ny, nz, dx, dy, dz)
        px, py, pz = ax + t * dx, ay + t * dy, az + t * dz
        if s == 0:
            l = light_idx[p]
            f0, f1, f2 = base_energy[l, 0], base_energy[l, 1], base_energy[l, 2]
        else:
            f0, f1, f2 = energy[s - 1, p, 0], energy[s - 1, p, 1], energy[s - 1, p, 2]
        n0 = reflect_energy(f0, S.obj_albedo[obj, 0])
        n1 = reflect_energy(f1, S.obj_albedo[obj, 1])
        n2 = reflect_energy(f2, S.obj_albedo[obj, 2])
        accept = not escape and S.obj_gloss[obj] == 0.0 and S.obj_gloss[oid[s, p]] == 0.0
        if accept:
            accept = (energy_close(energy[s, p, 0], n0, threshold)
                      and energy_close(energy[s, p, 1], n1, threshold)
                      and energy_close(energy[s, p, 2], n2, threshold))
        if not accept:
            if s > 0:
                outdir[s - 1, p, 0] = dx
                outdir[s - 1, p, 1] = dy
                outdir[s - 1, p, 2] = dz
            _store_photon(S, p, s, obj, px, py, pz, nx, ny, nz, dx, dy, dz, n0, n1, n2,
                          pos, nrm, inc, oid, energy, radius, gather_radius)
            if s == B - 1:
                nph[p] = B
                nseg[p] = B
                return -1, vis
            ok, qx, qy, qz = bounce_direction(S, obj, nx, ny, nz, dx, dy, dz, seed, p, epoch[p],
                                              s + 1)
            if not ok:
                nph[p] = s + 1
                nseg[p] = s + 1
                _clear_from(p, s + 1, oid, energy, inc)
                return -1, vis
            outdir[s, p, 0] = qx
            outdir[s, p, 1] = qy
            outdir[s, p, 2] = qz
            nph[p] = s + 1
            return s + 1, vis
        ex, ey, ez = px - bx, py - by, pz - bz
        if ex * ex + ey * ey + ez * ez <= tol * tol:
            if moved_origin:
                # same destination seen from a moved vertex
                outdir[s - 1, p, 0] = dx
                outdir[s - 1, p, 1] = dy
                outdir[s - 1, p, 2] = dz
                inc[s, p, 0] = dx
                inc[s, p, 1] = dy
                inc[s, p, 2] = dz
            moved_origin = False
        else:
            if s > 0:
                outdir[s - 1, p, 0] = dx
                outdir[s - 1, p, 1] = dy
                outdir[s - 1, p, 2] = dz
            # keep the stored energy: it is the reference for later frames
            _store_photon(S, p, s, obj, px, py, pz, nx, ny, nz, dx, dy, dz, energy[s, p, 0],
                          energy[s, p, 1], energy[s, p, 2], pos, nrm, inc, oid, energy,
                          radius, gather_radius)
            moved_origin = True
        s += 1
    return -1, vis


@kernel(parallel=True)
def verify_error_based(S, live, threshold, light_idx, epoch, origin, emit_dir, base_energy, pos,
                       nrm, outdir, inc, oid, energy, radius, nph, nseg, seed, gather_radius,
                       retrace, vis):
    for p in prange(live.shape[0]):
        if live[p]:
            r, v = verify_one(S, p, threshold, light_idx, epoch, origin, emit_dir, base_energy,
                              pos, nrm, outdir, inc, oid, energy, radius, nph, nseg, seed,
                              gather_radius)
            retrace[p] = r
            vis[p] = v
        else:
            retrace[p] = -1
            vis[p] = 0


# ---------------------------------------------------------------------------
# light motion

@kernel
def update_origin_one(S, pose, p, origin, emit_dir, pos, inc, nph):
    """Re-anchor path ``p`` on the light's new pose; returns (valid, visibility rays)."""
    kind = int(pose[0])
    have = nph[p] > 0
    if kind >= 2:
        dx, dy, dz = emit_dir[p, 0], emit_dir[p, 1], emit_dir[p, 2]
        nx, ny, nz = pose[10], pose[11], pose[12]
        dn = dx * nx + dy * ny + dz * nz
        if dn <= 0.0:
            return False, 0
        if have:
            qx, qy, qz = pos[0, p, 0], pos[0, p, 1], pos[0, p, 2]
        else:
            qx, qy, qz = origin[p, 0] + dx, origin[p, 1] + dy, origin[p, 2] + dz
        t = ((qx - pose[1]) * nx + (qy - pose[2]) * ny + (qz - pose[3]) * nz) / dn
        if have and t <= 0.0:
            return False, 0
        ox, oy, oz = qx - t * dx, qy - t * dy, qz - t * dz
    else:
        ox, oy, oz = pose[1], pose[2], pose[3]
        if have:
            dx, dy, dz = pos[0, p, 0] - ox, pos[0, p, 1] - oy, pos[0, p, 2] - oz
            ln = math.sqrt(dx * dx + dy * dy + dz * dz)
            if ln <= S.eps:
                return False, 0
            dx, dy, dz = dx / ln, dy / ln, dz / ln
        else:
            dx, dy, dz = emit_dir[p, 0], emit_dir[p, 1], emit_dir[p, 2]
    ok, c0, c1, c2, c3 = light_coords(pose, ox, oy, oz, dx, dy, dz)
    if not ok:
        return False, 0
    vis = 0
    if have:
        vis = 1
        t, obj, _, _, _ = scene_nearest(S, ox, oy, oz, dx, dy, dz, S.eps, INF)
        if obj < 0:
            return False, vis
        ex = ox + t * dx - pos[0, p, 0]
        ey = oy + t * dy - pos[0, p, 1]
        ez = oz + t * dz - pos[0, p, 2]
        if ex * ex + ey * ey + ez * ez > S.close_tol * S.close_tol:
            return False, vis
        inc[0, p, 0] = dx
        inc[0, p, 1] = dy
        inc[0, p, 2] = dz
    origin[p, 0] = ox
    origin[p, 1] = oy
    origin[p, 2] = oz
    emit_dir[p, 0] = dx
    emit_dir[p, 1] = dy
    emit_dir[p, 2] = dz
    return True, vis


@kernel(parallel=True)
def update_origins(S, pose, light, live, light_idx, origin, emit_dir, pos, inc, nph, valid, vis):
    for p in prange(live.shape[0]):
        if live[p] and light_idx[p] == light:
            ok, v = update_origin_one(S, pose, p, origin, emit_dir, pos, inc, nph)
            valid[p] = ok
            vis[p] = v


@kernel(parallel=True)
def path_uniforms(seed, slots, epochs, counter, purpose, out):
    for i in prange(slots.shape[0]):
        out[i] = _rng.uniform(seed, slots[i], epochs[i], counter, purpose, 0)
