"""Independent reference implementations used as test oracles."""

import numpy as np


def brute_nearest(origin, direction, tris, tmin=0.0, tmax=np.inf):
    """Nearest hit by plane intersection and edge-side tests; (t, index) or None."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    denom = n @ d
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("ij,ij->i", n, a - o) / denom
    p = o + t[:, None] * d
    inside = np.ones(len(tris), dtype=bool)
    for u, v in ((a, b), (b, c), (c, a)):
        inside &= np.einsum("ij,ij->i", np.cross(v - u, p - u), n) >= -1e-12 * np.einsum(
            "ij,ij->i", n, n)
    ok = inside & (denom != 0) & (t > tmin) & (t < tmax)
    if not ok.any():
        return None
    idx = np.flatnonzero(ok)
    k = idx[np.argmin(t[idx])]
    return float(t[k]), int(k)


def sampled_segment_hits_box(a, b, lo, hi, n=1000, pad=0.0):
    s = np.linspace(0.0, 1.0, n)[:, None]
    pts = a + s * (b - a)
    return bool(np.any(np.all((pts >= lo - pad) & (pts <= hi + pad), axis=1)))


def pathinfo_word(cell, seg_count, start, replace, reuse):
    """Bit layout assembled field by field with explicit powers of two."""
    word = 0
    for bit in range(22):
        if cell >> bit & 1:
            word += 2 ** bit
    for bit in range(4):
        if (seg_count - 1) >> bit & 1:
            word += 2 ** (22 + bit)
        if start >> bit & 1:
            word += 2 ** (26 + bit)
    if replace:
        word += 2 ** 30
    if reuse:
        word += 2 ** 31
    return word


def recompute_energies(engine):
    """Exact f32 energy chain along the stored object ids of every live path."""
    t = engine.table
    albedo = engine.scene.albedo
    B = t.max_bounces
    out = np.zeros(t.energy.shape, dtype=np.float32)
    live = np.flatnonzero(t.live)
    e = t.base_energy[t.light_idx[live]].astype(np.float32)
    for b in range(B):
        has = t.nph[live] > b
        oid = t.oid[b, live].astype(np.int64)
        rho = albedo[np.where(has, oid, 0)]
        e = np.where(has[:, None], (e.astype(np.float64) * rho).astype(np.float32), e)
        out[b, live] = np.where(has[:, None], e, 0.0)
    return out


def nearest_hits(origins, dirs, tmax, tris, tmin):
    """Nearest hit distance of many rays against few triangles, inf where none.

    Plane intersection followed by same-side edge tests, vectorised over rays.
    """
    o = np.asarray(origins, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    best = np.full(o.shape[0], np.inf)
    for a, b, c in np.asarray(tris, dtype=np.float64):
        n = np.cross(b - a, c - a)
        denom = d @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((a - o) @ n) / denom
        p = o + t[:, None] * d
        inside = np.ones(o.shape[0], dtype=bool)
        for u, v in ((a, b), (b, c), (c, a)):
            inside &= np.cross(v - u, p - u) @ n >= -1e-12 * (n @ n)
        ok = inside & (denom != 0) & (t > tmin) & (t <= tmax)
        best = np.where(ok & (t < best), t, best)
    return best
