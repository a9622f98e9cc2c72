"""Photon map storage: 32-byte photon records in a (bounce, path) grid and the
packed 32-bit per-path status word.

PathInfo bit layout, low to high::

    0-21   distribution-map cell id
    22-25  segment count - 1   (1..16 segments)
    26-29  retrace-start segment
    30     replace path
    31     reuse light origin/direction
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

PHOTON_DTYPE = np.dtype([
    ("incoming", "<f4", (3,)),
    ("object_id", "<u4"),
    ("energy", "<f4", (3,)),
    ("radius", "<f4"),
])
assert PHOTON_DTYPE.itemsize == 32

PATHINFO_DTYPE = np.dtype("<u4")
NO_OBJECT = 0xFFFFFFFF
MAX_BOUNCES = 16

CELL_BITS = 22
CELL_MASK = (1 << CELL_BITS) - 1
SEG_SHIFT = 22
START_SHIFT = 26
REPLACE_BIT = 1 << 30
REUSE_LIGHT_BIT = 1 << 31

DUMP_MAGIC = b"PHM1"
_HEADER = struct.Struct("<4sIII")

MIB = float(1 << 20)


class StoreError(ValueError):
    pass


@dataclass(frozen=True)
class PathInfo:
    cell: int
    seg_count: int
    retrace_start: int
    replace: bool
    reuse_light: bool


def encode_path_info(cell, seg_count, retrace_start, replace, reuse_light):
    if not 0 <= cell <= CELL_MASK:
        raise StoreError(f"cell id {cell} does not fit in {CELL_BITS} bits")
    if not 1 <= seg_count <= MAX_BOUNCES:
        raise StoreError(f"segment count {seg_count} outside 1..{MAX_BOUNCES}")
    if not 0 <= retrace_start <= 15:
        raise StoreError(f"retrace start {retrace_start} outside 0..15")
    word = cell | (seg_count - 1) << SEG_SHIFT | retrace_start << START_SHIFT
    if replace:
        word |= REPLACE_BIT
    if reuse_light:
        word |= REUSE_LIGHT_BIT
    return word


def decode_path_info(word):
    word = int(word)
    return PathInfo(word & CELL_MASK, ((word >> SEG_SHIFT) & 0xF) + 1,
                    (word >> START_SHIFT) & 0xF, bool(word & REPLACE_BIT),
                    bool(word & REUSE_LIGHT_BIT))


def pack_path_info(cells, seg_counts, retrace_start, replace, reuse_light):
    """Vectorised encode; out-of-range inputs are clipped into their fields."""
    cells = np.clip(np.asarray(cells, dtype=np.int64), 0, CELL_MASK).astype(np.uint32)
    segs = np.clip(np.asarray(seg_counts, dtype=np.int64), 1, MAX_BOUNCES).astype(np.uint32) - 1
    starts = np.clip(np.asarray(retrace_start, dtype=np.int64), 0, 15).astype(np.uint32)
    word = cells | segs << np.uint32(SEG_SHIFT) | starts << np.uint32(START_SHIFT)
    word |= np.where(replace, np.uint32(REPLACE_BIT), np.uint32(0))
    word |= np.where(reuse_light, np.uint32(REUSE_LIGHT_BIT), np.uint32(0))
    return word.astype(PATHINFO_DTYPE)


def unpack_path_info(words):
    w = np.asarray(words, dtype=np.uint32)
    return (w & np.uint32(CELL_MASK)).astype(np.int64), ((w >> SEG_SHIFT) & 0xF).astype(np.int64) + 1, \
        ((w >> START_SHIFT) & 0xF).astype(np.int64), (w & np.uint32(REPLACE_BIT)) != 0, \
        (w & np.uint32(REUSE_LIGHT_BIT)) != 0


class PhotonMap:
    """Row ``b`` holds the b-th photon of every path; flat index is b * n_paths + p."""

    def __init__(self, n_paths, max_bounces):
        if not 1 <= max_bounces <= MAX_BOUNCES:
            raise StoreError(f"max_bounces must lie in 1..{MAX_BOUNCES}")
        self.n_paths = int(n_paths)
        self.max_bounces = int(max_bounces)
        self.flat = np.zeros(self.n_paths * self.max_bounces, dtype=PHOTON_DTYPE)
        self.flat["object_id"] = NO_OBJECT

    @property
    def grid(self):
        return self.flat.reshape(self.max_bounces, self.n_paths)

    def index(self, bounce, path):
        if not (0 <= bounce < self.max_bounces and 0 <= path < self.n_paths):
            raise StoreError(f"photon ({bounce}, {path}) out of range "
                             f"({self.max_bounces} x {self.n_paths})")
        return bounce * self.n_paths + path

    def photon_at(self, bounce, path):
        """Writable view of one record."""
        return self.flat[self.index(bounce, path):][:1]

    def fields(self):
        g = self.grid
        return g["incoming"], g["object_id"], g["energy"], g["radius"]

    def resized(self, n_paths):
        """Copy into a wider map; new columns are empty."""
        out = PhotonMap(n_paths, self.max_bounces)
        keep = min(n_paths, self.n_paths)
        out.grid[:, :keep] = self.grid[:, :keep]
        return out

    def tobytes(self):
        return self.flat.tobytes()


def dump_photon_map(pmap, path):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, pmap.n_paths, pmap.max_bounces, 0))
        fh.write(pmap.tobytes())


def load_photon_map(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise StoreError(f"{path}: truncated photon-map header")
    magic, n_paths, max_bounces, _ = _HEADER.unpack_from(data)
    if magic != DUMP_MAGIC:
        raise StoreError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + n_paths * max_bounces * PHOTON_DTYPE.itemsize
    if len(data) != expected:
        raise StoreError(f"{path}: expected {expected} bytes, found {len(data)}")
    pmap = PhotonMap(n_paths, max_bounces)
    pmap.flat[:] = np.frombuffer(data, dtype=PHOTON_DTYPE, offset=_HEADER.size)
    return pmap


def memory_footprint(n_paths, max_bounces, dm_dims, area_light=True):
    """Reuse-state memory in MiB, without allocating anything."""
    cells = 1
    for d in dm_dims:
        cells *= int(d)
    if n_paths == 0:
        cells = 0
    out = {
        "path_info": 4 * n_paths / MIB,
        "origin_positions": (12 * n_paths if area_light else 0) / MIB,
        "distribution_maps": 2 * 4 * cells / MIB,
        "pruned_array": 4 * n_paths / MIB,
        "photon_map": PHOTON_DTYPE.itemsize * n_paths * max_bounces / MIB,
    }
    out["reuse_lights"] = (out["path_info"] + out["origin_positions"]
                           + out["distribution_maps"] + out["pruned_array"])
    out["reuse_objects"] = out["path_info"] + out["origin_positions"]
    out["total"] = out["reuse_lights"] + out["photon_map"]
    return out
