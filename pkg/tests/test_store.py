import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import pathinfo_word
from photon_reuse.store import (PATHINFO_DTYPE, PHOTON_DTYPE, PathInfo, PhotonMap, StoreError,
                                decode_path_info, dump_photon_map, encode_path_info,
                                load_photon_map, memory_footprint, pack_path_info,
                                unpack_path_info)


def test_record_sizes():
    assert PHOTON_DTYPE.itemsize == 32
    assert PATHINFO_DTYPE.itemsize == 4
    assert PhotonMap(3, 2).tobytes().__len__() == 3 * 2 * 32


def test_encode_examples():
    assert encode_path_info(0, 1, 0, False, False) == 0x00000000
    assert encode_path_info(5, 7, 0, False, True) == 0x81800005
    assert encode_path_info(5, 7, 0, False, True) == pathinfo_word(5, 7, 0, False, True)


@pytest.mark.parametrize("args", [(1 << 22, 1, 0, False, False), (0, 0, 0, False, False),
                                  (0, 17, 0, False, False), (0, 1, 16, False, False),
                                  (-1, 1, 0, False, False)])
def test_encode_range_errors(args):
    with pytest.raises(StoreError):
        encode_path_info(*args)


@given(st.integers(0, (1 << 22) - 1), st.integers(1, 16), st.integers(0, 15), st.booleans(),
       st.booleans())
def test_round_trip_and_bit_oracle(cell, seg, start, rep, reuse):
    word = encode_path_info(cell, seg, start, rep, reuse)
    assert word == pathinfo_word(cell, seg, start, rep, reuse)
    assert decode_path_info(word) == PathInfo(cell, seg, start, rep, reuse)


def test_vectorised_round_trip_million():
    rng = np.random.default_rng(0)
    n = 10 ** 6
    cells = rng.integers(0, 1 << 22, n)
    segs = rng.integers(1, 17, n)
    starts = rng.integers(0, 16, n)
    rep = rng.integers(0, 2, n).astype(bool)
    reuse = rng.integers(0, 2, n).astype(bool)
    words = pack_path_info(cells, segs, starts, rep, reuse)
    assert words.dtype == np.uint32
    for got, want in zip(unpack_path_info(words), (cells, segs, starts, rep, reuse)):
        assert np.array_equal(got, want)
    for i in range(0, n, 99_991):
        assert int(words[i]) == encode_path_info(int(cells[i]), int(segs[i]), int(starts[i]),
                                                 bool(rep[i]), bool(reuse[i]))


def test_photon_addressing():
    pm = PhotonMap(100, 7)
    assert pm.index(0, 0) == 0
    assert pm.index(3, 7) == 307
    with pytest.raises(StoreError):
        pm.index(7, 0)
    with pytest.raises(StoreError):
        pm.photon_at(0, 100)
    rec = pm.photon_at(3, 7)
    rec["energy"] = [1.0, 2.0, 3.0]
    assert pm.grid[3, 7]["energy"].tolist() == [1.0, 2.0, 3.0]
    assert pm.flat[307]["energy"].tolist() == [1.0, 2.0, 3.0]


def test_no_aliasing_exhaustive():
    pm = PhotonMap(13, 5)
    for b in range(5):
        for p in range(13):
            pm.photon_at(b, p)["object_id"] = b * 13 + p
    assert np.array_equal(pm.flat["object_id"], np.arange(65))


def test_new_map_marks_empty_photons():
    pm = PhotonMap(4, 3)
    assert np.all(pm.flat["object_id"] == 0xFFFFFFFF)
    with pytest.raises(StoreError):
        PhotonMap(4, 17)


def test_dump_round_trip(tmp_path):
    pm = PhotonMap(10, 3)
    pm.flat["energy"] = np.random.default_rng(1).uniform(size=(30, 3))
    pm.flat["object_id"][::2] = 4
    path = tmp_path / "map.phm"
    dump_photon_map(pm, path)
    data = path.read_bytes()
    assert data[:4] == b"PHM1" and len(data) == 16 + 30 * 32
    again = load_photon_map(path)
    assert again.tobytes() == pm.tobytes()
    path.write_bytes(data[:-1])
    with pytest.raises(StoreError):
        load_photon_map(path)
    path.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(StoreError):
        load_photon_map(path)


def test_memory_footprint_examples():
    m = memory_footprint(5_000_000, 7, (32, 32, 32, 32), True)
    assert round(m["photon_map"]) == 1068
    assert m["path_info"] == pytest.approx(19.07, abs=0.005)
    assert m["origin_positions"] == pytest.approx(57.22, abs=0.005)
    assert m["distribution_maps"] == pytest.approx(8.00, abs=0.005)
    assert m["pruned_array"] == pytest.approx(19.07, abs=0.005)
    assert m["reuse_lights"] == pytest.approx(103.36, abs=0.01)
    assert all(v == 0 for v in memory_footprint(0, 7, (4, 4), True).values())
    assert memory_footprint(1 << 20, 1, (1,), False)["photon_map"] == 32.0
