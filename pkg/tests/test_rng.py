import numpy as np
from hypothesis import given, strategies as st
from scipy import stats

from photon_reuse import rng as prng
from photon_reuse.rng import RandomStream, hash32, uniform

keys = st.tuples(st.integers(0, 2**63 - 1), st.integers(0, 2**40), st.integers(0, 2**31),
                 st.integers(0, 64), st.integers(1, 5), st.integers(0, 3))


@given(keys)
def test_uniform_is_a_pure_function_in_unit_interval(key):
    a = uniform(*key)
    assert a == uniform(*key)
    assert 0.0 <= a < 1.0


def test_hash32_is_a_bijection_on_a_sample():
    xs = np.arange(1 << 16)
    hs = {int(hash32(int(x))) for x in xs}
    assert len(hs) == len(xs)
    assert all(0 <= h < 2**32 for h in hs)


def test_streams_are_uniform_and_decorrelated():
    u = RandomStream(7).uniform(200_000, ndim=2)
    assert stats.kstest(u[:, 0], "uniform").pvalue > 0.01
    assert stats.kstest(u[:, 1], "uniform").pvalue > 0.01
    assert abs(np.corrcoef(u[:, 0], u[:, 1])[0, 1]) < 0.01
    v = RandomStream(7, epoch=1).uniform(200_000)
    assert abs(np.corrcoef(u[:, 0], v)[0, 1]) < 0.01


def test_key_components_all_matter():
    base = (1, 2, 3, 4, prng.BOUNCE, 0)
    seen = {uniform(*base)}
    for i in range(6):
        k = list(base)
        k[i] += 1
        seen.add(uniform(*k))
    assert len(seen) == 7


def test_random_stream_block_matches_scalar_draws():
    rs = RandomStream(99, prng.PRUNE, epoch=3, counter=5)
    block = rs.uniform(10, ndim=3, start=20)
    for i in range(10):
        for d in range(3):
            assert block[i, d] == uniform(99, 20 + i, 3, 5, prng.PRUNE, d)
    assert rs.with_counter(6).counter == 6
