import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from photon_reuse import rng as prng
from photon_reuse.geometry import RigidTransform, quat_from_axis_angle, quat_looking
from photon_reuse.lights import (DistributionMap, Light, LightError, canonical_coords, cell_domain,
                                 compute_dm_current, fill_dm, init_dm_target, normalize_dims,
                                 parametrise, parametrise_many, prune_paths, prune_probability,
                                 sample_emission_batch, sample_in_cell)
from photon_reuse.rng import RandomStream

DOWN = quat_looking([0, -1, 0])


def light(kind, **kw):
    pos = kw.pop("position", [0.0, 2.0, 0.0])
    rot = kw.pop("rotation", DOWN)
    return Light(kind, [10.0, 10.0, 10.0], [(0, RigidTransform(rot, pos))], **kw)


DISC = light("disc_area", radius=0.5)
RECT = light("rect_area", half_extents=(0.4, 0.3))
POINT = light("point")
SPOT = light("spot", cone_angle=60.0)


def unrestricted(lt, n, seed=0):
    pose = lt.pose_at(0)
    return sample_emission_batch(pose, [1, 1, 1, 1], np.zeros(n, dtype=np.int64), seed,
                                 np.arange(n), np.zeros(n, dtype=np.int64))


def test_light_validation():
    with pytest.raises(LightError):
        light("spot", cone_angle=180.0)
    with pytest.raises(LightError):
        light("disc_area", radius=0.0)
    with pytest.raises(LightError):
        Light("laser", [1, 1, 1], [(0, RigidTransform())])
    with pytest.raises(LightError):
        Light("point", [-1, 1, 1], [(0, RigidTransform())])


def test_point_light_single_cell():
    o, d, _ = unrestricted(POINT, 100)
    for oi, di in zip(o, d):
        assert parametrise(POINT, [1, 1], oi, di) == 0


def test_rect_quadrant_is_row_major():
    pose = RECT.pose_at(0)
    tangent, bitangent, normal = pose[4:7], pose[7:10], pose[10:13]
    origin = pose[1:4] + 0.2 * tangent + 0.1 * bitangent
    assert parametrise(pose, [2, 2, 1, 1], origin, normal) == 3
    origin = pose[1:4] - 0.2 * tangent + 0.1 * bitangent
    assert parametrise(pose, [2, 2, 1, 1], origin, normal) == 1


def test_off_surface_or_backward_emission_is_invalid():
    pose = DISC.pose_at(0)
    n = pose[10:13]
    assert parametrise(pose, [2, 2, 2, 2], pose[1:4] + 0.1 * n, n) is None
    assert parametrise(pose, [2, 2, 2, 2], pose[1:4], -n) is None
    assert parametrise(pose, [2, 2, 2, 2], pose[1:4] + 0.6 * pose[4:7], n) is None


@pytest.mark.parametrize("lt, dims", [(DISC, (4, 4, 8, 8)), (RECT, (4, 4, 8, 8)),
                                      (POINT, (1, 1, 8, 8)), (SPOT, (1, 1, 8, 8))])
def test_emission_round_trip(lt, dims):
    pose = lt.pose_at(0)
    n = 100_000
    o, d, _ = unrestricted(lt, n, seed=3)
    cells = parametrise_many(pose, dims, o, d)
    assert np.all(cells >= 0)
    o2, d2, _ = sample_emission_batch(pose, dims, cells, 9, np.arange(n), np.ones(n, dtype=np.int64))
    assert np.array_equal(parametrise_many(pose, dims, o2, d2), cells)


@pytest.mark.parametrize("lt", [DISC, RECT, POINT, SPOT])
def test_emission_samples_on_surface_and_in_domain(lt):
    pose = lt.pose_at(0)
    o, d, pdf = unrestricted(lt, 5000)
    n = pose[10:13]
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.all(pdf > 0)
    if lt.is_area:
        assert np.all(np.abs((o - pose[1:4]) @ n) < 1e-6)
        assert np.all(d @ n > 0)
    else:
        assert np.all(np.linalg.norm(o - pose[1:4], axis=1) < 1e-6)
        if lt.kind == "spot":
            assert np.all(d @ n > pose[15])


def test_cell_domain_examples():
    dom = cell_domain([2], 0)
    assert dom.lo.tolist() == [0.0] and dom.hi.tolist() == [0.5]
    dom = cell_domain([8, 8, 64, 64], 0)
    assert dom.lo.tolist() == [0, 0, 0, 0]
    assert dom.hi.tolist() == [1 / 8, 1 / 8, 1 / 64, 1 / 64]
    with pytest.raises(LightError):
        cell_domain([2, 2], 4)


def test_cell_domains_tile_the_unit_box():
    dims = (2, 3, 4, 5)
    n = int(np.prod(dims))
    doms = [cell_domain(dims, c) for c in range(n)]
    lo = np.array([d.lo for d in doms])
    hi = np.array([d.hi for d in doms])
    assert np.prod(hi - lo, axis=1).sum() == pytest.approx(1.0)
    pts = np.random.default_rng(0).uniform(0, 1, (5000, 4))
    inside = np.all((pts[:, None] >= lo[None]) & (pts[:, None] < hi[None]), axis=2)
    assert np.all(inside.sum(axis=1) == 1)


def test_single_cell_sampling_matches_cosine_emission():
    pose = DISC.pose_at(0)
    n = 100_000
    rng = np.random.default_rng(1)
    theta = np.empty(n)
    o, d, _ = sample_emission_batch(pose, [1, 1, 1, 1], np.zeros(n, dtype=np.int64), 42,
                                    np.arange(n), np.zeros(n, dtype=np.int64))
    theta = np.arccos(np.clip(d @ pose[10:13], -1, 1))
    # cosine-weighted emission: P(theta' <= theta) = sin^2(theta)
    assert stats.kstest(theta, lambda t: np.sin(t) ** 2).pvalue > 0.01
    # same law from an independent reference sampler
    ref = np.arcsin(np.sqrt(rng.uniform(size=n)))
    assert stats.ks_2samp(theta, ref).pvalue > 0.01
    r2 = np.sum((o - pose[1:4]) ** 2, axis=1) / 0.25
    assert stats.kstest(r2, "uniform").pvalue > 0.01


def test_sample_in_cell_round_trip_every_cell():
    pose = RECT.pose_at(0)
    dims = (2, 2, 2, 2)
    for cell in range(16):
        for k in range(1000):
            s = sample_in_cell(pose, dims, cell, RandomStream(5, prng.EMIT, epoch=cell), stream=k)
            assert parametrise(pose, dims, s.origin, s.dir) == cell


def test_half_disc_cell_keeps_local_y_non_negative():
    pose = DISC.pose_at(0)
    bitangent = pose[7:10]
    for k in range(2000):
        s = sample_in_cell(pose, (1, 2, 1, 1), 0, RandomStream(3, prng.EMIT), stream=k)
        assert (s.origin - pose[1:4]) @ bitangent >= -1e-12


def test_init_dm_target_examples():
    pose = DISC.pose_at(0)
    assert init_dm_target(pose, [1, 1, 1, 1], 1000, 0).counts.tolist() == [1000]
    n = 10 ** 6
    dm = init_dm_target(POINT.pose_at(0), [4], n, 0)
    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(dm.counts - n / 4) <= 4 * sigma)
    with pytest.raises(LightError):
        init_dm_target(pose, [2, 0, 2, 2], 10, 0)


@given(st.integers(1, 3000), st.integers(0, 2**40))
def test_init_dm_target_conserves_path_count(n, seed):
    assert init_dm_target(RECT.pose_at(0), (2, 2, 4, 4), n, seed).total == n


def test_compute_dm_current_fixpoint_and_total_invalidation():
    pose = DISC.pose_at(0)
    dims = (2, 2, 4, 4)
    dm_t = init_dm_target(pose, dims, 2000, 1)
    cells, o, d = fill_dm(DistributionMap.zeros(dims), dm_t, pose, 7)
    dm_c, got = compute_dm_current(pose, dims, o, d, np.ones(len(o), dtype=bool))
    assert np.array_equal(dm_c.counts, dm_t.counts)
    assert np.array_equal(got, cells)
    flipped = Light("disc_area", [1, 1, 1], [(0, RigidTransform(quat_looking([0, 1, 0]),
                                                                 [0.0, 2.0, 0.0]))], radius=0.5)
    dm_c, got = compute_dm_current(flipped.pose_at(0), dims, o, d, np.ones(len(o), dtype=bool))
    assert dm_c.total == 0 and np.all(got == -1)


def test_compute_dm_current_matches_serial_recount():
    pose = SPOT.pose_at(0)
    dims = (1, 1, 4, 8)
    o, d, _ = unrestricted(SPOT, 3000, seed=4)
    d[::7] *= -1  # some invalid
    active = np.ones(3000, dtype=bool)
    active[::5] = False
    dm, cells = compute_dm_current(pose, dims, o, d, active)
    ref = np.zeros(32, dtype=np.int64)
    for i in range(3000):
        c = parametrise(pose, dims, o[i], d[i]) if active[i] else None
        assert cells[i] == (-1 if c is None else c)
        if c is not None:
            ref[c] += 1
    assert np.array_equal(dm.counts, ref)


def test_prune_probability_examples():
    assert prune_probability(4, 2) == 0.5
    assert prune_probability(7, 7) == 0.0
    assert prune_probability(10, 0) == 1.0
    assert prune_probability(0, 0) == 0.0
    assert prune_probability(3, 5) == 0.0


def overfull(c, t):
    dm_c = DistributionMap((1,), np.array([c]))
    dm_t = DistributionMap((1,), np.array([t]))
    return np.zeros(c, dtype=np.int64), dm_c, dm_t


def test_prune_binomial_concentration():
    cells, dm_c, dm_t = overfull(1000, 600)
    u = RandomStream(11, prng.PRUNE).uniform(1000)
    pruned = prune_paths(cells, dm_c, dm_t, u)
    assert abs(len(pruned) - 400) <= 62
    assert dm_c.counts[0] == 1000 - len(pruned)


def test_prune_edge_cases():
    cells, dm_c, dm_t = overfull(50, 50)
    assert len(prune_paths(cells, dm_c, dm_t, np.zeros(50))) == 0
    cells, dm_c, dm_t = overfull(50, 0)
    assert len(prune_paths(cells, dm_c, dm_t, np.full(50, 0.999))) == 50
    assert dm_c.counts[0] == 0


def test_prune_marking_is_order_invariant():
    rng = np.random.default_rng(2)
    cells = rng.integers(0, 8, 4000)
    dm_c = DistributionMap((8,), np.bincount(cells, minlength=8))
    dm_t = DistributionMap((8,), rng.integers(200, 700, 8))
    u = rng.uniform(size=4000)
    a = prune_paths(cells, dm_c.copy(), dm_t, u)
    perm = rng.permutation(4000)
    b = prune_paths(cells[perm], dm_c.copy(), dm_t, u[perm])
    assert np.array_equal(np.sort(perm[b]), a)


def test_fill_examples():
    pose = RECT.pose_at(0)
    dims = (2, 2, 2, 2)
    dm_t = init_dm_target(pose, dims, 500, 0)
    cells, o, d = fill_dm(dm_t.copy(), dm_t, pose, 1)
    assert len(cells) == 0
    dm_c = DistributionMap.zeros(dims)
    cells, o, d = fill_dm(dm_c, dm_t, pose, 1)
    assert len(cells) == dm_t.total
    assert np.array_equal(np.bincount(cells, minlength=16), dm_t.counts)
    assert np.array_equal(parametrise_many(pose, dims, o, d), cells)
    partial = DistributionMap(dims, np.maximum(dm_t.counts - 3, 0))
    partial.counts[0] = dm_t.counts[0] + 10
    before = partial.counts.copy()
    fill_dm(partial, dm_t, pose, 1)
    assert np.all(partial.counts >= dm_t.counts)
    under = before < dm_t.counts
    assert np.array_equal(partial.counts[under], dm_t.counts[under])


def test_normalize_dims():
    assert normalize_dims((8, 8), 0).tolist() == [1, 1, 8, 8]
    with pytest.raises(LightError):
        normalize_dims((8, 8), 2)
    with pytest.raises(LightError):
        normalize_dims((2, 2, 8, 8), 1)
    with pytest.raises(LightError):
        normalize_dims((4096, 4096, 1, 1), 2)


def test_canonical_coords_match_warp():
    pose = light("rect_area", half_extents=(1.0, 1.0),
                 rotation=quat_from_axis_angle([1, 0, 0], 0.3)).pose_at(0)
    s = sample_in_cell(pose, (1, 1, 1, 1), 0, RandomStream(0, prng.EMIT))
    c = canonical_coords(pose, s.origin, s.dir)
    assert c is not None and np.all((c >= 0) & (c < 1))
