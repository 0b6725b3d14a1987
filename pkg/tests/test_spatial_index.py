import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskaid.errors import EmptyLayer, KTooLarge
from deskaid.geo_core import GeoPoint, haversine_array
from deskaid.spatial_index import HubIndex, build_index, knn, nearest


def brute_knn(hub_lon, hub_lat, hub_ids, qlon, qlat, k, exclude=None):
    d = haversine_array(qlon, qlat, hub_lon, hub_lat)
    order = np.lexsort((hub_ids, d))
    if exclude is not None:
        order = order[hub_ids[order] != exclude]
    return hub_ids[order[:k]], d[order[:k]]


def random_hubs(rng, n, lon=(60.0, 75.0), lat=(29.0, 38.0)):
    return rng.uniform(*lon, n), rng.uniform(*lat, n)


def test_single_hub_index():
    idx = build_index([(GeoPoint(66.0, 34.0), 7, "school")])
    assert len(idx) == 1
    assert nearest(idx, GeoPoint(70.0, 30.0))[:2] == (7, "school")


def test_empty_index_rejected():
    with pytest.raises(EmptyLayer):
        build_index([])


def test_duplicate_coordinates_are_both_retained():
    p = GeoPoint(66.0, 34.0)
    idx = build_index([(p, 1, None), (p, 2, None)])
    assert len(idx) == 2
    assert [h for h, _ in knn(idx, p, 2)] == [1, 2]


def test_query_at_hub_location_returns_that_hub():
    idx = build_index([(GeoPoint(66.0, 34.0), 0, "a"), (GeoPoint(66.5, 34.5), 1, "b")])
    hub, cat, d = nearest(idx, GeoPoint(66.5, 34.5))
    assert (hub, cat, d) == (1, "b", 0.0)


def test_equidistant_hubs_lower_id_wins():
    # mirror images across the query meridian are at identical distance
    idx = build_index([(GeoPoint(66.1, 34.0), 9, None), (GeoPoint(65.9, 34.0), 4, None)])
    assert nearest(idx, GeoPoint(66.0, 34.0))[0] == 4
    assert [h for h, _ in knn(idx, GeoPoint(66.0, 34.0), 2)] == [4, 9]


def test_nearest_matches_brute_force_10k_hubs(rng):
    hl, ht = random_hubs(rng, 10_000)
    ids = rng.permutation(10_000).astype(np.int64)
    idx = HubIndex(hl, ht, ids)
    ql, qt = random_hubs(rng, 1000)
    got_ids, got_d, _ = idx.nearest_many(ql, qt)
    for i in range(1000):
        ref_id, ref_d = brute_knn(hl, ht, ids, ql[i], qt[i], 1)
        assert got_ids[i] == ref_id[0]
        assert got_d[i] == ref_d[0]


def test_nearest_on_a_lattice_with_many_ties(rng):
    # lattice hubs and lattice-midpoint queries produce exact distance ties
    g = np.arange(0.0, 1.0, 0.1)
    hl, ht = [a.ravel() + 66.0 for a in np.meshgrid(g, g)]
    ht = ht - 66.0
    idx = HubIndex(hl, ht)
    ql, qt = [a.ravel() for a in np.meshgrid(g[:-1] + 0.05 + 66.0, g[:-1] + 0.05)]
    got_ids, got_d, _ = idx.nearest_many(ql, qt)
    for i in range(len(ql)):
        ref_id, ref_d = brute_knn(hl, ht, idx.ids, ql[i], qt[i], 1)
        assert (got_ids[i], got_d[i]) == (ref_id[0], ref_d[0])


def test_knn_top5_matches_brute_force(rng):
    hl, ht = random_hubs(rng, 2000)
    idx = HubIndex(hl, ht)
    pos, d = idx.query(hl, ht, 5, exclude_ids=np.arange(2000))
    for i in range(2000):
        ref_id, ref_d = brute_knn(hl, ht, idx.ids, hl[i], ht[i], 5, exclude=i)
        assert np.array_equal(idx.ids[pos[i]], ref_id)
        assert np.array_equal(d[i], ref_d)


def test_knn_with_k_equal_to_size_sorts_everything(rng):
    hl, ht = random_hubs(rng, 30)
    idx = HubIndex(hl, ht)
    q = GeoPoint(66.0, 34.0)
    res = knn(idx, q, 30)
    ref_id, _ = brute_knn(hl, ht, idx.ids, q.lon, q.lat, 30)
    assert [h for h, _ in res] == list(ref_id)
    dists = [d for _, d in res]
    assert dists == sorted(dists)


def test_knn_k1_equals_nearest(rng):
    hl, ht = random_hubs(rng, 500)
    idx = HubIndex(hl, ht)
    for lon, lat in zip(*random_hubs(rng, 50)):
        q = GeoPoint(lon, lat)
        assert knn(idx, q, 1)[0] == (nearest(idx, q)[0], nearest(idx, q)[2])


def test_k_too_large():
    idx = HubIndex([66.0, 66.1], [34.0, 34.1])
    with pytest.raises(KTooLarge):
        idx.knn(GeoPoint(66.0, 34.0), 3)
    with pytest.raises(KTooLarge):
        idx.knn(GeoPoint(66.0, 34.0), 2, exclude_id=0)


def test_million_hub_build_answers_probes(rng):
    hl, ht = random_hubs(rng, 1_000_000)
    idx = HubIndex(hl, ht)
    ql, qt = random_hubs(rng, 100)
    got_ids, got_d, _ = idx.nearest_many(ql, qt)
    for i in range(100):
        ref_id, ref_d = brute_knn(hl, ht, idx.ids, ql[i], qt[i], 1)
        assert (got_ids[i], got_d[i]) == (ref_id[0], ref_d[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 60))
def test_nearest_distance_is_a_lower_bound(seed, n):
    rng = np.random.default_rng(seed)
    hl, ht = random_hubs(rng, n, lon=(-179.0, 179.0), lat=(-85.0, 85.0))
    idx = HubIndex(hl, ht)
    q = rng.uniform([-180, -90], [180, 90])
    nb = idx.nearest(GeoPoint(*q))
    assert nb.distance <= haversine_array(q[0], q[1], hl, ht).min()


def test_queries_are_order_independent(rng):
    hl, ht = random_hubs(rng, 3000)
    idx = HubIndex(hl, ht)
    ql, qt = random_hubs(rng, 200)
    perm = rng.permutation(200)
    a_ids, a_d, _ = idx.nearest_many(ql, qt)
    b_ids, b_d, _ = idx.nearest_many(ql[perm], qt[perm])
    assert np.array_equal(a_ids[perm], b_ids) and np.array_equal(a_d[perm], b_d)
