import numpy as np
import pytest

from deskaid.errors import FeaturizationFailed, GridTooSmall, MissingLayer, NoDataCell, OutOfExtent
from deskaid.features import (BASE7, build_matrix, build_schema, derive_slope_raster, featurize_many,
                              featurize_point, prepare_layers, read_matrix, sample_raster, sample_raster_many,
                              vocabulary_with_unknown, write_matrix)
from deskaid.geo_core import GeoPoint, haversine_array, polygon_centroid
from deskaid.ingest import LayerCatalog, RasterGrid, parse_ascii_grid, parse_conflict_csv, parse_geojson_layer
from deskaid.sampling import CLEAR, SamplePoint, SampleSet, sample_random_negatives

M_PER_DEG = 6_371_000.0 * np.pi / 180.0


def grid(values, cell=0.01, nodata=-9999.0):
    values = np.asarray(values, dtype=float)
    return RasterGrid(values.shape[1], values.shape[0], 66.0, 34.0, cell, nodata, values)


def test_slope_flat_is_zero():
    s = derive_slope_raster(grid(np.full((5, 6), 812.0)))
    assert np.all(s.values[1:-1, 1:-1] == 0.0)
    assert np.all(s.values[0] == -9999.0) and np.all(s.values[:, -1] == -9999.0)


def test_slope_north_facing_plane_is_one_percent():
    # rises 1 m per 100 m northward; row 0 is the northernmost row
    dy = 0.01 * M_PER_DEG
    rows = np.arange(6)[::-1] * dy * 0.01
    s = derive_slope_raster(grid(np.repeat(rows[:, None], 7, axis=1)))
    np.testing.assert_allclose(s.values[1:-1, 1:-1], 1.0, rtol=1e-12)


def test_slope_east_facing_plane_matches_cell_width():
    cols = np.arange(7, dtype=float)
    z = np.tile(cols * 10.0, (5, 1))  # 10 m per column
    s = derive_slope_raster(grid(z))
    lat = 34.0 + (5 - np.arange(5) - 0.5) * 0.01
    want = 100.0 * 10.0 / (0.01 * M_PER_DEG * np.cos(np.radians(lat)))
    np.testing.assert_allclose(s.values[1:-1, 1:-1], np.repeat(want[1:-1, None], 5, axis=1), rtol=1e-12)


def test_slope_nodata_spreads_to_its_window():
    z = np.full((6, 6), 100.0)
    z[2, 2] = -9999.0
    s = derive_slope_raster(grid(z)).values
    assert np.all(s[1:4, 1:4] == -9999.0)
    assert s[4, 4] == 0.0


def test_slope_needs_3x3():
    with pytest.raises(GridTooSmall):
        derive_slope_raster(grid(np.zeros((2, 5))))


def test_sample_raster_matches_index_arithmetic(rng):
    g = grid(rng.uniform(0, 100, (8, 11)))
    rows = rng.integers(0, 8, 300)
    cols = rng.integers(0, 11, 300)
    fx, fy = rng.uniform(0.01, 0.99, (2, 300))
    lon = 66.0 + (cols + fx) * 0.01
    lat = g.ytop - (rows + fy) * 0.01
    vals, status = sample_raster_many(g, lon, lat)
    assert np.all(status == 0)
    assert np.array_equal(vals, g.values[rows, cols])


def test_sample_raster_errors():
    z = np.ones((3, 3))
    z[1, 1] = -9999.0
    g = grid(z)
    assert sample_raster(g, GeoPoint(66.005, 34.005)) == 1.0
    with pytest.raises(NoDataCell):
        sample_raster(g, GeoPoint(66.015, 34.015))
    with pytest.raises(OutOfExtent):
        sample_raster(g, GeoPoint(65.99, 34.01))


def test_schema_sets_and_vocabulary():
    exp = build_schema("expanded18", vocabularies={"education": ["school", "university", "school"]})
    base = build_schema("base7")
    assert len(exp) == 18 and tuple(base.names) == BASE7
    assert exp.features[14].vocabulary == ("unknown", "school", "university")
    assert vocabulary_with_unknown(["unknown", "a"]) == ("unknown", "a")
    assert exp.fingerprint != base.fingerprint
    with pytest.raises(ValueError):
        build_schema("base8")


@pytest.fixture(scope="module")
def world_layers(small_world):
    out, catalog = small_world
    schema = build_schema("expanded18", catalog)
    return catalog, schema, prepare_layers(catalog, schema)


@pytest.fixture(scope="module")
def world_points(small_world):
    _, catalog = small_world
    border = parse_geojson_layer(catalog["border"].path, "polygon")[0]
    hazards = parse_geojson_layer(catalog["hazard"].path, "polygon")
    return sample_random_negatives(border, hazards, 300, seed=1)


def brute_min(lon, lat, hub_lon, hub_lat):
    return haversine_array(lon[:, None], lat[:, None], hub_lon[None, :], hub_lat[None, :]).min(axis=1)


def test_distances_match_brute_force(world_layers, world_points):
    catalog, schema, layers = world_layers
    lon = np.array([p.lon for p in world_points])
    lat = np.array([p.lat for p in world_points])
    X, status = featurize_many(lon, lat, layers, schema)
    assert np.all(status == 0)
    col = {n: X[:, j] for j, n in enumerate(schema.names)}

    roads = parse_geojson_layer(catalog["road"].path, "line")
    v = np.vstack([r.vertices for r in roads])
    np.testing.assert_allclose(col["dist_road"], brute_min(lon, lat, v[:, 0], v[:, 1]), rtol=1e-12)

    bld = [polygon_centroid(b) for b in parse_geojson_layer(catalog["building"].path, "polygon")]
    np.testing.assert_allclose(col["dist_building"],
                               brute_min(lon, lat, np.array([c.lon for c in bld]), np.array([c.lat for c in bld])),
                               rtol=1e-12)

    border = parse_geojson_layer(catalog["border"].path, "polygon")[0].exterior
    np.testing.assert_allclose(col["dist_border"], brute_min(lon, lat, border[:, 0], border[:, 1]), rtol=1e-12)

    ev = parse_conflict_csv(catalog["conflict"].path)
    el = np.array([e.location.lon for e in ev])
    et = np.array([e.location.lat for e in ev])
    d = haversine_array(lon[:, None], lat[:, None], el[None, :], et[None, :])
    nearest = np.argmin(d, axis=1)
    np.testing.assert_allclose(col["dist_conflict"], d.min(axis=1), rtol=1e-12)
    assert np.array_equal(col["estimated_deaths"], [ev[k].estimated_deaths for k in nearest])

    pop = parse_ascii_grid(catalog["population"].path)
    np.testing.assert_array_equal(col["population_density"], sample_raster_many(pop, lon, lat)[0])


def test_categorical_codes_follow_nearest_hub(world_layers, world_points):
    catalog, schema, layers = world_layers
    spec = catalog["education"]
    feats = parse_geojson_layer(spec.path, "point")
    vocab = schema.features[schema.names.index("education_type")].vocabulary
    for p in world_points[:40]:
        fv = featurize_point(p.location, layers, schema).as_dict()
        d = haversine_array(p.lon, p.lat, np.array([f.lon for f in feats]), np.array([f.lat for f in feats]))
        k = int(np.argmin(d))
        assert vocab[int(fv["education_type"])] == feats[k].attributes.get(spec.category_attribute, "unknown")


def test_base7_is_a_projection_of_expanded18(small_world, world_layers, world_points):
    catalog, exp, layers = world_layers
    base = build_schema("base7", catalog)
    lon = np.array([p.lon for p in world_points])
    lat = np.array([p.lat for p in world_points])
    Xe, _ = featurize_many(lon, lat, layers, exp)
    Xb, _ = featurize_many(lon, lat, prepare_layers(catalog, base), base)
    idx = [exp.names.index(n) for n in base.names]
    assert np.array_equal(Xb, Xe[:, idx])


def test_block_size_does_not_change_results(world_layers, world_points):
    _, schema, layers = world_layers
    lon = np.array([p.lon for p in world_points])
    lat = np.array([p.lat for p in world_points])
    a, _ = featurize_many(lon, lat, layers, schema, block=7)
    b, _ = featurize_many(lon, lat, layers, schema, block=4096)
    assert np.array_equal(a, b)


def test_matrix_zscore_from_training_rows(world_layers, world_points, tmp_path):
    _, schema, layers = world_layers
    ss = SampleSet(world_points)
    mask = np.arange(len(ss)) % 4 != 0
    m = build_matrix(ss, layers, schema, mask)
    z = m.standardized()[m.train_mask]
    live = m.std > 0
    np.testing.assert_allclose(z[:, live].mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(z[:, live].std(axis=0), 1.0, rtol=1e-9)
    write_matrix(tmp_path / "m.csv", m)
    back = read_matrix(tmp_path / "m.csv")
    assert np.array_equal(back.X, m.X) and np.array_equal(back.train_mask, m.train_mask)
    assert back.schema.fingerprint == m.schema.fingerprint


def test_points_outside_rasters_fail_with_ids(world_layers):
    _, schema, layers = world_layers
    far = SampleSet([SamplePoint(0, 66.0, 34.0, CLEAR, "random"), SamplePoint(5, 10.0, 10.0, CLEAR, "random")])
    with pytest.raises(FeaturizationFailed) as exc:
        build_matrix(far, layers, schema)
    assert exc.value.ids == [5]


def test_missing_layer_is_reported(small_world):
    _, catalog = small_world
    partial = LayerCatalog({k: v for k, v in catalog.layers.items() if k != "road"}, catalog.root)
    with pytest.raises(MissingLayer):
        prepare_layers(partial, build_schema("base7", catalog))
