import json

import numpy as np
import pytest

from deskaid.errors import (ConfigError, CountMismatch, EmptyLayer, GeometryKindMismatch, HeaderMissing,
                            MissingColumn, MissingLayer, ParseError)
from deskaid.geo_core import GeoPoint, PolygonFeature, PolylineFeature
from deskaid.ingest import (ConflictEvent, LayerCatalog, LayerSpec, PointFeature, RasterGrid, load_catalog,
                            parse_ascii_grid, parse_conflict_csv, parse_geojson_layer, write_ascii_grid,
                            write_catalog, write_conflict_csv, write_geojson_layer)


def dump(path, doc):
    path.write_text(json.dumps(doc))
    return path


def fc(*geoms, props=None):
    return {"type": "FeatureCollection",
            "features": [{"type": "Feature", "properties": props or {}, "geometry": g} for g in geoms]}


SQUARE = [[66.0, 34.0], [66.01, 34.0], [66.01, 34.01], [66.0, 34.01], [66.0, 34.0]]
HOLE = [[66.004, 34.004], [66.006, 34.004], [66.006, 34.006], [66.004, 34.004]]


def test_polygon_with_hole_and_attributes(tmp_path):
    p = dump(tmp_path / "a.geojson", fc({"type": "Polygon", "coordinates": [SQUARE, HOLE]},
                                         props={"type": "flood", "n": 3, "x": None}))
    (poly,) = parse_geojson_layer(p, "polygon")
    assert np.array_equal(poly.exterior, np.asarray(SQUARE))
    assert len(poly.holes) == 1
    assert poly.attributes == {"type": "flood", "n": "3", "x": ""}


def test_multipolygon_flattens_and_keeps_attributes(tmp_path):
    shifted = [[x + 1, y] for x, y in SQUARE]
    p = dump(tmp_path / "m.geojson", fc({"type": "MultiPolygon", "coordinates": [[SQUARE], [shifted]]},
                                         {"type": "Polygon", "coordinates": [SQUARE]}, props={"k": "v"}))
    polys = parse_geojson_layer(p, "polygon")
    assert [q.feature_id for q in polys] == [0, 1, 2]
    assert all(q.attributes == {"k": "v"} for q in polys)
    assert polys[1].exterior[0, 0] == 67.0


def test_multipoint_and_multiline_flatten(tmp_path):
    p = dump(tmp_path / "p.geojson", fc({"type": "MultiPoint", "coordinates": [[1, 2], [3, 4]]}))
    pts = parse_geojson_layer(p, "point")
    assert [(q.lon, q.lat) for q in pts] == [(1.0, 2.0), (3.0, 4.0)]
    p = dump(tmp_path / "l.geojson", fc({"type": "MultiLineString", "coordinates": [[[0, 0], [1, 1]], [[2, 2], [3, 3], [4, 3]]]}))
    lines = parse_geojson_layer(p, "line")
    assert [len(q.vertices) for q in lines] == [2, 3]


def test_geometry_kind_mismatch_reports_index(tmp_path):
    p = dump(tmp_path / "x.geojson", fc({"type": "Point", "coordinates": [0, 0]},
                                         {"type": "LineString", "coordinates": [[0, 0], [1, 1]]}))
    with pytest.raises(GeometryKindMismatch) as exc:
        parse_geojson_layer(p, "point")
    assert exc.value.index == 1


def test_malformed_json_reports_offset(tmp_path):
    p = tmp_path / "bad.geojson"
    p.write_text('{"type": "FeatureCollection", "features": [')
    with pytest.raises(ParseError) as exc:
        parse_geojson_layer(p, "point")
    assert exc.value.offset is not None


def test_empty_collection_and_bad_coordinates(tmp_path):
    with pytest.raises(EmptyLayer):
        parse_geojson_layer(dump(tmp_path / "e.geojson", fc()), "point")
    with pytest.raises(ParseError):
        parse_geojson_layer(dump(tmp_path / "c.geojson", fc({"type": "Point", "coordinates": ["a", 1]})), "point")
    with pytest.raises(ParseError):
        parse_geojson_layer(dump(tmp_path / "n.geojson", {"type": "Feature"}), "point")


def test_geojson_round_trip(tmp_path, rng):
    polys = [PolygonFeature.from_coords(np.asarray(SQUARE[:-1]) + rng.uniform(0, 1, 2), attributes={"i": str(i)})
             for i in range(5)]
    lines = [PolylineFeature(rng.uniform(60, 70, (4, 2)), {"class": "primary"})]
    pts = [PointFeature(GeoPoint(*rng.uniform(60, 70, 2)), {"category": "bank"})]
    for name, items, kind in (("p", polys, "polygon"), ("l", lines, "line"), ("t", pts, "point")):
        path = tmp_path / f"{name}.geojson"
        write_geojson_layer(path, items)
        back = parse_geojson_layer(path, kind)
        assert len(back) == len(items)
        for a, b in zip(items, back):
            assert a.attributes == b.attributes
            ga = a.exterior if kind == "polygon" else a.vertices if kind == "line" else np.array([a.lon, a.lat])
            gb = b.exterior if kind == "polygon" else b.vertices if kind == "line" else np.array([b.lon, b.lat])
            np.testing.assert_allclose(ga, gb, atol=5e-8)


GRID = "ncols 3\nnrows 2\nxllcorner 66.0\nyllcorner 34.0\ncellsize 0.5\nNODATA_value -9999\n1 2 3\n4 5 -9999\n"


def test_ascii_grid_layout(tmp_path):
    p = tmp_path / "g.asc"
    p.write_text(GRID)
    g = parse_ascii_grid(p)
    assert (g.ncols, g.nrows, g.cellsize, g.nodata) == (3, 2, 0.5, -9999.0)
    assert g.values[0].tolist() == [1, 2, 3]  # first row is the northern one
    assert g.ytop == 35.0 and g.xright == 67.5
    assert g.row_center_lat(0) == 34.75 and g.col_center_lon(2) == 67.25


def test_ascii_grid_errors(tmp_path):
    p = tmp_path / "g.asc"
    p.write_text(GRID.replace("cellsize 0.5\n", ""))
    with pytest.raises(HeaderMissing) as exc:
        parse_ascii_grid(p)
    assert exc.value.key == "cellsize"
    p.write_text(GRID.replace("4 5 -9999", "4 5"))
    with pytest.raises(CountMismatch):
        parse_ascii_grid(p)
    p.write_text(GRID.replace("4 5", "4 x"))
    with pytest.raises(ParseError) as exc:
        parse_ascii_grid(p)
    assert exc.value.line == 8


def test_ascii_grid_round_trip(tmp_path, rng):
    vals = np.round(rng.uniform(0, 3000, (7, 9)), 1)
    g = RasterGrid(9, 7, 65.5, 33.25, 0.01, -9999.0, vals)
    write_ascii_grid(tmp_path / "r.asc", g)
    back = parse_ascii_grid(tmp_path / "r.asc")
    assert (back.xllcorner, back.yllcorner, back.cellsize) == (65.5, 33.25, 0.01)
    np.testing.assert_allclose(back.values, vals, rtol=1e-5)


def test_conflict_csv_deaths_checksum(tmp_path, rng):
    deaths = rng.integers(0, 50, 1000)
    lines = ["lon,lat,deaths"] + [f"{66 + i * 1e-4},{34 + i * 1e-4},{d}" for i, d in enumerate(deaths)]
    p = tmp_path / "c.csv"
    p.write_text("\n".join(lines) + "\n")
    events = parse_conflict_csv(p)
    assert len(events) == 1000
    assert sum(e.estimated_deaths for e in events) == int(deaths.sum())


def test_conflict_csv_errors(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("lon,lat\n1,2\n")
    with pytest.raises(MissingColumn) as exc:
        parse_conflict_csv(p)
    assert exc.value.name == "deaths"
    p.write_text("lon,lat,deaths\n1,2,3\n1,2,-1\n")
    with pytest.raises(ParseError) as exc:
        parse_conflict_csv(p)
    assert exc.value.row == 2
    with pytest.raises(ValueError):
        ConflictEvent(GeoPoint(0, 0), -1.0)


def test_conflict_csv_round_trip(tmp_path):
    events = [ConflictEvent(GeoPoint(66.123456789, 34.1), 3.0), ConflictEvent(GeoPoint(66.0, 34.0), 2.5)]
    write_conflict_csv(tmp_path / "c.csv", events)
    assert parse_conflict_csv(tmp_path / "c.csv") == events


def test_catalog_round_trip_and_require(tmp_path):
    (tmp_path / "h.geojson").write_text("{}")
    cat = LayerCatalog({"hazard": LayerSpec(tmp_path / "h.geojson", "polygon", "type", ("flood", "mine"))}, tmp_path)
    write_catalog(tmp_path / "catalog.json", cat)
    back = load_catalog(tmp_path / "catalog.json")
    assert back["hazard"] == cat["hazard"]
    assert back.require(["hazard"]) is back
    with pytest.raises(MissingLayer):
        back.require(["road"])


def test_catalog_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_catalog(tmp_path / "nope.json")
    dump(tmp_path / "c.json", {"layers": {"road": {"path": "missing.geojson", "kind": "line"}}})
    with pytest.raises(ConfigError):
        load_catalog(tmp_path / "c.json")
    dump(tmp_path / "c.json", {"layers": {"volcano": {"path": "x", "kind": "point"}}})
    with pytest.raises(ConfigError):
        load_catalog(tmp_path / "c.json", check_files=False)
