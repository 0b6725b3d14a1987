import numpy as np
import pytest

from deskaid.geo_core import GeoPoint, LocalFrame, PolygonFeature
from deskaid.synthworld import WorldConfig, generate_world

ORIGIN = GeoPoint(66.0, 34.0)


def metric_polygon(xy, origin=ORIGIN, **kw) -> PolygonFeature:
    """Polygon from vertices given in meters around ``origin``."""
    xy = np.asarray(xy, dtype=float)
    lon, lat = LocalFrame(origin).to_lonlat(xy[:, 0], xy[:, 1])
    return PolygonFeature.from_coords(np.column_stack([lon, lat]), **kw)


def metric_square(side, center=(0.0, 0.0), origin=ORIGIN, **kw) -> PolygonFeature:
    h = side / 2.0
    cx, cy = center
    return metric_polygon([(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)], origin, **kw)


SMALL_WORLD = dict(side_km=20.0, n_hazards=60, n_towns=5, n_roads=8, n_waterways=3, n_buildings=300,
                   n_financial=6, n_education=20, n_airport=4, n_health=12, n_controlled=15,
                   n_conflict_clusters=4, n_conflicts=150, raster_cell_m=500.0, raster_margin_km=4.0)


@pytest.fixture(scope="session")
def small_world(tmp_path_factory):
    out = tmp_path_factory.mktemp("world")
    catalog = generate_world(WorldConfig(**SMALL_WORLD), out)
    return out, catalog


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
