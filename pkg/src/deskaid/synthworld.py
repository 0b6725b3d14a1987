"""Synthetic countries with a planted, known hazard-placement rule.

The generator writes a full layer set in the ingest formats: a square border,
towns joined by roads, rivers, facilities, controlled areas, conflict event
clusters, elevation and population rasters, and hazard polygons.  Hazards
are placed by rejection: a candidate center is kept with probability

    sigmoid(strength * (w_road * exp(-d_road / L_road)
                        + w_conflict * exp(-d_conflict / L_conflict)
                        + w_slope * exp(-((slope - s0) / s_width)^2)
                        - offset))

so distance to roads, distance to conflicts and slope carry real signal.
Everything is drawn from one seeded generator, so the same config yields
byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .features import derive_slope_raster, sample_raster_many
from .geo_core import METERS_PER_DEG_LAT, GeoPoint, LocalFrame, PolygonFeature, PolylineFeature
from .ingest import (ConflictEvent, LayerCatalog, LayerSpec, PointFeature, RasterGrid, write_ascii_grid,
                     write_catalog, write_conflict_csv, write_geojson_layer)
from .spatial_index import HubIndex

VOCABULARIES = {
    "education": ("school", "college", "university", "kindergarten"),
    "airport": ("helipad", "aerodrome", "gate", "apron", "runway", "hangar", "terminal", "taxiway"),
    "health": ("clinic", "hospital", "pharmacy", "doctors", "dentist", "health_post"),
    "controlled_area": ("government", "local_taliban", "jamiat_islami", "hezb_islami", "junbish",
                        "hazara_wahdat", "tribal_council", "contested", "coalition", "unknown_armed"),
}


@dataclass(frozen=True)
class RiskRecipe:
    strength: float = 3.0
    road_weight: float = 2.5
    road_scale_m: float = 1500.0
    conflict_weight: float = 2.5
    conflict_scale_m: float = 3000.0
    slope_weight: float = 1.0
    slope_center_pct: float = 8.0
    slope_width_pct: float = 6.0
    offset: float = 2.5
    # mean number of extra conflict events logged inside each hazard
    site_events_mean: float = 0.0


@dataclass(frozen=True)
class WorldConfig:
    seed: int = 0
    side_km: float = 60.0
    origin_lon: float = 66.0
    origin_lat: float = 34.0
    n_hazards: int = 500
    n_towns: int = 14
    n_roads: int = 24
    n_waterways: int = 8
    n_buildings: int = 3000
    n_financial: int = 25
    n_education: int = 120
    n_airport: int = 12
    n_health: int = 70
    n_controlled: int = 120
    n_conflict_clusters: int = 10
    n_conflicts: int = 1200
    raster_cell_m: float = 250.0
    raster_margin_km: float = 8.0
    hazard_margin_km: float = 1.0
    hazard_extent_m: tuple[float, float] = (100.0, 2000.0)
    risk: RiskRecipe = field(default_factory=RiskRecipe)

    def __post_init__(self):
        counts = {k: v for k, v in asdict(self).items() if k.startswith("n_")}
        bad = [k for k, v in counts.items() if v < 1]
        if bad:
            raise ConfigError(f"world counts must be >= 1: {bad}")
        if not self.side_km > 0:
            raise ConfigError("side_km must be > 0")
        if not self.raster_cell_m > 0:
            raise ConfigError("raster_cell_m must be > 0")
        object.__setattr__(self, "hazard_extent_m", tuple(float(v) for v in self.hazard_extent_m))
        lo, hi = self.hazard_extent_m
        if not 0 < lo <= hi:
            raise ConfigError("hazard_extent_m must satisfy 0 < min <= max")
        if isinstance(self.risk, dict):
            object.__setattr__(self, "risk", RiskRecipe(**self.risk))

    @classmethod
    def from_json(cls, doc: dict) -> "WorldConfig":
        doc = dict(doc)
        if "risk" in doc:
            doc["risk"] = RiskRecipe(**doc["risk"])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad world config: {exc}") from None


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


class _World:
    """Scratch state while generating; coordinates in meters around the center."""

    def __init__(self, cfg: WorldConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))
        self.half = cfg.side_km * 500.0
        center_lat = cfg.origin_lat + self.half / METERS_PER_DEG_LAT
        lon_scale = METERS_PER_DEG_LAT * math.cos(math.radians(center_lat))
        center_lon = cfg.origin_lon + self.half / lon_scale
        self.frame = LocalFrame(GeoPoint(center_lon, center_lat))

    def lonlat(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        lon, lat = self.frame.to_lonlat(xy[:, 0], xy[:, 1])
        return np.column_stack([lon, lat])

    def uniform(self, n, margin=0.0):
        h = self.half - margin
        return self.rng.uniform(-h, h, size=(n, 2))

    def clip(self, xy, margin=0.0):
        h = self.half - margin
        return np.clip(xy, -h, h)


def _wiggly_path(w: _World, a, b, step: float, wiggle: float):
    a, b = np.asarray(a, float), np.asarray(b, float)
    length = float(np.hypot(*(b - a)))
    n = max(2, int(length // step) + 1)
    t = np.linspace(0.0, 1.0, n)
    base = a + t[:, None] * (b - a)
    normal = np.array([-(b - a)[1], (b - a)[0]]) / max(length, 1e-9)
    # smooth lateral noise pinned to zero at both ends
    noise = np.cumsum(w.rng.normal(0.0, wiggle, n))
    noise -= t * noise[-1]
    noise[0] = 0.0
    pts = base + noise[:, None] * normal
    pts = w.clip(pts, 1.0)
    keep = np.r_[True, np.any(np.abs(np.diff(pts, axis=0)) > 1e-6, axis=1)]
    return pts[keep]


def _square(center, half_side, angle=0.0):
    c, s = math.cos(angle), math.sin(angle)
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float) * half_side
    rot = corners @ np.array([[c, s], [-s, c]])
    return rot + np.asarray(center)


def _convex_quad(w: _World, center, extent):
    """Four points on a random ellipse, so the quad is convex by construction."""
    a = extent / 2.0
    b = a * w.rng.uniform(0.35, 1.0)
    rot = w.rng.uniform(0.0, math.pi)
    base = np.sort(w.rng.uniform(0.0, 2 * math.pi, 4))
    # enforce spread so no side is degenerate
    angles = base[0] + np.array([0.0, 0.5, 1.0, 1.5]) * math.pi + w.rng.uniform(-0.35, 0.35, 4)
    x = a * np.cos(angles)
    y = b * np.sin(angles)
    c, s = math.cos(rot), math.sin(rot)
    return np.column_stack([c * x - s * y, s * x + c * y]) + np.asarray(center)


def _point_in_convex(rng, quad):
    """Uniform point in a convex quad: pick a fan triangle by area, then barycentric."""
    a, b, c, d = quad
    tris = ((a, b, c), (a, c, d))
    areas = [abs((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])) for p, q, r in tris]
    p, q, r = tris[0] if rng.random() * sum(areas) < areas[0] else tris[1]
    u, v = rng.random(2)
    if u + v > 1.0:
        u, v = 1.0 - u, 1.0 - v
    return p + u * (q - p) + v * (r - p)


def _gaussian_field(xs, ys, centers, amps, sigmas):
    gx, gy = np.meshgrid(xs, ys)
    z = np.zeros_like(gx)
    for (cx, cy), a, s in zip(centers, amps, sigmas):
        z += a * np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2 * s * s))
    return z


def _raster(w: _World, field_fn) -> RasterGrid:
    cfg = w.cfg
    cell_deg = cfg.raster_cell_m / METERS_PER_DEG_LAT
    margin = cfg.raster_margin_km * 1000.0
    lo = w.lonlat([[-w.half - margin, -w.half - margin]])[0]
    hi = w.lonlat([[w.half + margin, w.half + margin]])[0]
    ncols = int(math.ceil((hi[0] - lo[0]) / cell_deg))
    nrows = int(math.ceil((hi[1] - lo[1]) / cell_deg))
    xll, yll = float(lo[0]), float(lo[1])
    lon_c = xll + (np.arange(ncols) + 0.5) * cell_deg
    lat_c = yll + nrows * cell_deg - (np.arange(nrows) + 0.5) * cell_deg
    xs, _ = w.frame.to_xy(lon_c, np.full(ncols, w.frame.origin.lat))
    _, ys = w.frame.to_xy(np.full(nrows, w.frame.origin.lon), lat_c)
    values = field_fn(xs, ys)
    # store at the written precision so in-memory and on-disk rasters agree
    values = np.array([[float(f"{v:.6g}") for v in row] for row in values])
    return RasterGrid(ncols, nrows, round(xll, 9), round(yll, 9), cell_deg, -9999.0, values)


def generate_world(cfg: WorldConfig, out_dir) -> LayerCatalog:
    """Write a consistent synthetic layer set plus ``catalog.json`` and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w = _World(cfg)
    rng = w.rng
    h = w.half
    rk = cfg.risk

    # towns and roads
    towns = w.uniform(cfg.n_towns, margin=0.1 * h)
    roads_xy = []
    for i in range(cfg.n_roads):
        a = towns[i % cfg.n_towns]
        if i < cfg.n_towns:
            d = np.hypot(*(towns - a).T)
            d[i % cfg.n_towns] = np.inf
            b = towns[int(np.argmin(d))] if i % 2 == 0 else towns[int(rng.integers(cfg.n_towns))]
            if np.allclose(a, b):
                b = w.uniform(1)[0]
        else:
            side = int(rng.integers(4))
            edge = rng.uniform(-h, h)
            b = [(edge, -h), (h, edge), (edge, h), (-h, edge)][side]
        roads_xy.append(_wiggly_path(w, a, b, 250.0, 40.0))
    roads_xy = [r for r in roads_xy if len(r) >= 2]

    # rivers from one edge to the opposite one
    rivers_xy = []
    for _ in range(cfg.n_waterways):
        if rng.random() < 0.5:
            a, b = (-h, rng.uniform(-h, h)), (h, rng.uniform(-h, h))
        else:
            a, b = (rng.uniform(-h, h), -h), (rng.uniform(-h, h), h)
        rivers_xy.append(_wiggly_path(w, a, b, 400.0, 80.0))

    # terrain: broad hills plus a gentle tilt
    n_hills = 25
    hill_c = w.uniform(n_hills, margin=-cfg.raster_margin_km * 1000.0)
    hill_a = rng.uniform(150.0, 900.0, n_hills)
    hill_s = rng.uniform(1500.0, 6000.0, n_hills)
    tilt = rng.normal(0.0, 0.004, 2)
    elevation = _raster(w, lambda xs, ys: 1200.0 + _gaussian_field(xs, ys, hill_c, hill_a, hill_s)
                        + tilt[0] * xs[None, :] + tilt[1] * ys[:, None])
    slope = derive_slope_raster(elevation)

    town_size = rng.uniform(800.0, 3000.0, cfg.n_towns)
    population = _raster(w, lambda xs, ys: 5.0 + _gaussian_field(xs, ys, towns, rng.uniform(300, 2500, cfg.n_towns),
                                                                 town_size))

    def near_towns(n, spread=1.0):
        k = rng.integers(cfg.n_towns, size=n)
        pts = towns[k] + rng.normal(0.0, 1.0, (n, 2)) * (town_size[k] * spread)[:, None]
        return w.clip(pts, 10.0)

    # buildings: mostly in towns, some scattered
    n_town_b = int(cfg.n_buildings * 0.8)
    b_centers = np.vstack([near_towns(n_town_b), w.uniform(cfg.n_buildings - n_town_b, margin=50.0)])
    buildings = []
    for i, c in enumerate(b_centers):
        ring = w.lonlat(_square(c, rng.uniform(5.0, 15.0), rng.uniform(0, math.pi / 2)))
        buildings.append(PolygonFeature.from_coords(ring, feature_id=i))

    def facilities(n, role=None, unknown_rate=0.0):
        pts = w.lonlat(near_towns(n, 1.2))
        feats = []
        for i, (lon, lat) in enumerate(pts):
            attrs = {}
            if role is not None:
                vocab = VOCABULARIES[role]
                if rng.random() >= unknown_rate:
                    attrs["type"] = vocab[int(rng.integers(len(vocab)))]
            feats.append(PointFeature(GeoPoint(float(lon), float(lat)), attrs, i))
        return feats

    financial = facilities(cfg.n_financial)
    education = facilities(cfg.n_education, "education")
    airports = facilities(cfg.n_airport, "airport")
    health = facilities(cfg.n_health, "health", unknown_rate=0.15)

    controlled = []
    for i, c in enumerate(w.uniform(cfg.n_controlled, margin=500.0)):
        ring = w.lonlat(_square(c, rng.uniform(500.0, 2500.0), rng.uniform(0, math.pi / 2)))
        vocab = VOCABULARIES["controlled_area"]
        controlled.append(PolygonFeature.from_coords(ring, attributes={"authority": vocab[int(rng.integers(len(vocab)))]},
                                                     feature_id=i))

    # conflict clusters sit along roads
    road_pts = np.vstack(roads_xy)
    cl_centers = road_pts[rng.integers(len(road_pts), size=cfg.n_conflict_clusters)]
    cl_k = rng.integers(cfg.n_conflict_clusters, size=cfg.n_conflicts)
    ev_xy = w.clip(cl_centers[cl_k] + rng.normal(0.0, 1500.0, (cfg.n_conflicts, 2)), 10.0)
    deaths = rng.geometric(0.3, cfg.n_conflicts)
    ev_ll = w.lonlat(ev_xy)
    conflicts = [ConflictEvent(GeoPoint(float(a), float(b)), float(d)) for (a, b), d in zip(ev_ll, deaths)]

    # hazards by rejection against the planted risk rule
    road_ll = w.lonlat(road_pts)
    road_index = HubIndex(road_ll[:, 0], road_ll[:, 1])
    conflict_index = HubIndex(ev_ll[:, 0], ev_ll[:, 1])
    margin = cfg.hazard_margin_km * 1000.0 + cfg.hazard_extent_m[1] / 2.0
    hazards = []
    hazard_centers = []
    hazard_quads = []
    attempts = 0
    while len(hazards) < cfg.n_hazards:
        cand = w.uniform(4096, margin=margin)
        ll = w.lonlat(cand)
        logit = _risk_logit(rk, road_index, conflict_index, slope, ll)
        keep = rng.random(len(cand)) < _sigmoid(logit)
        for c in cand[keep]:
            if len(hazards) >= cfg.n_hazards:
                break
            quad = _convex_quad(w, c, rng.uniform(*cfg.hazard_extent_m))
            hazard_centers.append(c)
            hazard_quads.append(quad)
            hazards.append(PolygonFeature.from_coords(w.lonlat(quad), attributes={"hazard": "1"},
                                                      feature_id=len(hazards)))
        attempts += len(cand)
        if attempts > 50_000_000:
            raise ConfigError("hazard placement acceptance too low; lower the risk offset")

    # incidents recorded inside the hazardous areas themselves
    for c, quad in zip(hazard_centers, hazard_quads):
        for _ in range(int(rng.poisson(rk.site_events_mean))):
            ll = w.lonlat(_point_in_convex(rng, quad))[0]
            conflicts.append(ConflictEvent(GeoPoint(float(ll[0]), float(ll[1])), float(rng.geometric(0.3))))

    border_ring = w.lonlat(_densified_square(h, 1000.0))
    border = PolygonFeature.from_coords(border_ring, attributes={"name": "synthland"})

    study = []
    for i, c in enumerate(towns[:2]):
        c = w.clip(c, 6000.0)
        study.append(PolygonFeature.from_coords(w.lonlat(_square(c, 5000.0)), attributes={"name": f"SA{i + 1}"},
                                                feature_id=i))

    files = {
        "hazard": ("hazards.geojson", "polygon", hazards),
        "building": ("buildings.geojson", "polygon", buildings),
        "financial": ("financial.geojson", "point", financial),
        "education": ("education.geojson", "point", education),
        "airport": ("airports.geojson", "point", airports),
        "health": ("health.geojson", "point", health),
        "road": ("roads.geojson", "line", [PolylineFeature(w.lonlat(r), {"highway": "road"}, i)
                                           for i, r in enumerate(roads_xy)]),
        "waterway": ("waterways.geojson", "line", [PolylineFeature(w.lonlat(r), {"waterway": "river"}, i)
                                                   for i, r in enumerate(rivers_xy)]),
        "controlled_area": ("controlled_areas.geojson", "polygon", controlled),
        "border": ("border.geojson", "polygon", [border]),
    }
    layers = {}
    for role, (name, kind, items) in files.items():
        write_geojson_layer(out / name, items)
        attr = {"education": "type", "airport": "type", "health": "type", "controlled_area": "authority"}.get(role)
        layers[role] = LayerSpec(out / name, kind, attr, VOCABULARIES.get(role, ()) if attr else ())
    write_conflict_csv(out / "conflicts.csv", conflicts)
    layers["conflict"] = LayerSpec(out / "conflicts.csv", "events")
    write_ascii_grid(out / "population.asc", population)
    layers["population"] = LayerSpec(out / "population.asc", "raster")
    write_ascii_grid(out / "elevation.asc", elevation)
    layers["elevation"] = LayerSpec(out / "elevation.asc", "raster")
    write_geojson_layer(out / "study_areas.geojson", study)

    catalog = LayerCatalog(layers, out)
    write_catalog(out / "catalog.json", catalog)
    manifest = {
        "config": _config_json(cfg),
        "frame_origin": [w.frame.origin.lon, w.frame.origin.lat],
        "risk_rule": ("sigmoid(strength * (road_weight*exp(-d_road/road_scale_m) + conflict_weight*"
                      "exp(-d_conflict/conflict_scale_m) + slope_weight*exp(-((slope-slope_center_pct)/"
                      "slope_width_pct)^2) - offset))"),
        "hazard_candidates_drawn": attempts,
        "counts": {role: len(items) for role, (_, _, items) in files.items()} | {"conflict": len(conflicts)},
        "study_areas": "study_areas.geojson",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return catalog


def _risk_logit(rk: RiskRecipe, road_index: HubIndex, conflict_index: HubIndex, slope: RasterGrid, ll):
    _, d_road, _ = road_index.nearest_many(ll[:, 0], ll[:, 1])
    _, d_conf, _ = conflict_index.nearest_many(ll[:, 0], ll[:, 1])
    s, status = sample_raster_many(slope, ll[:, 0], ll[:, 1])
    s = np.where(status == 0, s, 0.0)
    score = (rk.road_weight * np.exp(-d_road / rk.road_scale_m)
             + rk.conflict_weight * np.exp(-d_conf / rk.conflict_scale_m)
             + rk.slope_weight * np.exp(-((s - rk.slope_center_pct) / rk.slope_width_pct) ** 2)
             - rk.offset)
    return rk.strength * score


def _densified_square(h: float, step: float) -> np.ndarray:
    n = max(1, int(round(2 * h / step)))
    t = np.linspace(-h, h, n + 1)[:-1]
    bottom = np.column_stack([t, np.full(n, -h)])
    right = np.column_stack([np.full(n, h), t])
    top = np.column_stack([-t, np.full(n, h)])
    left = np.column_stack([np.full(n, -h), -t])
    return np.vstack([bottom, right, top, left])


def _config_json(cfg: WorldConfig) -> dict:
    d = asdict(cfg)
    d["risk"] = asdict(cfg.risk)
    return d
