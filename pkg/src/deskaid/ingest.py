"""Readers (and a few writers) for the on-disk layer formats.

* GeoJSON FeatureCollections of Point / LineString / Polygon and their Multi*
  variants, WGS84 only.
* ESRI ASCII grids: six header lines then whitespace separated values, first
  row northernmost.
* Conflict event CSV with header ``lon,lat,deaths``.
* A catalog JSON binding each source role to a file.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (ConfigError, CountMismatch, EmptyLayer, GeometryKindMismatch,
                     HeaderMissing, MissingColumn, ParseError)
from .geo_core import GeoPoint, PolygonFeature, PolylineFeature

ROLES = (
    "hazard", "building", "financial", "education", "airport", "health", "road",
    "waterway", "controlled_area", "conflict", "border", "population", "elevation",
)
GEOMETRY_KINDS = ("point", "line", "polygon", "events", "raster")

_GEOJSON_KIND = {
    "Point": "point", "MultiPoint": "point",
    "LineString": "line", "MultiLineString": "line",
    "Polygon": "polygon", "MultiPolygon": "polygon",
}


@dataclass(frozen=True, eq=False)
class PointFeature:
    point: GeoPoint
    attributes: Mapping[str, str] = field(default_factory=dict)
    feature_id: int = 0

    @property
    def lon(self) -> float:
        return self.point.lon

    @property
    def lat(self) -> float:
        return self.point.lat


@dataclass(frozen=True)
class ConflictEvent:
    location: GeoPoint
    estimated_deaths: float

    def __post_init__(self):
        if not (self.estimated_deaths >= 0):
            raise ValueError("estimated_deaths must be >= 0")


@dataclass(eq=False)
class RasterGrid:
    ncols: int
    nrows: int
    xllcorner: float
    yllcorner: float
    cellsize: float
    nodata: float
    values: np.ndarray  # shape (nrows, ncols), row 0 northernmost

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            if self.values.size != self.ncols * self.nrows:
                raise CountMismatch(f"expected {self.ncols * self.nrows} values, got {self.values.size}")
            self.values = self.values.reshape(self.nrows, self.ncols)
        if self.values.shape != (self.nrows, self.ncols):
            raise CountMismatch(f"values shape {self.values.shape} != ({self.nrows}, {self.ncols})")
        if not self.cellsize > 0:
            raise ValueError("cellsize must be > 0")

    @property
    def ytop(self) -> float:
        return self.yllcorner + self.nrows * self.cellsize

    @property
    def xright(self) -> float:
        return self.xllcorner + self.ncols * self.cellsize

    def row_center_lat(self, row) -> np.ndarray:
        return self.ytop - (np.asarray(row) + 0.5) * self.cellsize

    def col_center_lon(self, col) -> np.ndarray:
        return self.xllcorner + (np.asarray(col) + 0.5) * self.cellsize


# ---------------------------------------------------------------------------
# GeoJSON

def _point(coord, where: str) -> GeoPoint:
    try:
        return GeoPoint(float(coord[0]), float(coord[1]))
    except (TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"{where}: bad coordinate {coord!r} ({exc})") from None


def _ring(coords, where: str) -> np.ndarray:
    pts = [_point(c, where) for c in coords]
    return np.asarray([(p.lon, p.lat) for p in pts], dtype=float)


def _attr_str(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    return json.dumps(value) if isinstance(value, (dict, list, bool)) else str(value)


def _load_json(path) -> object:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", offset=exc.pos, line=exc.lineno) from None


def parse_geojson_layer(path, kind: str) -> list:
    """Parse a FeatureCollection whose geometries are all of ``kind``.

    ``kind`` is ``"point"``, ``"line"`` or ``"polygon"``.  Multi* geometries are
    split into one feature per part, each keeping the parent's attributes.
    Feature ids number the flattened output in file order.
    """
    if kind not in ("point", "line", "polygon"):
        raise ValueError(f"unknown geometry kind {kind!r}")
    doc = _load_json(path)
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError(f"{path}: not a FeatureCollection", offset=0)
    features = doc.get("features")
    if not isinstance(features, list):
        raise ParseError(f"{path}: 'features' is not a list", offset=0)
    out = []
    for i, feat in enumerate(features):
        geom = (feat or {}).get("geometry") or {}
        gtype = geom.get("type")
        if gtype not in _GEOJSON_KIND:
            raise GeometryKindMismatch(i, str(gtype), kind)
        if _GEOJSON_KIND[gtype] != kind:
            raise GeometryKindMismatch(i, gtype, kind)
        attrs = {str(k): _attr_str(v) for k, v in ((feat.get("properties") or {}).items())}
        coords = geom.get("coordinates")
        parts = coords if gtype.startswith("Multi") else [coords]
        where = f"{path} feature {i}"
        try:
            for part in parts:
                fid = len(out)
                if kind == "point":
                    out.append(PointFeature(_point(part, where), attrs, fid))
                elif kind == "line":
                    out.append(PolylineFeature(_ring(part, where), attrs, fid))
                else:
                    rings = [_ring(r, where) for r in part]
                    if not rings:
                        raise ValueError("polygon without rings")
                    out.append(PolygonFeature(rings[0], tuple(rings[1:]), attrs, fid))
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from None
    if not out:
        raise EmptyLayer(f"{path}: no features")
    return out


def _feature(geometry: dict, properties: Mapping) -> dict:
    return {"type": "Feature", "properties": dict(properties), "geometry": geometry}


def polygon_geometry(poly: PolygonFeature, ndigits: int = 7) -> dict:
    rings = [poly.exterior, *poly.holes]
    return {"type": "Polygon",
            "coordinates": [[[round(float(x), ndigits), round(float(y), ndigits)] for x, y in r] for r in rings]}


def line_geometry(line: PolylineFeature, ndigits: int = 7) -> dict:
    return {"type": "LineString",
            "coordinates": [[round(float(x), ndigits), round(float(y), ndigits)] for x, y in line.vertices]}


def point_geometry(lon: float, lat: float, ndigits: int = 7) -> dict:
    return {"type": "Point", "coordinates": [round(float(lon), ndigits), round(float(lat), ndigits)]}


def write_feature_collection(path, features: list[dict]) -> None:
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, separators=(",", ":"), sort_keys=True) + "\n", encoding="utf-8")


def write_geojson_layer(path, items, ndigits: int = 7) -> None:
    """Write polygons, polylines or point features as a FeatureCollection."""
    features = []
    for item in items:
        if isinstance(item, PolygonFeature):
            features.append(_feature(polygon_geometry(item, ndigits), item.attributes))
        elif isinstance(item, PolylineFeature):
            features.append(_feature(line_geometry(item, ndigits), item.attributes))
        elif isinstance(item, PointFeature):
            features.append(_feature(point_geometry(item.lon, item.lat, ndigits), item.attributes))
        else:
            raise TypeError(f"cannot write {type(item).__name__}")
    write_feature_collection(path, features)


# ---------------------------------------------------------------------------
# ASCII grid

_GRID_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def parse_ascii_grid(path) -> RasterGrid:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    header: dict[str, str] = {}
    body_start = 0
    for lineno, line in enumerate(lines):
        parts = line.split()
        if not parts:
            continue
        key = parts[0].lower()
        if key in _GRID_KEYS or key in ("xllcenter", "yllcenter"):
            if len(parts) != 2:
                raise ParseError(f"{path}: malformed header line", line=lineno + 1)
            header[key] = parts[1]
            body_start = lineno + 1
        else:
            break
    for key in _GRID_KEYS:
        if key not in header:
            raise HeaderMissing("NODATA_value" if key == "nodata_value" else key)
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        xll, yll, cell = (float(header[k]) for k in ("xllcorner", "yllcorner", "cellsize"))
        nodata = float(header["nodata_value"])
    except ValueError as exc:
        raise ParseError(f"{path}: bad header value ({exc})") from None
    if ncols <= 0 or nrows <= 0:
        raise ParseError(f"{path}: non-positive grid dimensions")
    if not cell > 0:
        raise ParseError(f"{path}: cellsize must be > 0")
    values = []
    for lineno in range(body_start, len(lines)):
        for tok in lines[lineno].split():
            try:
                values.append(float(tok))
            except ValueError:
                raise ParseError(f"{path}: bad value {tok!r}", line=lineno + 1) from None
    if len(values) != ncols * nrows:
        raise CountMismatch(f"{path}: expected {ncols * nrows} values, found {len(values)}")
    return RasterGrid(ncols, nrows, xll, yll, cell, nodata, np.asarray(values))


def write_ascii_grid(path, grid: RasterGrid) -> None:
    """Write ``grid`` with 6 significant digits per value."""
    lines = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {grid.xllcorner!r}",
        f"yllcorner {grid.yllcorner!r}",
        f"cellsize {grid.cellsize!r}",
        f"NODATA_value {grid.nodata:.6g}",
    ]
    for row in grid.values:
        lines.append(" ".join(f"{v:.6g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# conflict events

def parse_conflict_csv(path) -> list[ConflictEvent]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise MissingColumn("lon") from None
        cols = {}
        for name in ("lon", "lat", "deaths"):
            if name not in header:
                raise MissingColumn(name)
            cols[name] = header.index(name)
        events = []
        for row_index, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                lon = float(row[cols["lon"]])
                lat = float(row[cols["lat"]])
                deaths = float(row[cols["deaths"]])
                if not math.isfinite(deaths) or deaths < 0:
                    raise ValueError(f"deaths {deaths} must be a non-negative count")
                events.append(ConflictEvent(GeoPoint(lon, lat), deaths))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}: {exc}", row=row_index) from None
    return events


def write_conflict_csv(path, events) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lon", "lat", "deaths"])
        for e in events:
            deaths = int(e.estimated_deaths) if float(e.estimated_deaths).is_integer() else e.estimated_deaths
            w.writerow([repr(e.location.lon), repr(e.location.lat), deaths])


# ---------------------------------------------------------------------------
# catalog

@dataclass(frozen=True)
class LayerSpec:
    path: Path
    kind: str
    category_attribute: str | None = None
    vocabulary: tuple[str, ...] = ()


@dataclass
class LayerCatalog:
    layers: dict[str, LayerSpec]
    root: Path = Path(".")

    def __getitem__(self, role: str) -> LayerSpec:
        return self.layers[role]

    def __contains__(self, role: str) -> bool:
        return role in self.layers

    def require(self, roles) -> "LayerCatalog":
        from .errors import MissingLayer
        for role in roles:
            if role not in self.layers:
                raise MissingLayer(role)
        return self

    def to_json(self) -> dict:
        out = {}
        for role, spec in sorted(self.layers.items()):
            entry = {"path": _relative(spec.path, self.root), "kind": spec.kind}
            if spec.category_attribute:
                entry["category_attribute"] = spec.category_attribute
                entry["vocabulary"] = list(spec.vocabulary)
            out[role] = entry
        return {"layers": out}


def _relative(path: Path, root: Path) -> str:
    try:
        return Path(path).relative_to(root).as_posix()
    except ValueError:
        return str(path)


def load_catalog(path, check_files: bool = True) -> LayerCatalog:
    """Read a catalog document; relative layer paths resolve against its folder."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"catalog file not found: {path}")
    doc = _load_json(path)
    entries = doc.get("layers") if isinstance(doc, dict) else None
    if not isinstance(entries, dict):
        raise ConfigError(f"{path}: expected an object with a 'layers' mapping")
    root = path.parent
    layers = {}
    for role, entry in entries.items():
        if role not in ROLES:
            raise ConfigError(f"{path}: unknown role {role!r}")
        kind = entry.get("kind")
        if kind not in GEOMETRY_KINDS:
            raise ConfigError(f"{path}: role {role!r} has invalid kind {kind!r}")
        layer_path = root / entry["path"]
        if check_files and not layer_path.is_file():
            raise ConfigError(f"layer file not found for role {role!r}: {layer_path}")
        attr = entry.get("category_attribute")
        vocab = tuple(str(v) for v in entry.get("vocabulary", ()))
        if attr and not vocab:
            raise ConfigError(f"{path}: role {role!r} declares a category attribute without a vocabulary")
        layers[role] = LayerSpec(layer_path, kind, attr, vocab)
    return LayerCatalog(layers, root)


def write_catalog(path, catalog: LayerCatalog) -> None:
    Path(path).write_text(json.dumps(catalog.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
