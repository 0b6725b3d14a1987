"""Location features: nearest-hub distances, facility types, raster samples.

Feature order follows the source table: the 14 continuous attributes first,
then the four categorical ones.  ``base7`` is the starred subset used by
every model; ``expanded18`` is the full table.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (FeaturizationFailed, GridTooSmall, MissingLayer, NoDataCell, OutOfExtent,
                     ParseError)
from .geo_core import (METERS_PER_DEG_LAT, GeoPoint, densify_line, polygon_centroid,
                       vertex_array)
from .ingest import (LayerCatalog, RasterGrid, parse_ascii_grid, parse_conflict_csv,
                     parse_geojson_layer)
from .parallel import chunks, map_ordered
from .sampling import SampleSet
from .spatial_index import HubIndex

log = logging.getLogger(__name__)

UNKNOWN = "unknown"


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    kind: str  # "continuous" | "categorical"
    unit: str
    role: str
    source: str  # "distance", "deaths", "raster", "slope", "category"
    vocabulary: tuple[str, ...] = ()


_TABLE = (
    ("dist_building", "continuous", "m", "building", "distance"),
    ("dist_financial", "continuous", "m", "financial", "distance"),
    ("dist_education", "continuous", "m", "education", "distance"),
    ("dist_airport", "continuous", "m", "airport", "distance"),
    ("dist_health", "continuous", "m", "health", "distance"),
    ("dist_road", "continuous", "m", "road", "distance"),
    ("dist_waterway", "continuous", "m", "waterway", "distance"),
    ("dist_controlled_area", "continuous", "m", "controlled_area", "distance"),
    ("dist_conflict", "continuous", "m", "conflict", "distance"),
    ("estimated_deaths", "continuous", "count", "conflict", "deaths"),
    ("dist_border", "continuous", "m", "border", "distance"),
    ("population_density", "continuous", "persons/km2", "population", "raster"),
    ("elevation", "continuous", "m", "elevation", "raster"),
    ("slope", "continuous", "%", "elevation", "slope"),
    ("education_type", "categorical", "", "education", "category"),
    ("airport_type", "categorical", "", "airport", "category"),
    ("health_type", "categorical", "", "health", "category"),
    ("controlled_area_authority", "categorical", "", "controlled_area", "category"),
)
BASE7 = ("dist_building", "dist_road", "dist_waterway", "dist_border",
         "population_density", "elevation", "slope")
FEATURE_SETS = ("base7", "expanded18")


def vocabulary_with_unknown(vocab: Sequence[str]) -> tuple[str, ...]:
    """Reserve index 0 for ``unknown``; later duplicates are dropped."""
    out = [UNKNOWN]
    for v in vocab:
        if v not in out:
            out.append(v)
    return tuple(out)


@dataclass(frozen=True)
class FeatureSchema:
    set_name: str
    features: tuple[FeatureDescriptor, ...]

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def roles(self) -> list[str]:
        return sorted({f.role for f in self.features})

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([f.kind == "categorical" for f in self.features])

    def to_json(self) -> dict:
        return {
            "set": self.set_name,
            "features": [{"name": f.name, "kind": f.kind, "unit": f.unit, "role": f.role,
                          "source": f.source, "vocabulary": list(f.vocabulary)} for f in self.features],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureSchema":
        feats = tuple(FeatureDescriptor(f["name"], f["kind"], f["unit"], f["role"], f["source"],
                                        tuple(f.get("vocabulary", ()))) for f in doc["features"])
        return cls(doc["set"], feats)

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_schema(set_name: str, catalog: LayerCatalog | None = None,
                 vocabularies: dict[str, Sequence[str]] | None = None) -> FeatureSchema:
    """Schema for ``base7`` or ``expanded18``.

    Categorical vocabularies come from the catalog (or ``vocabularies`` keyed
    by role); either way index 0 is ``unknown``.
    """
    if set_name not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {set_name!r}; expected one of {FEATURE_SETS}")
    vocabularies = dict(vocabularies or {})
    feats = []
    for name, kind, unit, role, source in _TABLE:
        if set_name == "base7" and name not in BASE7:
            continue
        vocab: tuple[str, ...] = ()
        if kind == "categorical":
            raw = vocabularies.get(role)
            if raw is None and catalog is not None and role in catalog:
                raw = catalog[role].vocabulary
            vocab = vocabulary_with_unknown(raw or ())
        feats.append(FeatureDescriptor(name, kind, unit, role, source, vocab))
    if set_name == "base7":
        feats.sort(key=lambda f: BASE7.index(f.name))
    return FeatureSchema(set_name, tuple(feats))


@dataclass
class FeatureVector:
    schema: FeatureSchema
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.schema.names, map(float, self.values)))


# ---------------------------------------------------------------------------
# rasters

def derive_slope_raster(elevation: RasterGrid) -> RasterGrid:
    """Horn 3x3 slope in percent; border cells and nodata windows become nodata."""
    z = elevation.values
    if elevation.nrows < 3 or elevation.ncols < 3:
        raise GridTooSmall(f"slope needs at least 3x3 cells, got {elevation.nrows}x{elevation.ncols}")
    nodata = elevation.nodata
    bad = (z == nodata) | ~np.isfinite(z)
    lat = elevation.row_center_lat(np.arange(elevation.nrows))
    dy = elevation.cellsize * METERS_PER_DEG_LAT
    dx = elevation.cellsize * METERS_PER_DEG_LAT * np.cos(np.radians(lat))
    a, b, c = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    d, f = z[1:-1, :-2], z[1:-1, 2:]
    g, h, i = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    dzdx = ((c + 2 * f + i) - (a + 2 * d + g)) / (8.0 * dx[1:-1, None])
    dzdy = ((a + 2 * b + c) - (g + 2 * h + i)) / (8.0 * dy)
    slope = np.full(z.shape, nodata, dtype=float)
    inner = 100.0 * np.sqrt(dzdx * dzdx + dzdy * dzdy)
    window_bad = np.zeros_like(inner, dtype=bool)
    for dr in range(3):
        for dc in range(3):
            window_bad |= bad[dr:dr + inner.shape[0], dc:dc + inner.shape[1]]
    slope[1:-1, 1:-1] = np.where(window_bad, nodata, inner)
    return RasterGrid(elevation.ncols, elevation.nrows, elevation.xllcorner, elevation.yllcorner,
                      elevation.cellsize, nodata, slope)


# status codes for vectorized raster sampling
OK, OUT_OF_EXTENT, NO_DATA = 0, 1, 2


def sample_raster_many(grid: RasterGrid, lons, lats) -> tuple[np.ndarray, np.ndarray]:
    """Cell values under each point plus a status code per point."""
    lons = np.atleast_1d(np.asarray(lons, dtype=float))
    lats = np.atleast_1d(np.asarray(lats, dtype=float))
    inside = ((lons >= grid.xllcorner) & (lons <= grid.xright)
              & (lats >= grid.yllcorner) & (lats <= grid.ytop))
    col = np.floor((lons - grid.xllcorner) / grid.cellsize).astype(np.int64)
    row = np.floor((grid.ytop - lats) / grid.cellsize).astype(np.int64)
    col = np.clip(col, 0, grid.ncols - 1)
    row = np.clip(row, 0, grid.nrows - 1)
    values = grid.values[row, col]
    status = np.where(inside, OK, OUT_OF_EXTENT)
    nodata = inside & ((values == grid.nodata) | ~np.isfinite(values))
    status[nodata] = NO_DATA
    return np.where(status == OK, values, np.nan), status


def sample_raster(grid: RasterGrid, p: GeoPoint) -> float:
    """Value of the cell containing ``p`` (no interpolation)."""
    v, status = sample_raster_many(grid, p.lon, p.lat)
    if status[0] == OUT_OF_EXTENT:
        raise OutOfExtent(f"({p.lon}, {p.lat}) lies outside the raster extent")
    if status[0] == NO_DATA:
        raise NoDataCell(f"({p.lon}, {p.lat}) falls on a nodata cell")
    return float(v[0])


# ---------------------------------------------------------------------------
# prepared layers

@dataclass
class HubLayer:
    index: HubIndex
    category_codes: np.ndarray | None = None  # per hub position
    weights: np.ndarray | None = None  # conflict deaths per hub position


@dataclass
class PreparedLayers:
    hubs: dict[str, HubLayer] = field(default_factory=dict)
    rasters: dict[str, RasterGrid] = field(default_factory=dict)
    slope: RasterGrid | None = None

    def hub(self, role: str) -> HubLayer:
        if role not in self.hubs:
            raise MissingLayer(role)
        return self.hubs[role]

    def raster(self, role: str) -> RasterGrid:
        if role not in self.rasters:
            raise MissingLayer(role)
        return self.rasters[role]


def _codes(attrs: Sequence[dict], attribute: str | None, vocab: tuple[str, ...]) -> np.ndarray:
    lookup = {v: k for k, v in enumerate(vocab)}
    return np.array([lookup.get(a.get(attribute, UNKNOWN) if attribute else UNKNOWN, 0) for a in attrs],
                    dtype=np.int64)


def prepare_layers(catalog: LayerCatalog, schema: FeatureSchema,
                   densify_lines_m: float | None = None) -> PreparedLayers:
    """Load every layer the schema needs and build its hub index or raster."""
    needed = set(schema.roles)
    catalog.require(sorted(needed))
    vocab_by_role = {f.role: f.vocabulary for f in schema.features if f.kind == "categorical"}
    layers = PreparedLayers()
    for role in sorted(needed):
        spec = catalog[role]
        if role in ("population", "elevation"):
            layers.rasters[role] = parse_ascii_grid(spec.path)
            continue
        if role == "conflict":
            events = parse_conflict_csv(spec.path)
            if not events:
                raise MissingLayer(role)
            lon = [e.location.lon for e in events]
            lat = [e.location.lat for e in events]
            layers.hubs[role] = HubLayer(HubIndex(lon, lat), None,
                                         np.array([e.estimated_deaths for e in events], dtype=float))
            continue
        if role == "border":
            # distance to the border line, i.e. to the ring vertices
            polys = parse_geojson_layer(spec.path, "polygon")
            pts = np.vstack([_ring_points(r, densify_lines_m) for p in polys for r in (p.exterior, *p.holes)])
            layers.hubs[role] = HubLayer(HubIndex(pts[:, 0], pts[:, 1]))
            continue
        feats = parse_geojson_layer(spec.path, spec.kind)
        attrs = [f.attributes for f in feats]
        vocab = vocab_by_role.get(role, ())
        if spec.kind == "polygon":
            cents = [polygon_centroid(p) for p in feats]
            lon = [c.lon for c in cents]
            lat = [c.lat for c in cents]
            codes = _codes(attrs, spec.category_attribute, vocab) if vocab else None
        elif spec.kind == "line":
            parts = [densify_line(f, densify_lines_m) if densify_lines_m else vertex_array(f) for f in feats]
            allv = np.vstack(parts)
            lon, lat = allv[:, 0], allv[:, 1]
            codes = None
            if vocab:
                per = _codes(attrs, spec.category_attribute, vocab)
                codes = np.repeat(per, [len(p) for p in parts])
        else:
            lon = [f.lon for f in feats]
            lat = [f.lat for f in feats]
            codes = _codes(attrs, spec.category_attribute, vocab) if vocab else None
        layers.hubs[role] = HubLayer(HubIndex(lon, lat), codes)
    if "elevation" in layers.rasters and any(f.source == "slope" for f in schema.features):
        layers.slope = derive_slope_raster(layers.rasters["elevation"])
    return layers


def _ring_points(ring: np.ndarray, densify_m: float | None) -> np.ndarray:
    from .geo_core import PolylineFeature
    pts = densify_line(PolylineFeature(ring), densify_m) if densify_m else ring
    return pts[:-1] if len(pts) > 1 and np.array_equal(pts[0], pts[-1]) else pts


# ---------------------------------------------------------------------------
# featurization

def _featurize_block(lons: np.ndarray, lats: np.ndarray, layers: PreparedLayers,
                     schema: FeatureSchema) -> tuple[np.ndarray, np.ndarray]:
    n = len(lons)
    out = np.empty((n, len(schema)), dtype=float)
    status = np.zeros(n, dtype=np.int64)
    nearest_cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def near(role):
        if role not in nearest_cache:
            _, d, pos = layers.hub(role).index.nearest_many(lons, lats)
            nearest_cache[role] = (d, pos)
        return nearest_cache[role]

    for j, f in enumerate(schema.features):
        if f.source == "distance":
            out[:, j] = near(f.role)[0]
        elif f.source == "deaths":
            layer = layers.hub(f.role)
            out[:, j] = layer.weights[near(f.role)[1]]
        elif f.source == "category":
            layer = layers.hub(f.role)
            pos = near(f.role)[1]
            out[:, j] = 0 if layer.category_codes is None else layer.category_codes[pos]
        elif f.source in ("raster", "slope"):
            grid = layers.slope if f.source == "slope" else layers.raster(f.role)
            if grid is None:
                raise MissingLayer(f.role)
            vals, st = sample_raster_many(grid, lons, lats)
            out[:, j] = vals
            status = np.maximum(status, st)
        else:
            raise ValueError(f"unknown feature source {f.source!r}")
    return out, status


def featurize_many(lons, lats, layers: PreparedLayers, schema: FeatureSchema,
                   block: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows for many points plus per-point raster status codes."""
    lons = np.atleast_1d(np.asarray(lons, dtype=float))
    lats = np.atleast_1d(np.asarray(lats, dtype=float))
    parts = map_ordered(lambda s: _featurize_block(lons[s], lats[s], layers, schema), chunks(len(lons), block))
    if not parts:
        return np.empty((0, len(schema))), np.empty(0, dtype=np.int64)
    return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def featurize_point(p: GeoPoint, layers: PreparedLayers, schema: FeatureSchema) -> FeatureVector:
    values, status = featurize_many(p.lon, p.lat, layers, schema)
    if status[0] == OUT_OF_EXTENT:
        raise OutOfExtent(f"({p.lon}, {p.lat}) lies outside a raster extent")
    if status[0] == NO_DATA:
        raise NoDataCell(f"({p.lon}, {p.lat}) falls on a nodata cell")
    return FeatureVector(schema, values[0])


# ---------------------------------------------------------------------------
# matrices

@dataclass
class LabeledMatrix:
    schema: FeatureSchema
    X: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    lons: np.ndarray
    lats: np.ndarray
    train_mask: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        n = len(self.X)
        if not (len(self.labels) == len(self.ids) == len(self.lons) == len(self.lats) == len(self.train_mask) == n):
            raise ValueError("row count, labels and ids must align")

    def __len__(self) -> int:
        return len(self.X)

    def standardized(self) -> np.ndarray:
        return (self.X - self.mean) / np.where(self.std > 0, self.std, 1.0)

    def rows(self, mask) -> "LabeledMatrix":
        mask = np.asarray(mask)
        return LabeledMatrix(self.schema, self.X[mask], self.labels[mask], self.ids[mask], self.lons[mask],
                             self.lats[mask], self.train_mask[mask], self.mean, self.std)

    @property
    def train(self) -> "LabeledMatrix":
        return self.rows(self.train_mask)

    @property
    def test(self) -> "LabeledMatrix":
        return self.rows(~self.train_mask)


def column_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return X.mean(axis=0), X.std(axis=0)


def build_matrix(samples: SampleSet, layers: PreparedLayers, schema: FeatureSchema,
                 training_mask=None) -> LabeledMatrix:
    """Feature matrix in sample-id order; column stats from training rows only."""
    if not len(samples):
        raise ValueError("no samples to featurize")
    ids = samples.ids
    if len(np.unique(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    mask = np.ones(len(samples), dtype=bool) if training_mask is None else np.asarray(training_mask, dtype=bool)
    if len(mask) != len(samples):
        raise ValueError("training mask length differs from sample count")
    order = np.argsort(ids, kind="stable")
    lons, lats = samples.lons[order], samples.lats[order]
    X, status = featurize_many(lons, lats, layers, schema)
    failed = np.flatnonzero(status != OK)
    if len(failed):
        reasons = {int(ids[order][k]): ("out of extent" if status[k] == OUT_OF_EXTENT else "nodata cell")
                   for k in failed}
        raise FeaturizationFailed(ids[order][failed], reasons)
    mask = mask[order]
    if not mask.any():
        raise ValueError("training mask selects no rows")
    mean, std = column_stats(X[mask])
    return LabeledMatrix(schema, X, samples.labels[order], ids[order], lons, lats, mask, mean, std)


def concat_matrices(train: LabeledMatrix, other: LabeledMatrix) -> LabeledMatrix:
    """Stack two matrices sharing a schema, keeping ``train``'s column stats."""
    return LabeledMatrix(train.schema, np.vstack([train.X, other.X]),
                         np.concatenate([train.labels, other.labels]), np.concatenate([train.ids, other.ids]),
                         np.concatenate([train.lons, other.lons]), np.concatenate([train.lats, other.lats]),
                         np.concatenate([train.train_mask, other.train_mask]), train.mean, train.std)


def write_matrix(path, matrix: LabeledMatrix, sidecar: bool = True) -> None:
    """CSV ``id,lon,lat,label,<features>`` plus a ``.schema.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lon", "lat", "label", *matrix.schema.names])
        cat = matrix.schema.categorical_mask
        for k in range(len(matrix)):
            vals = [str(int(v)) if c else repr(float(v)) for v, c in zip(matrix.X[k], cat)]
            w.writerow([int(matrix.ids[k]), repr(float(matrix.lons[k])), repr(float(matrix.lats[k])),
                        int(matrix.labels[k]), *vals])
    if sidecar:
        doc = {
            "schema": matrix.schema.to_json(),
            "fingerprint": matrix.schema.fingerprint,
            "mean": [float(v) for v in matrix.mean],
            "std": [float(v) for v in matrix.std],
            "training_ids": [int(i) for i in matrix.ids[matrix.train_mask]],
        }
        sidecar_path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".schema.json")


def read_matrix(path, sidecar: str | Path | None = None) -> LabeledMatrix:
    path = Path(path)
    meta = json.loads(Path(sidecar or sidecar_path(path)).read_text(encoding="utf-8"))
    schema = FeatureSchema.from_json(meta["schema"])
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[4:] != schema.names:
            raise ParseError(f"{path}: columns do not match the schema sidecar", row=0)
        rows = list(reader)
    try:
        arr = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    ids = arr[:, 0].astype(np.int64)
    train_ids = set(meta.get("training_ids", ()))
    mask = np.array([int(i) in train_ids for i in ids], dtype=bool)
    return LabeledMatrix(schema, arr[:, 4:], arr[:, 3].astype(np.int64), ids, arr[:, 1], arr[:, 2], mask,
                         np.asarray(meta["mean"], dtype=float), np.asarray(meta["std"], dtype=float))
