"""Geometry primitives on WGS84 coordinates.

Distances are great-circle meters on a sphere of radius 6,371,000 m.  Planar
work (areas, centroids, offset rings) happens in a per-feature equirectangular
:class:`LocalFrame`, which is affine in (lon, lat) and therefore maps
centroids and straight segments back exactly.

Coordinate arrays are ``(n, 2)`` float arrays in ``(lon, lat)`` order, the
GeoJSON convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DegenerateGeometry

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEG_LAT = math.pi / 180.0 * EARTH_RADIUS_M

# smallest planar area (m^2) accepted for centroid and buffer construction
MIN_AREA_M2 = 1e-9
# angular step for the rounded corners of offset rings
_ARC_STEP_RAD = math.radians(2.0)


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        lon, lat = float(self.lon), float(self.lat)
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise ValueError(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"longitude {lon} outside [-180, 180]")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "lat", lat)

    def __iter__(self):
        yield self.lon
        yield self.lat


def _as_ring(coords, what: str) -> np.ndarray:
    ring = np.asarray([tuple(c)[:2] for c in coords], dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise ValueError(f"{what}: expected (lon, lat) pairs")
    if not np.all(np.isfinite(ring)):
        raise ValueError(f"{what}: non-finite coordinate")
    return ring


@dataclass(frozen=True, eq=False)
class PolygonFeature:
    """Closed exterior ring with optional holes.

    Self-intersecting exteriors are tolerated; containment then follows the
    even-odd rule.
    """

    exterior: np.ndarray
    holes: tuple = ()
    attributes: Mapping[str, str] = field(default_factory=dict)
    feature_id: int = 0

    def __post_init__(self):
        ext = _as_ring(self.exterior, "exterior")
        _check_ring(ext, "exterior")
        holes = tuple(_as_ring(h, "hole") for h in self.holes)
        for h in holes:
            _check_ring(h, "hole")
        object.__setattr__(self, "exterior", ext)
        object.__setattr__(self, "holes", holes)
        object.__setattr__(self, "attributes", {str(k): str(v) for k, v in dict(self.attributes).items()})

    @classmethod
    def from_coords(cls, coords, holes=(), attributes=None, feature_id: int = 0) -> "PolygonFeature":
        """Build from an open or closed vertex list; the ring is closed if needed."""
        ring = _close(_as_ring(coords, "exterior"))
        return cls(ring, tuple(_close(_as_ring(h, "hole")) for h in holes), attributes or {}, feature_id)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.exterior.min(axis=0)
        hi = self.exterior.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def frame(self) -> "LocalFrame":
        x0, y0, x1, y1 = self.bbox
        return LocalFrame(GeoPoint((x0 + x1) / 2.0, (y0 + y1) / 2.0))


@dataclass(frozen=True, eq=False)
class PolylineFeature:
    vertices: np.ndarray
    attributes: Mapping[str, str] = field(default_factory=dict)
    feature_id: int = 0

    def __post_init__(self):
        v = _as_ring(self.vertices, "polyline")
        if len(v) < 2:
            raise ValueError("polyline needs at least 2 vertices")
        if np.any(np.all(v[1:] == v[:-1], axis=1)):
            raise ValueError("polyline has repeated consecutive vertices")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "attributes", {str(k): str(v) for k, v in dict(self.attributes).items()})


def _close(ring: np.ndarray) -> np.ndarray:
    if len(ring) and not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    return ring


def _check_ring(ring: np.ndarray, what: str) -> None:
    if len(ring) < 4:
        raise ValueError(f"{what} ring needs at least 4 vertices (closed)")
    if not np.array_equal(ring[0], ring[-1]):
        raise ValueError(f"{what} ring is not closed")


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular tangent frame; x east and y north, in meters."""

    origin: GeoPoint

    @property
    def meters_per_deg_lat(self) -> float:
        return METERS_PER_DEG_LAT

    @property
    def meters_per_deg_lon(self) -> float:
        return METERS_PER_DEG_LAT * math.cos(math.radians(self.origin.lat))

    def to_xy(self, lon, lat):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        return ((lon - self.origin.lon) * self.meters_per_deg_lon,
                (lat - self.origin.lat) * self.meters_per_deg_lat)

    def to_lonlat(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (self.origin.lon + x / self.meters_per_deg_lon,
                self.origin.lat + y / self.meters_per_deg_lat)

    def ring_xy(self, ring: np.ndarray) -> np.ndarray:
        x, y = self.to_xy(ring[:, 0], ring[:, 1])
        return np.column_stack([x, y])


# ---------------------------------------------------------------------------
# distances

def haversine_array(lon1, lat1, lon2, lat2):
    """Vectorized great-circle distance in meters (broadcasting)."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(v, dtype=float)) for v in (lon1, lat1, lon2, lat2))
    s_dlat = np.sin((lat2 - lat1) * 0.5)
    s_dlon = np.sin((lon2 - lon1) * 0.5)
    h = s_dlat * s_dlat + np.cos(lat1) * np.cos(lat2) * s_dlon * s_dlon
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    return float(haversine_array(a.lon, a.lat, b.lon, b.lat))


# ---------------------------------------------------------------------------
# containment

def _on_boundary(px, py, ring) -> np.ndarray:
    """Points lying on any segment of ``ring`` (closed), within round-off."""
    out = np.zeros(px.shape, dtype=bool)
    scale = max(1.0, float(np.abs(ring).max()))
    tol = 1e-12 * scale
    for (x1, y1), (x2, y2) in zip(ring[:-1], ring[1:]):
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        seg = math.hypot(x2 - x1, y2 - y1)
        near_line = np.abs(cross) <= tol * max(seg, 1e-300)
        in_box = ((px >= min(x1, x2) - tol) & (px <= max(x1, x2) + tol)
                  & (py >= min(y1, y2) - tol) & (py <= max(y1, y2) + tol))
        out |= near_line & in_box
    return out


def _even_odd(px, py, ring) -> np.ndarray:
    inside = np.zeros(px.shape, dtype=bool)
    xi, yi = ring[:-1, 0], ring[:-1, 1]
    xj, yj = ring[1:, 0], ring[1:, 1]
    for k in range(len(xi)):
        straddle = (yi[k] > py) != (yj[k] > py)
        if not straddle.any():
            continue
        x_cross = xi[k] + (py - yi[k]) * (xj[k] - xi[k]) / (yj[k] - yi[k]) if yj[k] != yi[k] else xi[k]
        inside ^= straddle & (px < x_cross)
    return inside


def points_in_polygon(lons, lats, poly: PolygonFeature) -> np.ndarray:
    """Vectorized :func:`point_in_polygon` over coordinate arrays."""
    px = np.atleast_1d(np.asarray(lons, dtype=float))
    py = np.atleast_1d(np.asarray(lats, dtype=float))
    x0, y0, x1, y1 = poly.bbox
    result = np.zeros(px.shape, dtype=bool)
    cand = (px >= x0) & (px <= x1) & (py >= y0) & (py <= y1)
    if not cand.any():
        return result
    cx, cy = px[cand], py[cand]
    inside = _even_odd(cx, cy, poly.exterior) | _on_boundary(cx, cy, poly.exterior)
    for hole in poly.holes:
        strictly_in_hole = _even_odd(cx, cy, hole) & ~_on_boundary(cx, cy, hole)
        inside &= ~strictly_in_hole
    result[cand] = inside
    return result


def point_in_polygon(p: GeoPoint, poly: PolygonFeature) -> bool:
    """Even-odd containment; points on the boundary count as inside."""
    return bool(points_in_polygon(p.lon, p.lat, poly)[0])


# ---------------------------------------------------------------------------
# areas and centroids

def _ring_area_centroid(xy: np.ndarray) -> tuple[float, float, float]:
    x, y = xy[:-1, 0], xy[:-1, 1]
    xn, yn = xy[1:, 0], xy[1:, 1]
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if a == 0.0:
        return 0.0, 0.0, 0.0
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return float(a), float(cx), float(cy)


def planar_area(poly: PolygonFeature) -> float:
    """Area in m^2 (exterior minus holes) in the polygon's own frame."""
    frame = poly.frame()
    area = abs(_ring_area_centroid(frame.ring_xy(poly.exterior))[0])
    for h in poly.holes:
        area -= abs(_ring_area_centroid(frame.ring_xy(h))[0])
    return area


def polygon_centroid(poly: PolygonFeature) -> GeoPoint:
    frame = poly.frame()
    a, cx, cy = _ring_area_centroid(frame.ring_xy(poly.exterior))
    a = abs(a)
    mx, my = a * cx, a * cy
    total = a
    for h in poly.holes:
        ha, hx, hy = _ring_area_centroid(frame.ring_xy(h))
        ha = abs(ha)
        mx -= ha * hx
        my -= ha * hy
        total -= ha
    if total < MIN_AREA_M2:
        raise DegenerateGeometry(f"polygon {poly.feature_id} has planar area {total:.3g} m^2")
    lon, lat = frame.to_lonlat(mx / total, my / total)
    return GeoPoint(float(lon), float(lat))


def extract_vertices(line: PolylineFeature) -> list[GeoPoint]:
    """Line vertices in order; a closing vertex equal to the first is dropped."""
    return [GeoPoint(lon, lat) for lon, lat in vertex_array(line)]


def vertex_array(line: PolylineFeature) -> np.ndarray:
    v = line.vertices
    keep = np.ones(len(v), dtype=bool)
    keep[1:] = np.any(v[1:] != v[:-1], axis=1)
    v = v[keep]
    if len(v) > 2 and np.array_equal(v[0], v[-1]):
        v = v[:-1]
    return v


def densify_line(line: PolylineFeature, spacing_m: float) -> np.ndarray:
    """Vertices plus interpolated points so no gap exceeds ``spacing_m``."""
    v = line.vertices
    frame = LocalFrame(GeoPoint(*v.mean(axis=0)))
    xy = frame.ring_xy(v)
    out = [v[:1]]
    for k in range(len(v) - 1):
        seg = math.hypot(*(xy[k + 1] - xy[k]))
        n = max(1, math.ceil(seg / spacing_m))
        t = np.arange(1, n + 1)[:, None] / n
        out.append(v[k] + t * (v[k + 1] - v[k]))
    return np.vstack(out)


# ---------------------------------------------------------------------------
# boundary distance and offset rings

def _segments_distance(px, py, xy: np.ndarray) -> np.ndarray:
    """Min planar distance from points to the segments of a closed ring."""
    px = np.asarray(px, dtype=float)[:, None]
    py = np.asarray(py, dtype=float)[:, None]
    ax, ay = xy[:-1, 0][None, :], xy[:-1, 1][None, :]
    dx, dy = (xy[1:, 0] - xy[:-1, 0])[None, :], (xy[1:, 1] - xy[:-1, 1])[None, :]
    seg2 = dx * dx + dy * dy
    t = np.where(seg2 > 0, ((px - ax) * dx + (py - ay) * dy) / np.where(seg2 > 0, seg2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    return np.sqrt(ex * ex + ey * ey).min(axis=1)


def boundary_distance(lons, lats, poly: PolygonFeature, frame: LocalFrame | None = None) -> np.ndarray:
    """Shortest planar distance (m) from points to the polygon's exterior ring."""
    frame = frame or poly.frame()
    x, y = frame.to_xy(np.atleast_1d(lons), np.atleast_1d(lats))
    return _segments_distance(x, y, frame.ring_xy(poly.exterior))


def _offset_ring(xy: np.ndarray, distance: float) -> np.ndarray:
    """Outward offset of a CCW closed ring, rounded at convex corners."""
    pts = xy[:-1]
    n = len(pts)
    out = []
    for i in range(n):
        prev_pt, cur, nxt = pts[i - 1], pts[i], pts[(i + 1) % n]
        e_in = cur - prev_pt
        e_out = nxt - cur
        # outward normal of a CCW edge (dx, dy) is (dy, -dx)
        n_in = np.array([e_in[1], -e_in[0]]) / math.hypot(*e_in)
        n_out = np.array([e_out[1], -e_out[0]]) / math.hypot(*e_out)
        turn = e_in[0] * e_out[1] - e_in[1] * e_out[0]
        a0 = math.atan2(n_in[1], n_in[0])
        a1 = math.atan2(n_out[1], n_out[0])
        if turn > 0:
            # convex corner: counter-clockwise arc from n_in to n_out
            sweep = (a1 - a0) % (2 * math.pi)
            steps = max(1, math.ceil(sweep / _ARC_STEP_RAD))
            for s in range(steps + 1):
                a = a0 + sweep * s / steps
                out.append(cur + distance * np.array([math.cos(a), math.sin(a)]))
        else:
            bis = n_in + n_out
            norm = math.hypot(*bis)
            if norm < 1e-12:
                out.append(cur + distance * n_in)
                continue
            bis /= norm
            cos_half = float(bis @ n_in)
            out.append(cur + bis * distance / max(cos_half, 1e-6))
    out.append(out[0])
    return np.asarray(out)


def buffer_chainage_points(poly: PolygonFeature, distance: float, spacing: float) -> list[GeoPoint]:
    """Points every ``spacing`` meters along the ring ``distance`` meters outside ``poly``.

    The offset ring moves each exterior vertex outward along its bisector
    normal (rounded at convex corners), so every ring point sits at the buffer
    distance from the boundary.  Candidates from self-overlapping parts of the
    ring (deep concavities) fail the 1% distance check and are dropped.
    """
    return [GeoPoint(lon, lat) for lon, lat in buffer_chainage_array(poly, distance, spacing)]


def buffer_chainage_array(poly: PolygonFeature, distance: float, spacing: float) -> np.ndarray:
    if not distance > 0:
        raise ValueError("buffer distance must be > 0")
    if not spacing > 0:
        raise ValueError("chainage spacing must be > 0")
    frame = poly.frame()
    xy = frame.ring_xy(poly.exterior)
    signed = _ring_area_centroid(xy)[0]
    if abs(signed) < MIN_AREA_M2:
        raise DegenerateGeometry(f"polygon {poly.feature_id} has near-zero area")
    if signed < 0:
        xy = xy[::-1]
    # drop repeated vertices, they have no edge direction
    keep = np.ones(len(xy), dtype=bool)
    keep[1:] = np.any(xy[1:] != xy[:-1], axis=1)
    xy = xy[keep]
    ring = _offset_ring(xy, distance)
    seg = np.hypot(*np.diff(ring, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    count = max(1, int(round(total / spacing)))
    s = np.arange(count) * (total / count)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    t = np.where(seg[idx] > 0, (s - cum[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0), 0.0)
    pts = ring[idx] + t[:, None] * (ring[idx + 1] - ring[idx])
    d = _segments_distance(pts[:, 0], pts[:, 1], xy)
    pts = pts[np.abs(d - distance) <= 0.01 * distance]
    lon, lat = frame.to_lonlat(pts[:, 0], pts[:, 1])
    out = np.column_stack([lon, lat])
    if len(out):
        out = out[~points_in_polygon(out[:, 0], out[:, 1], poly)]
    return out
