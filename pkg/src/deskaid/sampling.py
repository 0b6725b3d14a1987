"""Labeled sample generation.

Positives are drawn inside hazard polygons, two per polygon whatever its
size.  Negatives come from one of three strategies:

* ``random`` - uniform over the border polygon, outside every hazard;
* ``hn<buffer>`` - hard negatives on the ring ``buffer`` meters around each
  hazard polygon (presets 50, 500 and 5000 m);
* ``hybrid`` - a mix of the three hard-negative presets and random points.

Each polygon draws from its own generator seeded by (master seed, stream,
polygon index), so results do not depend on processing order.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import (DegenerateGeometry, EmptyLayer, InsufficientNegatives, ParseError,
                     SamplingExhausted)
from .geo_core import (GeoPoint, PolygonFeature, buffer_chainage_array,
                       planar_area, points_in_polygon, polygon_centroid)

log = logging.getLogger(__name__)

HAZARD = 1
CLEAR = 0
BUFFER_PRESETS = (50.0, 500.0, 5000.0)
STRATEGIES = ("positive", "random", "hn50", "hn500", "hn5000")
MIXES = ("random", "hn50", "hn500", "hn5000", "hybrid")
HYBRID_SHARES = {"hn50": 0.25, "hn500": 0.25, "hn5000": 0.25, "random": 0.25}

MAX_TRIALS = 1000
MIN_ACCEPTANCE = 1e-4
ACCEPTANCE_WINDOW = 100_000

_STREAM_POSITIVE = 1
_STREAM_RANDOM = 2
_STREAM_HARD = 3
_STREAM_ASSEMBLE = 4
_STREAM_SPLIT = 5
_DEFICIT_KEY = 2**31 - 1


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in key]]))


def strategy_for_buffer(buffer: float) -> str:
    return f"hn{float(buffer):g}"


@dataclass(frozen=True)
class SamplePoint:
    id: int
    lon: float
    lat: float
    label: int
    strategy: str
    source_polygon_id: int | None = None

    def __post_init__(self):
        if self.label not in (HAZARD, CLEAR):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if (self.label == HAZARD) != (self.strategy == "positive"):
            raise ValueError(f"label {self.label} inconsistent with strategy {self.strategy!r}")

    @property
    def location(self) -> GeoPoint:
        return GeoPoint(self.lon, self.lat)


@dataclass
class SampleSet:
    points: list[SamplePoint]
    seed: int = 0
    strategy_mix: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.points = list(self.points)
        if not self.strategy_mix:
            self.strategy_mix = _mix_counts(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def ids(self) -> np.ndarray:
        return np.array([p.id for p in self.points], dtype=np.int64)

    @property
    def lons(self) -> np.ndarray:
        return np.array([p.lon for p in self.points], dtype=float)

    @property
    def lats(self) -> np.ndarray:
        return np.array([p.lat for p in self.points], dtype=float)

    @property
    def labels(self) -> np.ndarray:
        return np.array([p.label for p in self.points], dtype=np.int64)

    def is_balanced(self) -> bool:
        labels = self.labels
        return int((labels == HAZARD).sum()) == int((labels == CLEAR).sum())

    def subset(self, mask) -> "SampleSet":
        mask = np.asarray(mask, dtype=bool)
        return SampleSet([p for p, keep in zip(self.points, mask) if keep], self.seed)


def _mix_counts(points: Iterable[SamplePoint]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for p in points:
        counts[p.strategy] = counts.get(p.strategy, 0) + 1
    return dict(sorted(counts.items()))


class HazardSet:
    """Fast "inside any hazard polygon" test with a bounding-box prefilter."""

    def __init__(self, polygons: Sequence[PolygonFeature]):
        self.polygons = list(polygons)
        boxes = np.array([p.bbox for p in self.polygons], dtype=float).reshape(-1, 4)
        self.boxes = boxes

    def __len__(self) -> int:
        return len(self.polygons)

    def contains(self, lons, lats) -> np.ndarray:
        lons = np.atleast_1d(np.asarray(lons, dtype=float))
        lats = np.atleast_1d(np.asarray(lats, dtype=float))
        inside = np.zeros(lons.shape, dtype=bool)
        if not len(self.polygons) or not len(lons):
            return inside
        order = np.argsort(lons, kind="stable")
        sorted_lons = lons[order]
        for poly, (x0, y0, x1, y1) in zip(self.polygons, self.boxes):
            lo = np.searchsorted(sorted_lons, x0, side="left")
            hi = np.searchsorted(sorted_lons, x1, side="right")
            if hi <= lo:
                continue
            cand = order[lo:hi]
            cand = cand[~inside[cand]]
            cand = cand[(lats[cand] >= y0) & (lats[cand] <= y1)]
            if len(cand):
                inside[cand] |= points_in_polygon(lons[cand], lats[cand], poly)
        return inside


# ---------------------------------------------------------------------------
# positives

def _uniform_in_polygon(poly: PolygonFeature, rng: np.random.Generator) -> tuple[float, float] | None:
    x0, y0, x1, y1 = poly.bbox
    lon = rng.uniform(x0, x1, MAX_TRIALS)
    lat = rng.uniform(y0, y1, MAX_TRIALS)
    hit = np.flatnonzero(points_in_polygon(lon, lat, poly))
    if len(hit) == 0:
        return None
    return float(lon[hit[0]]), float(lat[hit[0]])


def sample_positives(hazards: Sequence[PolygonFeature], seed: int, per_polygon: int = 2,
                     start_id: int = 0) -> list[SamplePoint]:
    """``per_polygon`` uniform points inside every hazard polygon."""
    if not hazards:
        raise EmptyLayer("no hazard polygons")
    out = []
    for i, poly in enumerate(hazards):
        rng = _rng(seed, _STREAM_POSITIVE, i)
        for _ in range(per_polygon):
            hit = _uniform_in_polygon(poly, rng)
            if hit is None:
                hit = _fallback_point(poly)
                log.warning("polygon %d: %d rejection trials failed, using fallback point", i, MAX_TRIALS)
            out.append(SamplePoint(start_id + len(out), hit[0], hit[1], HAZARD, "positive", i))
    return out


def _fallback_point(poly: PolygonFeature) -> tuple[float, float]:
    try:
        c = polygon_centroid(poly)
        if points_in_polygon(c.lon, c.lat, poly)[0]:
            return c.lon, c.lat
    except DegenerateGeometry:
        pass
    # a vertex is on the boundary and therefore inside
    return float(poly.exterior[0, 0]), float(poly.exterior[0, 1])


# ---------------------------------------------------------------------------
# negatives

def sample_random_negatives(border: PolygonFeature, hazards: Sequence[PolygonFeature] | HazardSet,
                            n: int, seed: int, start_id: int = 0) -> list[SamplePoint]:
    """``n`` points uniform in ``border`` and outside every hazard polygon."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if planar_area(border) <= 0:
        raise DegenerateGeometry("border polygon has no area")
    hz = hazards if isinstance(hazards, HazardSet) else HazardSet(hazards)
    rng = _rng(seed, _STREAM_RANDOM)
    x0, y0, x1, y1 = border.bbox
    batch = max(1024, 2 * n)
    accepted_lon: list[np.ndarray] = []
    accepted_lat: list[np.ndarray] = []
    got = 0
    trials = 0
    while got < n:
        lon = rng.uniform(x0, x1, batch)
        lat = rng.uniform(y0, y1, batch)
        ok = points_in_polygon(lon, lat, border)
        ok[ok] = ~hz.contains(lon[ok], lat[ok])
        accepted_lon.append(lon[ok])
        accepted_lat.append(lat[ok])
        got += int(ok.sum())
        trials += batch
        if trials >= ACCEPTANCE_WINDOW and got / trials < MIN_ACCEPTANCE:
            raise SamplingExhausted(f"acceptance rate {got / trials:.2e} after {trials} draws")
    lon = np.concatenate(accepted_lon)[:n]
    lat = np.concatenate(accepted_lat)[:n]
    return [SamplePoint(start_id + k, float(a), float(b), CLEAR, "random") for k, (a, b) in enumerate(zip(lon, lat))]


def hard_negative_candidates(hazards: Sequence[PolygonFeature], buffer: float,
                             hazard_set: HazardSet | None = None) -> list[np.ndarray]:
    """Per-polygon chainage points on the buffer ring, minus points inside any hazard."""
    hz = hazard_set or HazardSet(hazards)
    spacing = max(float(buffer), 100.0)
    out = []
    for poly in hazards:
        pts = buffer_chainage_array(poly, float(buffer), spacing)
        if len(pts):
            pts = pts[~hz.contains(pts[:, 0], pts[:, 1])]
        out.append(pts)
    return out


def sample_hard_negatives(hazards: Sequence[PolygonFeature], buffer: float, seed: int,
                          per_polygon: int = 2, start_id: int = 0,
                          hazard_set: HazardSet | None = None) -> list[SamplePoint]:
    """Hard negatives on the ``buffer`` ring, ``per_polygon`` per hazard.

    A polygon whose ring has too few surviving candidates leaves a deficit
    that is filled from the leftover candidates of all other polygons, so the
    total always equals ``per_polygon * len(hazards)``.
    """
    if not buffer > 0:
        raise ValueError("buffer must be > 0")
    if not hazards:
        raise EmptyLayer("no hazard polygons")
    strategy = strategy_for_buffer(buffer)
    candidates = hard_negative_candidates(hazards, buffer, hazard_set)
    chosen: list[tuple[float, float, int]] = []
    leftovers: list[tuple[float, float, int]] = []
    deficit = 0
    for i, pts in enumerate(candidates):
        rng = _rng(seed, _STREAM_HARD, int(round(buffer * 1000)), i)
        take = min(per_polygon, len(pts))
        pick = rng.choice(len(pts), size=take, replace=False) if take else np.empty(0, dtype=int)
        picked = set(int(j) for j in pick)
        chosen.extend((float(pts[j, 0]), float(pts[j, 1]), i) for j in pick)
        leftovers.extend((float(pts[j, 0]), float(pts[j, 1]), i) for j in range(len(pts)) if j not in picked)
        deficit += per_polygon - take
    if deficit:
        if deficit > len(leftovers):
            raise SamplingExhausted(
                f"{strategy}: need {deficit} extra candidates, only {len(leftovers)} remain")
        rng = _rng(seed, _STREAM_HARD, int(round(buffer * 1000)), _DEFICIT_KEY)
        extra = rng.choice(len(leftovers), size=deficit, replace=False)
        chosen.extend(leftovers[j] for j in sorted(int(e) for e in extra))
        log.info("%s: filled deficit of %d from other polygons", strategy, deficit)
    return [SamplePoint(start_id + k, lon, lat, CLEAR, strategy, src) for k, (lon, lat, src) in enumerate(chosen)]


# ---------------------------------------------------------------------------
# assembling and splitting

def mix_counts(mix: str, n: int, shares: dict[str, float] | None = None) -> dict[str, int]:
    """Negatives needed per strategy for ``n`` positives under ``mix``."""
    if mix != "hybrid":
        return {mix: n}
    shares = shares or HYBRID_SHARES
    names = list(shares)
    total = sum(shares.values())
    counts = {k: int(np.floor(n * shares[k] / total)) for k in names}
    rest = n - sum(counts.values())
    for k in names[:rest]:
        counts[k] += 1
    return counts


def assemble_training_set(positives: Sequence[SamplePoint], negatives_by_strategy: dict[str, Sequence[SamplePoint]],
                          mix: str, seed: int, shares: dict[str, float] | None = None) -> SampleSet:
    """Balanced, shuffled set: all positives plus as many negatives drawn per ``mix``.

    Points are renumbered 0..N-1 in shuffled order.
    """
    if mix not in MIXES:
        raise ValueError(f"unknown mix {mix!r}; expected one of {MIXES}")
    n = len(positives)
    rng = _rng(seed, _STREAM_ASSEMBLE)
    negatives: list[SamplePoint] = []
    for strategy, count in mix_counts(mix, n, shares).items():
        pool = list(negatives_by_strategy.get(strategy, ()))
        if len(pool) < count:
            raise InsufficientNegatives(strategy, count, len(pool))
        pick = np.sort(rng.choice(len(pool), size=count, replace=False))
        negatives.extend(pool[j] for j in pick)
    points = list(positives) + negatives
    order = rng.permutation(len(points))
    shuffled = [replace(points[j], id=k) for k, j in enumerate(order)]
    return SampleSet(shuffled, seed)


def split_train_test(samples: SampleSet, test_fraction: float = 0.25, seed: int = 0) -> tuple[SampleSet, SampleSet]:
    """Stratified split; point order is preserved inside each part."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = _rng(seed, _STREAM_SPLIT)
    labels = samples.labels
    test = np.zeros(len(samples), dtype=bool)
    for label in (CLEAR, HAZARD):
        idx = np.flatnonzero(labels == label)
        k = int(round(test_fraction * len(idx)))
        test[rng.permutation(idx)[:k]] = True
    return (SampleSet([p for p, t in zip(samples, test) if not t], samples.seed),
            SampleSet([p for p, t in zip(samples, test) if t], samples.seed))


def split_by_region(samples: SampleSet, region: PolygonFeature) -> tuple[SampleSet, SampleSet]:
    """``(outside, inside)`` partition by containment in ``region``."""
    if not len(samples):
        return SampleSet([], samples.seed), SampleSet([], samples.seed)
    inside = points_in_polygon(samples.lons, samples.lats, region)
    return samples.subset(~inside), samples.subset(inside)


def sample_evaluation_grid(region: PolygonFeature, spacing: float,
                           hazards: Sequence[PolygonFeature] | HazardSet) -> list[SamplePoint]:
    """Regular lattice inside ``region``, labeled by hazard containment.

    Hazard points are tagged ``positive`` and the rest ``random`` so the
    label/strategy invariant of :class:`SamplePoint` holds.
    """
    if not spacing > 0:
        raise ValueError("spacing must be > 0")
    if planar_area(region) <= 0:
        raise DegenerateGeometry("region polygon has no area")
    frame = region.frame()
    xy = frame.ring_xy(region.exterior)
    xmin, ymin = xy.min(axis=0)
    xmax, ymax = xy.max(axis=0)
    xs = np.arange(xmin + spacing / 2.0, xmax, spacing)
    ys = np.arange(ymin + spacing / 2.0, ymax, spacing)
    gx, gy = np.meshgrid(xs, ys)
    lon, lat = frame.to_lonlat(gx.ravel(), gy.ravel())
    keep = points_in_polygon(lon, lat, region)
    lon, lat = lon[keep], lat[keep]
    hz = hazards if isinstance(hazards, HazardSet) else HazardSet(hazards)
    hot = hz.contains(lon, lat)
    return [SamplePoint(k, float(a), float(b), HAZARD if h else CLEAR, "positive" if h else "random")
            for k, (a, b, h) in enumerate(zip(lon, lat, hot))]


# ---------------------------------------------------------------------------
# CSV

SAMPLE_COLUMNS = ("id", "lon", "lat", "label", "strategy", "source_polygon_id")


def write_samples_csv(path, samples: SampleSet | Sequence[SamplePoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for p in samples:
            src = "" if p.source_polygon_id is None else p.source_polygon_id
            w.writerow([p.id, repr(p.lon), repr(p.lat), p.label, p.strategy, src])


def read_samples_csv(path, seed: int = 0) -> SampleSet:
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SAMPLE_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}", row=0)
        for row_index, row in enumerate(reader, start=1):
            try:
                src = row["source_polygon_id"]
                points.append(SamplePoint(int(row["id"]), float(row["lon"]), float(row["lat"]),
                                          int(row["label"]), row["strategy"], int(src) if src else None))
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", row=row_index) from None
    return SampleSet(points, seed)
