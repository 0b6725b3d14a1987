"""Five-band risk classification of point probabilities and GIS export."""

from __future__ import annotations

import csv
import enum
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyMap, OutOfRange
from .ingest import point_geometry, write_feature_collection

DEFAULT_THRESHOLDS = (0.1, 0.2, 0.4, 0.6)


class RiskBand(enum.IntEnum):
    very_low = 0
    low = 1
    medium = 2
    high = 3
    very_high = 4

    @property
    def color(self) -> str:
        return BAND_COLORS[self]


BAND_COLORS = {
    RiskBand.very_low: "blue",
    RiskBand.low: "green",
    RiskBand.medium: "yellow",
    RiskBand.high: "orange",
    RiskBand.very_high: "red",
}


def _check_thresholds(thresholds: Sequence[float]) -> tuple[float, ...]:
    t = tuple(float(v) for v in thresholds)
    if len(t) != 4:
        raise ValueError("need exactly four cut-offs for five bands")
    if not all(0 < v < 1 for v in t) or any(a >= b for a, b in zip(t, t[1:])):
        raise ValueError(f"cut-offs must be strictly increasing inside (0, 1): {t}")
    return t


def band_probability(p: float, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> RiskBand:
    """Band of ``p`` using left-closed intervals, e.g. 0.4 falls in ``high``."""
    t = _check_thresholds(thresholds)
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"probability {p} outside [0, 1]")
    return RiskBand(bisect_right(t, p))


def band_array(p, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> np.ndarray:
    t = _check_thresholds(thresholds)
    p = np.asarray(p, dtype=float)
    if np.any(~((p >= 0.0) & (p <= 1.0))):
        raise OutOfRange("probabilities must lie in [0, 1]")
    return np.searchsorted(np.asarray(t), p, side="right")


@dataclass
class RiskMap:
    lons: np.ndarray
    lats: np.ndarray
    probabilities: np.ndarray
    bands: np.ndarray
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.probabilities)


def build_risk_map(lons, lats, probabilities, thresholds=DEFAULT_THRESHOLDS, provenance=None) -> RiskMap:
    p = np.asarray(probabilities, dtype=float)
    return RiskMap(np.asarray(lons, dtype=float), np.asarray(lats, dtype=float), p, band_array(p, thresholds),
                   _check_thresholds(thresholds), dict(provenance or {}))


def band_summary(risk_map: RiskMap) -> dict[str, float]:
    """Percentage of points per band, in band order."""
    if not len(risk_map):
        raise EmptyMap("risk map has no points")
    counts = np.bincount(np.asarray(risk_map.bands, dtype=np.int64), minlength=len(RiskBand))
    pct = 100.0 * counts / counts.sum()
    return {b.name: float(pct[b]) for b in RiskBand}


def write_summary_csv(path, summary: dict[str, float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["band", "percent"])
        for band, pct in summary.items():
            w.writerow([band, f"{pct:.6f}"])


def export_risk_geojson(risk_map: RiskMap, path) -> None:
    """Points with ``probability`` (6 decimals) and ``risk_band`` properties."""
    if not len(risk_map):
        raise EmptyMap("risk map has no points")
    features = []
    for lon, lat, p, b in zip(risk_map.lons, risk_map.lats, risk_map.probabilities, risk_map.bands):
        band = RiskBand(int(b))
        features.append({"type": "Feature", "geometry": point_geometry(lon, lat, 8),
                         "properties": {"probability": round(float(p), 6), "risk_band": band.name,
                                        "color": band.color}})
    write_feature_collection(Path(path), features)
