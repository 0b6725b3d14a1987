"""Exact nearest-hub queries under great-circle distance.

Hubs are keyed in a k-d tree on their unit-sphere Cartesian coordinates.
Chord length is a strictly increasing function of great-circle angle, so
the tree yields candidates in the right order; every answer is then
re-ranked by haversine distance and hub id, and a ball query backs up any
case where a tie or near-tie could hide behind the candidate cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyLayer, KTooLarge
from .geo_core import EARTH_RADIUS_M, GeoPoint, haversine_array

# relative slack between chord-ordering and haversine-ordering round-off
_SLACK = 1e-9


def _unit_xyz(lon, lat) -> np.ndarray:
    lon = np.radians(np.asarray(lon, dtype=float))
    lat = np.radians(np.asarray(lat, dtype=float))
    c = np.cos(lat)
    return np.column_stack([c * np.cos(lon), c * np.sin(lon), np.sin(lat)])


def _chord(meters):
    return 2.0 * np.sin(np.asarray(meters) / (2.0 * EARTH_RADIUS_M))


@dataclass(frozen=True)
class Neighbor:
    hub_id: int
    category: str | None
    distance: float


class HubIndex:
    """Immutable index over (point, id, category) hubs."""

    def __init__(self, lons, lats, ids=None, categories: Sequence[str | None] | None = None):
        self.lons = np.asarray(lons, dtype=float).ravel()
        self.lats = np.asarray(lats, dtype=float).ravel()
        n = len(self.lons)
        if n == 0:
            raise EmptyLayer("cannot index an empty hub set")
        self.ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64).ravel()
        if len(self.ids) != n or len(self.lats) != n:
            raise ValueError("lons, lats and ids must have equal length")
        self.categories = None if categories is None else list(categories)
        self._tree = cKDTree(_unit_xyz(self.lons, self.lats), balanced_tree=True, compact_nodes=True)

    def __len__(self) -> int:
        return len(self.lons)

    # -- batch queries ---------------------------------------------------

    def _rank(self, qlon, qlat, cand: np.ndarray):
        """Sort candidate hub positions for one query by (distance, id)."""
        d = haversine_array(qlon, qlat, self.lons[cand], self.lats[cand])
        order = np.lexsort((self.ids[cand], d))
        return cand[order], d[order]

    def query(self, lons, lats, k: int = 1, exclude_ids=None):
        """k nearest hubs for each query point.

        Returns ``(positions, distances)`` of shape ``(m, k)`` where positions
        index into this index's hub arrays.  ``exclude_ids`` (one per query,
        or None) removes a single hub id from that query's answer, used for
        self-matches when querying a set against itself.
        """
        qlon = np.atleast_1d(np.asarray(lons, dtype=float))
        qlat = np.atleast_1d(np.asarray(lats, dtype=float))
        n = len(self)
        if k < 1:
            raise ValueError("k must be >= 1")
        extra = 0 if exclude_ids is None else 1
        if k + extra > n:
            raise KTooLarge(f"k={k} exceeds {n - extra} available hubs")
        excl = None if exclude_ids is None else np.asarray(exclude_ids, dtype=np.int64).ravel()
        m = len(qlon)
        out_pos = np.empty((m, k), dtype=np.int64)
        out_d = np.empty((m, k), dtype=float)
        kq = min(n, k + extra + 4)
        xyz = _unit_xyz(qlon, qlat)
        chord_d, pos = self._tree.query(xyz, k=kq)
        chord_d = chord_d.reshape(m, kq)
        pos = pos.reshape(m, kq)
        for i in range(m):
            cand = pos[i]
            ranked, d = self._rank(qlon[i], qlat[i], cand)
            if excl is not None:
                keep = self.ids[ranked] != excl[i]
                ranked, d = ranked[keep], d[keep]
            if kq < n:
                # any hub outside the candidate set has chord >= chord_d[i, -1]
                limit = float(_chord(d[k - 1])) * (1 + _SLACK) + 1e-15
                if chord_d[i, -1] <= limit:
                    cand = np.asarray(self._tree.query_ball_point(xyz[i], limit), dtype=np.int64)
                    ranked, d = self._rank(qlon[i], qlat[i], cand)
                    if excl is not None:
                        keep = self.ids[ranked] != excl[i]
                        ranked, d = ranked[keep], d[keep]
            out_pos[i] = ranked[:k]
            out_d[i] = d[:k]
        return out_pos, out_d

    def nearest_many(self, lons, lats):
        """Vectorized nearest hub: ``(hub_ids, distances, positions)``."""
        qlon = np.atleast_1d(np.asarray(lons, dtype=float))
        qlat = np.atleast_1d(np.asarray(lats, dtype=float))
        n = len(self)
        kq = min(n, 4)
        xyz = _unit_xyz(qlon, qlat)
        chord_d, pos = self._tree.query(xyz, k=kq)
        chord_d = chord_d.reshape(len(qlon), kq)
        pos = pos.reshape(len(qlon), kq)
        d = haversine_array(qlon[:, None], qlat[:, None], self.lons[pos], self.lats[pos])
        # lexicographic (distance, id) minimum per row
        ids = self.ids[pos]
        best_d = d.min(axis=1)
        tied = d == best_d[:, None]
        masked_ids = np.where(tied, ids, np.iinfo(np.int64).max)
        col = masked_ids.argmin(axis=1)
        rows = np.arange(len(qlon))
        best_pos = pos[rows, col]
        if kq < n:
            limit = _chord(best_d) * (1 + _SLACK) + 1e-15
            unsure = np.flatnonzero(chord_d[:, -1] <= limit)
            for i in unsure:
                cand = np.asarray(self._tree.query_ball_point(xyz[i], limit[i]), dtype=np.int64)
                ranked, dd = self._rank(qlon[i], qlat[i], cand)
                best_pos[i] = ranked[0]
                best_d[i] = dd[0]
        return self.ids[best_pos], best_d, best_pos

    # -- single queries --------------------------------------------------

    def nearest(self, q: GeoPoint) -> Neighbor:
        ids, d, pos = self.nearest_many(q.lon, q.lat)
        cat = None if self.categories is None else self.categories[int(pos[0])]
        return Neighbor(int(ids[0]), cat, float(d[0]))

    def knn(self, q: GeoPoint, k: int, exclude_id: int | None = None) -> list[tuple[int, float]]:
        excl = None if exclude_id is None else [exclude_id]
        pos, d = self.query(q.lon, q.lat, k, excl)
        return [(int(self.ids[p]), float(x)) for p, x in zip(pos[0], d[0])]


def build_index(hubs) -> HubIndex:
    """Build a :class:`HubIndex` from ``(GeoPoint, id, category)`` triples."""
    hubs = list(hubs)
    if not hubs:
        raise EmptyLayer("cannot index an empty hub set")
    lons = [h[0].lon for h in hubs]
    lats = [h[0].lat for h in hubs]
    ids = [h[1] for h in hubs]
    cats = [h[2] if len(h) > 2 else None for h in hubs]
    return HubIndex(lons, lats, ids, cats)


def nearest(index: HubIndex, q: GeoPoint) -> tuple[int, str | None, float]:
    nb = index.nearest(q)
    return nb.hub_id, nb.category, nb.distance


def knn(index: HubIndex, q: GeoPoint, k: int, exclude_id: int | None = None) -> list[tuple[int, float]]:
    return index.knn(q, k, exclude_id)
