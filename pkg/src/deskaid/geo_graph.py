"""Location graph over sample points: each node linked to its k nearest neighbors."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TooFewNodes
from .geo_core import haversine_array
from .spatial_index import HubIndex


@dataclass
class GeoGraph:
    node_features: np.ndarray  # (n, p) raw feature rows
    edge_index: np.ndarray  # (2, E) source, target
    edge_weight: np.ndarray  # (E,) meters; 0 on self-loops
    labels: np.ndarray
    ids: np.ndarray
    lons: np.ndarray
    lats: np.ndarray
    schema_fingerprint: str = ""

    @property
    def num_nodes(self) -> int:
        return len(self.node_features)

    @property
    def num_edges(self) -> int:
        return self.edge_index.shape[1]

    def neighbors(self, node: int) -> np.ndarray:
        src, dst = self.edge_index
        return dst[(src == node) & (dst != node)]


def knn_edges(lons, lats, k: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Directed edges from each node to its k nearest others, ties by node index."""
    lons = np.asarray(lons, dtype=float)
    lats = np.asarray(lats, dtype=float)
    n = len(lons)
    if n <= k:
        raise TooFewNodes(f"need more than k={k} nodes, got {n}")
    index = HubIndex(lons, lats)
    pos, dist = index.query(lons, lats, k, exclude_ids=np.arange(n))
    src = np.repeat(np.arange(n), k)
    return np.vstack([src, pos.ravel()]), dist.ravel()


def build_knn_graph(node_features, lons, lats, labels=None, ids=None, k: int = 5,
                    schema_fingerprint: str = "") -> GeoGraph:
    """k-NN graph, symmetrized, with one zero-weight self-loop per node.

    Edges are sorted by (source, target); weights are haversine meters.
    """
    x = np.asarray(node_features, dtype=float)
    n = len(x)
    lons = np.asarray(lons, dtype=float)
    lats = np.asarray(lats, dtype=float)
    edges, _ = knn_edges(lons, lats, k)
    both = np.hstack([edges, edges[::-1]])
    keys = np.unique(both[0] * n + both[1])
    src, dst = keys // n, keys % n
    loops = np.arange(n)
    src = np.concatenate([src, loops])
    dst = np.concatenate([dst, loops])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    # same argument order for (i, j) and (j, i) keeps mirrored weights bit-identical
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    w = haversine_array(lons[lo], lats[lo], lons[hi], lats[hi])
    w[src == dst] = 0.0
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    return GeoGraph(x, np.vstack([src, dst]), w, labels, ids, lons, lats, schema_fingerprint)


def graph_from_matrix(matrix, k: int = 5) -> GeoGraph:
    """Graph whose nodes are the rows of a :class:`~deskaid.features.LabeledMatrix`."""
    return build_knn_graph(matrix.X, matrix.lons, matrix.lats, matrix.labels, matrix.ids, k,
                           matrix.schema.fingerprint)


def write_graph_csv(directory, graph: GeoGraph, names=None) -> None:
    """``nodes.csv``, ``edges.csv`` and ``weights.csv`` for inspection."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = list(names) if names is not None else [f"x{j}" for j in range(graph.node_features.shape[1])]
    with open(directory / "nodes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "id", "lon", "lat", "label", *names])
        for i in range(graph.num_nodes):
            w.writerow([i, int(graph.ids[i]), repr(float(graph.lons[i])), repr(float(graph.lats[i])),
                        int(graph.labels[i]), *[repr(float(v)) for v in graph.node_features[i]]])
    with open(directory / "edges.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target"])
        w.writerows(graph.edge_index.T.tolist())
    with open(directory / "weights.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["weight_m"])
        w.writerows([[repr(float(v))] for v in graph.edge_weight])
