"""Classifiers sharing one contract: ``train_*`` returns a :class:`TrainedModel`,
:func:`predict_proba` maps rows (or graph nodes) to hazard probabilities."""

from __future__ import annotations

import numpy as np

from ..errors import SchemaMismatch, UnsupportedModelKind
from .base import MODEL_KINDS, Encoder, TrainConfig, TrainedModel, load_model, save_model, sigmoid
from .gcnn import predict_gcnn, train_gcnn
from .linear import predict_logistic, train_logistic
from .neural import predict_fnn, train_fnn
from .trees import Tree, boosting_scores, forest_proba, train_gradient_boosting, train_random_forest


def _trees(model):
    return [Tree.from_json(t) for t in model.params["trees"]]


def predict_proba(model: TrainedModel, data, nodes=None) -> np.ndarray:
    """Probabilities in [0, 1] for a LabeledMatrix, a raw feature array or a GeoGraph.

    LabeledMatrix and GeoGraph inputs are checked against the model's schema
    fingerprint.  For graph models ``nodes`` selects which node outputs to
    return after the full-graph forward pass.
    """
    from ..geo_graph import GeoGraph

    if isinstance(data, GeoGraph):
        model.check_schema(data.schema_fingerprint or None)
        if model.kind not in ("GCNN", "GCNN_weighted"):
            X = data.node_features
        else:
            return predict_gcnn(model, data, nodes)
    elif hasattr(data, "schema") and hasattr(data, "X"):
        model.check_schema(data.schema.fingerprint)
        X = data.X
    else:
        X = np.asarray(data, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
    if model.kind in ("GCNN", "GCNN_weighted"):
        raise UnsupportedModelKind("graph models need a GeoGraph input")
    if X.shape[1] != model.n_features:
        raise SchemaMismatch(f"model expects {model.n_features} features, got {X.shape[1]}")
    if model.kind == "LR":
        p = predict_logistic(model, X)
    elif model.kind == "RF":
        p = forest_proba(_trees(model), X)
    elif model.kind == "GBT":
        p = sigmoid(boosting_scores(float(model.params["init"]), float(model.params["learning_rate"]),
                                    _trees(model), X))
    elif model.kind == "FNN":
        p = predict_fnn(model, X)
    else:
        raise UnsupportedModelKind(model.kind)
    p = np.clip(p, 0.0, 1.0)
    return p if nodes is None else p[np.asarray(nodes)]


def train_model(kind: str, matrix, cfg: TrainConfig | None = None, graph=None) -> TrainedModel:
    """Dispatch on ``kind``; graph kinds build the k-NN graph from ``matrix`` if needed."""
    if kind == "LR":
        return train_logistic(matrix, cfg)
    if kind == "RF":
        return train_random_forest(matrix, cfg)
    if kind == "GBT":
        return train_gradient_boosting(matrix, cfg)
    if kind == "FNN":
        return train_fnn(matrix, cfg)
    if kind in ("GCNN", "GCNN_weighted"):
        from ..geo_graph import graph_from_matrix
        cfg = cfg or TrainConfig()
        graph = graph or graph_from_matrix(matrix, cfg.gcnn_k)
        return train_gcnn(graph, cfg, kind == "GCNN_weighted", matrix.train_mask, matrix.schema)
    raise UnsupportedModelKind(kind)


__all__ = [
    "MODEL_KINDS", "Encoder", "TrainConfig", "TrainedModel", "load_model", "save_model", "predict_proba",
    "train_model", "train_logistic", "train_random_forest", "train_gradient_boosting", "train_fnn",
    "train_gcnn",
]
