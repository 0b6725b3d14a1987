"""Graph convolutional node classifier over the k-NN location graph.

Layout: a dense preprocessing layer, two graph-convolution layers, and a
dense head ending in a sigmoid.  Each convolution computes

    h'_v = relu(W . sum_u a_vu h_u + b)

over the neighbors of ``v`` plus ``v`` itself, with ``a`` row-normalized.
Unweighted graphs give every incident edge raw weight 1.  Weighted graphs
give neighbor edges 1 / (1 + d / sigma), with ``sigma`` the median neighbor
distance, and self-loops raw weight 1.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import SingleClassData
from .base import Encoder, TrainConfig, TrainedModel, check_finite, seed_rng, sigmoid
from .neural import bce_with_logits, fit_minibatch, glorot, init_mlp, mlp_backward, mlp_forward, stratified_holdout


def propagation_matrix(graph, weighted: bool) -> sp.csr_matrix:
    """Row-normalized aggregation operator ``A`` with ``A[v, u] = a_vu``."""
    src, dst = graph.edge_index
    n = graph.num_nodes
    d = np.asarray(graph.edge_weight, dtype=float)
    self_loop = src == dst
    if weighted:
        neighbor_d = d[~self_loop]
        sigma = float(np.median(neighbor_d)) if len(neighbor_d) else 1.0
        sigma = sigma if sigma > 0 else 1.0
        raw = np.where(self_loop, 1.0, 1.0 / (1.0 + d / sigma))
    else:
        raw = np.ones(len(src))
    A = sp.csr_matrix((raw, (src, dst)), shape=(n, n))
    rowsum = np.asarray(A.sum(axis=1)).ravel()
    inv = np.where(rowsum > 0, 1.0 / np.where(rowsum > 0, rowsum, 1.0), 0.0)
    return sp.csr_matrix(sp.diags(inv) @ A)


def init_gcnn(rng, in_dim: int, width: int, head: tuple[int, ...]) -> dict[str, np.ndarray]:
    params = init_mlp(rng, [in_dim, width], "pre_")
    for i in range(2):
        params[f"conv{i}_W"] = glorot(rng, width, width)
        params[f"conv{i}_b"] = np.zeros(width)
    params.update(init_mlp(rng, [width, *head, 1], "post_"))
    return params


def _head_layers(params) -> int:
    return sum(1 for k in params if k.startswith("post_W"))


def gcnn_forward(params, X, A):
    h0, pre_cache = mlp_forward(params, X, 1, "pre_", final_relu=True)
    conv_cache = []
    h = h0
    for i in range(2):
        hw = h @ params[f"conv{i}_W"]
        z = A @ hw + params[f"conv{i}_b"]
        conv_cache.append((h, z))
        h = np.maximum(z, 0.0)
    out, post_cache = mlp_forward(params, h, _head_layers(params), "post_")
    return out[:, 0], (pre_cache, conv_cache, post_cache)


def gcnn_loss_and_grads(params, X, A, y, nodes):
    """Mean BCE over ``nodes``; gradients flow through the full-graph forward."""
    logits, (pre_cache, conv_cache, post_cache) = gcnn_forward(params, X, A)
    loss, dz_nodes = bce_with_logits(logits[nodes], y[nodes])
    dz = np.zeros((len(logits), 1))
    np.add.at(dz[:, 0], nodes, dz_nodes)
    grads, g = mlp_backward(params, post_cache, dz, _head_layers(params), "post_")
    At = A.T.tocsr()
    for i in reversed(range(2)):
        h, z = conv_cache[i]
        g = g * (z > 0)
        grads[f"conv{i}_b"] = g.sum(axis=0)
        g_hw = At @ g
        grads[f"conv{i}_W"] = h.T @ g_hw
        g = g_hw @ params[f"conv{i}_W"].T
    pre_grads, _ = mlp_backward(params, pre_cache, g, 1, "pre_", final_relu=True)
    grads.update(pre_grads)
    return loss, grads


def _graph_encoder(graph, schema, train_nodes) -> Encoder:
    X = graph.node_features
    if schema is not None:
        cat = schema.categorical_mask
        sizes = [len(f.vocabulary) or 1 for f in schema.features if f.kind == "categorical"]
    else:
        cat = np.zeros(X.shape[1], dtype=bool)
        sizes = []
    Xt = X[train_nodes]
    return Encoder.fit(Xt, cat, sizes, Xt.mean(axis=0), Xt.std(axis=0))


def train_gcnn(graph, cfg: TrainConfig | None = None, weighted: bool = False, train_mask=None,
               schema=None) -> TrainedModel:
    """Fit on the labeled nodes selected by ``train_mask`` (all nodes if None).

    ``schema`` (a FeatureSchema) marks categorical columns for one-hot
    encoding; without it every column is treated as continuous.
    """
    cfg = cfg or TrainConfig()
    n = graph.num_nodes
    mask = np.ones(n, dtype=bool) if train_mask is None else np.asarray(train_mask, dtype=bool)
    train_nodes = np.flatnonzero(mask)
    y = np.asarray(graph.labels, dtype=float)
    if len(np.unique(y[train_nodes])) < 2:
        raise SingleClassData("training nodes contain a single class")
    check_finite(graph.node_features)
    enc = _graph_encoder(graph, schema, train_nodes)
    Z = enc.transform(graph.node_features)
    A = propagation_matrix(graph, weighted)
    params = init_gcnn(seed_rng(cfg.seed, 21), Z.shape[1], cfg.gcnn_width, cfg.nn_hidden[1:] or (32,))
    fit_pos, val_pos = stratified_holdout(y[train_nodes], cfg.nn_val_fraction, seed_rng(cfg.seed, 22))
    fit_nodes, val_nodes = train_nodes[fit_pos], train_nodes[val_pos]

    def lg(p, batch):
        return gcnn_loss_and_grads(p, Z, A, y, batch)

    def pred(p, nodes):
        return sigmoid(gcnn_forward(p, Z, A)[0][nodes])

    res = fit_minibatch(params, lg, pred, y, fit_nodes, val_nodes, cfg, seed_rng(cfg.seed, 23))
    kind = "GCNN_weighted" if weighted else "GCNN"
    fingerprint = graph.schema_fingerprint or (schema.fingerprint if schema is not None else "")
    extras = {"best_epoch": res.best_epoch, "stopped_epoch": res.stopped_epoch, "epochs_run": res.epochs_run,
              "history": res.history, "weighted": weighted, "k": cfg.gcnn_k}
    return TrainedModel(kind, res.params, fingerprint, cfg, graph.node_features.shape[1], enc, extras)


def predict_gcnn(model: TrainedModel, graph, nodes=None) -> np.ndarray:
    A = propagation_matrix(graph, bool(model.extras.get("weighted", model.kind == "GCNN_weighted")))
    Z = model.encoder.transform(graph.node_features)
    p = sigmoid(gcnn_forward(model.params, Z, A)[0])
    return p if nodes is None else p[np.asarray(nodes)]
