"""Feedforward network with hand-written backprop, AdamW and early stopping.

Everything runs in float64 so gradients can be checked against central
finite differences.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import Diverged
from .base import TrainConfig, TrainedModel, check_binary, check_finite, encoder_for_matrix, seed_rng, sigmoid


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of logits ``z`` and its gradient wrt ``z``."""
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return loss, (sigmoid(z) - y) / len(y)


# ---------------------------------------------------------------------------
# feedforward network

def init_mlp(rng, sizes: list[int], prefix: str = "") -> dict[str, np.ndarray]:
    params = {}
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{prefix}W{i}"] = glorot(rng, a, b)
        params[f"{prefix}b{i}"] = np.zeros(b)
    return params


def mlp_forward(params, X, n_layers: int, prefix: str = "", final_relu: bool = False):
    """Dense layers with ReLU between them; returns output and a backprop cache."""
    cache = []
    h = X
    for i in range(n_layers):
        z = h @ params[f"{prefix}W{i}"] + params[f"{prefix}b{i}"]
        cache.append((h, z))
        h = np.maximum(z, 0.0) if (i < n_layers - 1 or final_relu) else z
    return h, cache


def mlp_backward(params, cache, grad_out, n_layers: int, prefix: str = "", final_relu: bool = False):
    grads = {}
    g = grad_out
    for i in reversed(range(n_layers)):
        h, z = cache[i]
        if i < n_layers - 1 or final_relu:
            g = g * (z > 0)
        grads[f"{prefix}W{i}"] = h.T @ g
        grads[f"{prefix}b{i}"] = g.sum(axis=0)
        g = g @ params[f"{prefix}W{i}"].T
    return grads, g


def fnn_loss_and_grads(params, X, y, n_layers: int):
    z, cache = mlp_forward(params, X, n_layers)
    z = z[:, 0]
    loss, dz = bce_with_logits(z, y)
    grads, _ = mlp_backward(params, cache, dz[:, None], n_layers)
    return loss, grads


def fnn_logits(params, X, n_layers: int) -> np.ndarray:
    return mlp_forward(params, X, n_layers)[0][:, 0]


# ---------------------------------------------------------------------------
# optimizer and early stopping

class AdamW:
    """Adam with decoupled weight decay (applied to every parameter)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3, weight_decay: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.wd, self.b1, self.b2, self.eps = lr, weight_decay, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p = params[k]
            p *= 1.0 - self.lr * self.wd
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class EarlyStopping:
    """Stop once the monitored value has not improved for ``patience`` epochs."""

    patience: int
    best: float = -math.inf
    best_epoch: int = -1
    wait: int = 0
    stopped_epoch: int | None = None

    def update(self, epoch: int, value: float) -> bool:
        if value > self.best:
            self.best, self.best_epoch, self.wait = value, epoch, 0
            return False
        self.wait += 1
        if self.wait >= self.patience:
            self.stopped_epoch = epoch
            return True
        return False


@dataclass
class FitResult:
    params: dict[str, np.ndarray]
    best_epoch: int
    stopped_epoch: int | None
    epochs_run: int
    history: list[dict] = field(default_factory=list)


def stratified_holdout(labels: np.ndarray, fraction: float, rng: np.random.Generator):
    """Split positions into (fit, validation); validation is stratified."""
    labels = np.asarray(labels)
    val = np.zeros(len(labels), dtype=bool)
    if fraction > 0:
        for c in (0, 1):
            idx = np.flatnonzero(labels == c)
            k = int(round(fraction * len(idx)))
            if 0 < k < len(idx):
                val[rng.permutation(idx)[:k]] = True
    return np.flatnonzero(~val), np.flatnonzero(val)


def fit_minibatch(params: dict[str, np.ndarray],
                  loss_and_grads: Callable[[dict, np.ndarray], tuple[float, dict]],
                  predict: Callable[[dict, np.ndarray], np.ndarray],
                  y: np.ndarray, fit_idx: np.ndarray, val_idx: np.ndarray,
                  cfg: TrainConfig, rng: np.random.Generator) -> FitResult:
    """Shared training loop for the FNN and the graph network.

    ``loss_and_grads(params, batch_positions)`` and ``predict(params,
    positions)`` close over the data.  Validation accuracy is checked after
    every epoch; the best weights are restored at the end.
    """
    opt = AdamW(params, cfg.nn_learning_rate, cfg.nn_weight_decay)
    stopper = EarlyStopping(cfg.nn_patience)
    monitor_idx = val_idx if len(val_idx) else fit_idx
    best = copy.deepcopy(params)
    history = []
    epoch = -1
    for epoch in range(cfg.nn_max_epochs):
        order = fit_idx[rng.permutation(len(fit_idx))]
        total = 0.0
        for start in range(0, len(order), cfg.nn_batch_size):
            batch = order[start:start + cfg.nn_batch_size]
            loss, grads = loss_and_grads(params, batch)
            if not math.isfinite(loss):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            opt.step(params, grads)
            total += loss * len(batch)
        acc = float(np.mean((predict(params, monitor_idx) >= 0.5) == (y[monitor_idx] == 1)))
        history.append({"epoch": epoch, "loss": total / len(order), "val_accuracy": acc})
        improved = acc > stopper.best
        stop = stopper.update(epoch, acc)
        if improved:
            best = copy.deepcopy(params)
        if stop:
            break
    return FitResult(best, stopper.best_epoch, stopper.stopped_epoch, epoch + 1, history)


# ---------------------------------------------------------------------------
# public training entry point

def train_fnn(matrix, cfg: TrainConfig | None = None) -> TrainedModel:
    """input -> hidden (ReLU) ... -> 1 (sigmoid), trained with AdamW."""
    cfg = cfg or TrainConfig()
    train = matrix.train
    y = check_binary(train.labels)
    check_finite(train.X)
    enc = encoder_for_matrix(matrix)
    Z = enc.transform(train.X)
    sizes = [Z.shape[1], *cfg.nn_hidden, 1]
    n_layers = len(sizes) - 1
    params = init_mlp(seed_rng(cfg.seed, 11), sizes)
    fit_idx, val_idx = stratified_holdout(y, cfg.nn_val_fraction, seed_rng(cfg.seed, 12))

    def lg(p, batch):
        return fnn_loss_and_grads(p, Z[batch], y[batch], n_layers)

    def pred(p, idx):
        return sigmoid(fnn_logits(p, Z[idx], n_layers))

    res = fit_minibatch(params, lg, pred, y, fit_idx, val_idx, cfg, seed_rng(cfg.seed, 13))
    extras = {"best_epoch": res.best_epoch, "stopped_epoch": res.stopped_epoch,
              "epochs_run": res.epochs_run, "history": res.history, "n_layers": n_layers}
    return TrainedModel("FNN", res.params, matrix.schema.fingerprint, cfg, len(matrix.schema), enc, extras)


def predict_fnn(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    n_layers = int(model.extras.get("n_layers", len(model.config.nn_hidden) + 1))
    return sigmoid(fnn_logits(model.params, model.encoder.transform(X), n_layers))
