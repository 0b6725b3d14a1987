"""Logistic regression by full-batch accelerated gradient descent."""

from __future__ import annotations

import numpy as np

from ..errors import NonFinite
from .base import Encoder, TrainConfig, TrainedModel, check_binary, check_finite, encoder_for_matrix, sigmoid


def _design(Z: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((len(Z), 1)), Z])


def fit_logistic_design(A: np.ndarray, y: np.ndarray, max_iter: int = 1000, tol: float = 1e-8):
    """Minimize mean log-loss over ``A @ w``; returns ``(w, iterations, grad_norm)``.

    Nesterov-accelerated gradient steps of size 1/L, with L the Lipschitz
    bound ||A||_2^2 / (4n) of the gradient.
    """
    n, d = A.shape
    lipschitz = np.linalg.norm(A, 2) ** 2 / (4.0 * n)
    step = 1.0 / max(lipschitz, 1e-12)

    def grad(w):
        return A.T @ (sigmoid(A @ w) - y) / n

    w = np.zeros(d)
    w_prev = w.copy()
    g_norm = float(np.linalg.norm(grad(w)))
    it = 0
    for it in range(1, max_iter + 1):
        look = w + (it - 1.0) / (it + 2.0) * (w - w_prev)
        w_prev = w
        w = look - step * grad(look)
        g_norm = float(np.linalg.norm(grad(w)))
        if g_norm < tol:
            break
    if not np.all(np.isfinite(w)):
        raise NonFinite("logistic regression produced non-finite coefficients")
    return w, it, g_norm


def train_logistic(matrix, cfg: TrainConfig | None = None) -> TrainedModel:
    cfg = cfg or TrainConfig()
    train = matrix.train
    y = check_binary(train.labels)
    check_finite(train.X)
    enc = encoder_for_matrix(matrix)
    A = _design(enc.transform(train.X))
    w, iters, g_norm = fit_logistic_design(A, y, cfg.lr_max_iter, cfg.lr_tol)
    return TrainedModel("LR", {"intercept": float(w[0]), "coef": w[1:]}, matrix.schema.fingerprint, cfg,
                        len(matrix.schema), enc, {"iterations": iters, "grad_norm": g_norm})


def predict_logistic(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    Z = model.encoder.transform(X)
    return sigmoid(Z @ np.asarray(model.params["coef"], dtype=float) + float(model.params["intercept"]))


def zero_logistic(encoder: Encoder, fingerprint: str = "", n_features: int | None = None) -> TrainedModel:
    """A model with all coefficients zero (predicts 0.5 everywhere)."""
    width = encoder.output_width
    return TrainedModel("LR", {"intercept": 0.0, "coef": np.zeros(width)}, fingerprint, TrainConfig(),
                        n_features if n_features is not None else len(encoder.mean), encoder)
