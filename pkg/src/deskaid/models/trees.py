"""CART trees, random forest and gradient-boosted trees.

Trees are stored as flat arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``); ``feature == -1`` marks a leaf.  Rows go left when
``x[feature] <= threshold``.  Categorical columns are used as ordinal codes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..parallel import map_ordered
from .base import TrainConfig, TrainedModel, check_binary, check_finite, seed_rng, sigmoid


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):  # children are always created after parents
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            r = rows[active]
            nd = node[active]
            go_left = X[r, f[active]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_json(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value}

    @classmethod
    def from_json(cls, doc: dict) -> "Tree":
        return cls(np.asarray(doc["feature"], dtype=np.int64), np.asarray(doc["threshold"], dtype=float),
                   np.asarray(doc["left"], dtype=np.int64), np.asarray(doc["right"], dtype=np.int64),
                   np.asarray(doc["value"], dtype=float))


def _threshold(lo: float, hi: float) -> float:
    t = (lo + hi) / 2.0
    return lo if t >= hi else t


def best_gini_split(X, y, idx, features, min_leaf: int = 1):
    """Lowest weighted-Gini split of rows ``idx`` over ``features``.

    Returns ``(weighted_gini, feature, threshold)`` or None.  Ties keep the
    first feature in ``features`` order and the lowest threshold.
    """
    m = len(idx)
    ysub = y[idx]
    total = ysub.sum()
    nl = np.arange(1, m, dtype=float)
    nr = m - nl
    best = None
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        valid = xs[:-1] < xs[1:]
        if min_leaf > 1:
            valid &= (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        cum = np.cumsum(ysub[order])[:-1]
        pl = cum / nl
        pr = (total - cum) / nr
        imp = (nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / m
        imp = np.where(valid, imp, np.inf)
        i = int(np.argmin(imp))
        if best is None or imp[i] < best[0]:
            best = (float(imp[i]), int(f), _threshold(xs[i], xs[i + 1]))
    return best


def best_sse_split(X, r, idx, features, min_leaf: int = 1):
    """Split of rows ``idx`` minimizing the squared error of ``r`` around child means."""
    m = len(idx)
    rsub = r[idx]
    total = rsub.sum()
    nl = np.arange(1, m, dtype=float)
    nr = m - nl
    best = None
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        valid = xs[:-1] < xs[1:]
        if min_leaf > 1:
            valid &= (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        cum = np.cumsum(rsub[order])[:-1]
        # minimizing SSE == maximizing S_l^2/n_l + S_r^2/n_r
        gain = cum * cum / nl + (total - cum) ** 2 / nr
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if best is None or gain[i] > best[0]:
            best = (float(gain[i]), int(f), _threshold(xs[i], xs[i + 1]))
    return best


def _n_candidates(max_features, p: int) -> int:
    if max_features is None:
        return p
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(p)))
    if max_features == "log2":
        return max(1, math.ceil(math.log2(p)))
    return max(1, min(p, int(max_features)))


def grow_classification_tree(X, y, idx, rng, max_depth=None, max_features="sqrt", min_leaf: int = 1):
    """Gini CART tree on rows ``idx`` (duplicates allowed, as in a bootstrap).

    Returns the tree and per-feature total impurity decrease.
    """
    p = X.shape[1]
    mtry = _n_candidates(max_features, p)
    feature, threshold, left, right, value = [], [], [], [], []
    importance = np.zeros(p)

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        return len(feature) - 1

    stack = [(new_node(idx), idx, 0)]
    while stack:
        node, rows, depth = stack.pop()
        m = len(rows)
        pos = value[node]
        gini = 2.0 * pos * (1.0 - pos)
        if gini <= 0.0 or m < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        order = rng.permutation(p)
        split = best_gini_split(X, y, rows, order[:mtry], min_leaf)
        if split is None and mtry < p:
            split = best_gini_split(X, y, rows, order[mtry:], min_leaf)
        if split is None:
            continue
        weighted, f, t = split
        importance[f] += m * (gini - weighted)
        go_left = X[rows, f] <= t
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node], threshold[node] = f, t
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    tree = Tree(np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=float),
                np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64), np.asarray(value, dtype=float))
    return tree, importance


def grow_boosting_tree(X, residual, hessian, max_depth: int = 3, min_leaf: int = 1) -> Tree:
    """Least-squares tree on ``residual`` with Newton leaf values sum(r)/sum(h)."""
    p = X.shape[1]
    features = np.arange(p)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        h = hessian[rows].sum()
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(residual[rows].sum() / h) if h > 1e-12 else 0.0)
        return len(feature) - 1

    root_rows = np.arange(len(X))
    stack = [(new_node(root_rows), root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth or len(rows) < 2 * min_leaf:
            continue
        split = best_sse_split(X, residual, rows, features, min_leaf)
        if split is None:
            continue
        _, f, t = split
        go_left = X[rows, f] <= t
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node], threshold[node] = f, t
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return Tree(np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=float),
                np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64), np.asarray(value, dtype=float))


# ---------------------------------------------------------------------------
# random forest

def fit_forest(X, y, cfg: TrainConfig):
    """Forest of Gini trees; returns ``(trees, normalized importances)``."""
    n, p = X.shape

    def one(t):
        rng = seed_rng(cfg.seed, 7, t)
        idx = rng.integers(0, n, n) if cfg.rf_bootstrap else np.arange(n)
        return grow_classification_tree(X, y, idx, rng, cfg.rf_max_depth, cfg.rf_max_features,
                                        cfg.rf_min_samples_leaf)

    grown = map_ordered(one, range(cfg.rf_n_trees))
    trees = [t for t, _ in grown]
    per_tree = []
    for _, imp in grown:
        s = imp.sum()
        per_tree.append(imp / s if s > 0 else np.zeros(p))
    importance = np.mean(per_tree, axis=0)
    total = importance.sum()
    importance = importance / total if total > 0 else np.full(p, 1.0 / p)
    return trees, importance


def train_random_forest(matrix, cfg: TrainConfig | None = None) -> TrainedModel:
    cfg = cfg or TrainConfig()
    train = matrix.train
    y = check_binary(train.labels)
    check_finite(train.X)
    trees, importance = fit_forest(train.X, y, cfg)
    return TrainedModel("RF", {"trees": [t.to_json() for t in trees]}, matrix.schema.fingerprint, cfg,
                        len(matrix.schema), None,
                        {"feature_importance": importance, "feature_names": matrix.schema.names})


def forest_proba(trees: list[Tree], X: np.ndarray) -> np.ndarray:
    acc = np.zeros(len(X))
    for t in trees:
        acc += t.predict(X)
    return acc / len(trees)


# ---------------------------------------------------------------------------
# gradient boosting

def fit_boosting(X, y, cfg: TrainConfig):
    base = float(y.mean())
    init = math.log(base / (1.0 - base))
    score = np.full(len(X), init)
    trees = []
    losses = [_mean_log_loss(y, score)]
    for _ in range(cfg.gbt_n_rounds):
        p = sigmoid(score)
        tree = grow_boosting_tree(X, y - p, p * (1.0 - p), cfg.gbt_max_depth)
        score = score + cfg.gbt_learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(_mean_log_loss(y, score))
    return init, trees, losses


def _mean_log_loss(y, score) -> float:
    # log(1 + e^s) - y s, stable for large |s|
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


def train_gradient_boosting(matrix, cfg: TrainConfig | None = None) -> TrainedModel:
    cfg = cfg or TrainConfig()
    train = matrix.train
    y = check_binary(train.labels)
    check_finite(train.X)
    init, trees, losses = fit_boosting(train.X, y, cfg)
    return TrainedModel("GBT", {"init": init, "learning_rate": cfg.gbt_learning_rate,
                                "trees": [t.to_json() for t in trees]},
                        matrix.schema.fingerprint, cfg, len(matrix.schema), None, {"train_log_loss": losses})


def boosting_scores(init: float, lr: float, trees: list[Tree], X: np.ndarray) -> np.ndarray:
    score = np.full(len(X), init)
    for t in trees:
        score += lr * t.predict(X)
    return score
