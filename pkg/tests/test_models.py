import numpy as np
import pytest
from scipy import optimize

from deskaid.errors import ConfigError, SchemaMismatch, SingleClassData, UnsupportedModelKind
from deskaid.features import FeatureDescriptor, FeatureSchema, LabeledMatrix
from deskaid.geo_graph import GeoGraph, build_knn_graph
from deskaid.models import TrainConfig, load_model, predict_proba, save_model, train_model
from deskaid.models.base import Encoder, log_loss
from deskaid.models.gcnn import gcnn_forward, gcnn_loss_and_grads, init_gcnn, propagation_matrix
from deskaid.models.linear import fit_logistic_design
from deskaid.models.neural import EarlyStopping, fnn_loss_and_grads, init_mlp
from deskaid.models.trees import best_gini_split, fit_boosting, grow_classification_tree


def make_matrix(X, y, categorical=(), vocab_size=3, train_mask=None):
    X = np.asarray(X, dtype=float)
    feats = tuple(FeatureDescriptor(f"x{j}", "categorical" if j in categorical else "continuous", "", "r", "s",
                                    tuple(f"c{k}" for k in range(vocab_size)) if j in categorical else ())
                  for j in range(X.shape[1]))
    n = len(X)
    mask = np.ones(n, dtype=bool) if train_mask is None else np.asarray(train_mask, dtype=bool)
    return LabeledMatrix(FeatureSchema("test", feats), X, np.asarray(y, dtype=np.int64), np.arange(n),
                         np.zeros(n), np.zeros(n), mask, X[mask].mean(axis=0), X[mask].std(axis=0))


def noisy_linear(rng, n=400, p=4):
    X = rng.normal(size=(n, p)) * np.array([1.0, 10.0, 0.1, 3.0][:p])
    logits = 0.5 + X @ np.array([1.0, -0.2, 4.0, 0.3][:p])
    y = (rng.uniform(size=n) < 1 / (1 + np.exp(-logits))).astype(int)
    return X, y


def fd_check(loss_fn, params, grads, rng, n_probe=6, eps=1e-6):
    for key, arr in params.items():
        for _ in range(min(n_probe, arr.size)):
            idx = tuple(rng.integers(0, s) for s in arr.shape)
            old = arr[idx]
            arr[idx] = old + eps
            up = loss_fn()
            arr[idx] = old - eps
            down = loss_fn()
            arr[idx] = old
            num = (up - down) / (2 * eps)
            assert abs(num - grads[key][idx]) <= 1e-6 + 1e-5 * abs(num), key


# ---------------------------------------------------------------------------
# logistic regression

def test_logistic_matches_lbfgs_optimum(rng):
    X, y = noisy_linear(rng)
    m = make_matrix(X, y)
    model = train_model("LR", m)
    Z = (X - X.mean(axis=0)) / X.std(axis=0)
    A = np.hstack([np.ones((len(Z), 1)), Z])

    def f(w):
        s = A @ w
        return np.mean(np.logaddexp(0, s) - y * s), A.T @ (1 / (1 + np.exp(-s)) - y) / len(y)

    ref = optimize.minimize(f, np.zeros(A.shape[1]), jac=True, method="L-BFGS-B", options={"gtol": 1e-10})
    p = predict_proba(model, m)
    assert abs(log_loss(y, p) - ref.fun) < 1e-4
    np.testing.assert_allclose(np.r_[model.params["intercept"], model.params["coef"]], ref.x, atol=1e-3)


def test_logistic_gradient_norm_reported(rng):
    X, y = noisy_linear(rng, 200, 2)
    A = np.hstack([np.ones((200, 1)), X])
    w, iters, g = fit_logistic_design(A, y.astype(float), max_iter=5000, tol=1e-9)
    assert g < 1e-9 and iters < 5000


# ---------------------------------------------------------------------------
# trees

def gini(y):
    p = y.mean() if len(y) else 0.0
    return 2 * p * (1 - p)


def exhaustive_gini(X, y):
    best = np.inf
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            left = X[:, f] <= (lo + hi) / 2
            w = (left.sum() * gini(y[left]) + (~left).sum() * gini(y[~left])) / len(y)
            best = min(best, w)
    return best


def test_best_gini_split_matches_exhaustive_search(rng):
    for _ in range(20):
        X = rng.integers(0, 8, size=(40, 3)).astype(float)
        y = rng.integers(0, 2, 40).astype(float)
        got = best_gini_split(X, y, np.arange(40), range(3))
        assert got[0] == pytest.approx(exhaustive_gini(X, y), abs=1e-12)
        left = X[:, got[1]] <= got[2]
        w = (left.sum() * gini(y[left]) + (~left).sum() * gini(y[~left])) / 40
        assert w == pytest.approx(got[0], abs=1e-12)


def test_unrestricted_tree_fits_training_data(rng):
    X = rng.normal(size=(150, 3))
    y = (X[:, 0] * X[:, 1] > 0).astype(float)
    tree, imp = grow_classification_tree(X, y, np.arange(150), rng, max_features=None)
    assert np.array_equal(tree.predict(X), y)
    assert imp[2] < imp[0] and imp[2] < imp[1]


def test_forest_importances_and_round_trip(rng, tmp_path):
    X, y = noisy_linear(rng, 300, 4)
    m = make_matrix(X, y)
    model = train_model("RF", m, TrainConfig(rf_n_trees=25, seed=3))
    imp = model.extras["feature_importance"]
    assert imp.sum() == pytest.approx(1.0, abs=1e-12) and np.all(imp >= 0)
    assert int(np.argmax(imp)) == 1  # largest spread of coefficient times scale
    save_model(model, tmp_path / "rf.json")
    back = load_model(tmp_path / "rf.json")
    assert np.array_equal(predict_proba(back, m), predict_proba(model, m))
    assert np.array_equal(back.extras["feature_importance"], imp)


def test_forest_does_not_depend_on_thread_count(rng, monkeypatch):
    X, y = noisy_linear(rng, 200, 3)
    m = make_matrix(X, y)
    monkeypatch.setenv("DESKAID_THREADS", "1")
    a = predict_proba(train_model("RF", m, TrainConfig(rf_n_trees=12)), m)
    monkeypatch.setenv("DESKAID_THREADS", "8")
    b = predict_proba(train_model("RF", m, TrainConfig(rf_n_trees=12)), m)
    assert np.array_equal(a, b)


def test_boosting_zero_rounds_is_the_base_rate(rng):
    X, y = noisy_linear(rng, 100, 2)
    m = make_matrix(X, y)
    p = predict_proba(train_model("GBT", m, TrainConfig(gbt_n_rounds=0)), m)
    np.testing.assert_allclose(p, y.mean(), rtol=1e-12)


def test_boosting_loss_never_increases(rng):
    X, y = noisy_linear(rng, 300, 4)
    _, _, losses = fit_boosting(X, y.astype(float), TrainConfig(gbt_n_rounds=60))
    assert np.all(np.diff(losses) <= 1e-12)


def test_boosting_single_stump_by_hand():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]])
    y = np.array([0, 0, 1, 0, 1, 1], dtype=float)
    init, trees, _ = fit_boosting(X, y, TrainConfig(gbt_n_rounds=1, gbt_max_depth=1))
    assert init == 0.0  # base rate one half
    r = y - 0.5
    # the squared-error best split over the residuals separates {0, 1} from the rest
    t = trees[0]
    assert t.feature[0] == 0 and t.threshold[0] == 1.5
    want_left = r[:2].sum() / (0.25 * 2)
    want_right = r[2:].sum() / (0.25 * 4)
    np.testing.assert_allclose(t.predict(X), [want_left] * 2 + [want_right] * 4)


# ---------------------------------------------------------------------------
# feedforward network

def test_fnn_learns_xor(rng):
    X = rng.uniform(-1, 1, size=(800, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    m = make_matrix(X, y)
    model = train_model("FNN", m, TrainConfig(nn_learning_rate=1e-2, nn_max_epochs=300))
    acc = np.mean((predict_proba(model, m) >= 0.5) == y)
    assert acc >= 0.95


def test_fnn_gradients_match_finite_differences(rng):
    X = rng.normal(size=(12, 5))
    y = rng.integers(0, 2, 12).astype(float)
    params = init_mlp(rng, [5, 7, 4, 1])
    for k in params:
        if k.startswith("b"):
            params[k] = rng.normal(size=params[k].shape) * 0.1
    _, grads = fnn_loss_and_grads(params, X, y, 3)
    fd_check(lambda: fnn_loss_and_grads(params, X, y, 3)[0], params, grads, rng)


def test_early_stopping_counts_patience():
    s = EarlyStopping(patience=3)
    seq = [0.5, 0.6, 0.6, 0.55, 0.7, 0.7, 0.7, 0.7]
    stops = [s.update(e, v) for e, v in enumerate(seq)]
    assert stops == [False] * 7 + [True]
    assert (s.best_epoch, s.stopped_epoch) == (4, 7)


def test_fnn_stops_patience_epochs_after_best(rng):
    X, y = noisy_linear(rng, 200, 3)
    m = make_matrix(X, y)
    model = train_model("FNN", m, TrainConfig(nn_patience=5, nn_max_epochs=400))
    ex = model.extras
    assert ex["stopped_epoch"] - ex["best_epoch"] == 5
    assert ex["epochs_run"] == ex["stopped_epoch"] + 1


def test_encoder_one_hot_and_zscore():
    X = np.array([[1.0, 2.0], [3.0, 0.0], [5.0, 1.0]])
    enc = Encoder.fit(X, [False, True], [4])
    Z = enc.transform(X)
    assert enc.output_width == 5
    np.testing.assert_allclose(Z[:, 0], (X[:, 0] - 3.0) / np.std(X[:, 0]))
    assert Z[:, 1:].tolist() == [[0, 0, 1, 0], [1, 0, 0, 0], [0, 1, 0, 0]]


# ---------------------------------------------------------------------------
# graph network

def self_loop_graph(X, y):
    n = len(X)
    loops = np.arange(n)
    return GeoGraph(np.asarray(X, float), np.vstack([loops, loops]), np.zeros(n), np.asarray(y), loops,
                    np.zeros(n), np.zeros(n))


def test_propagation_rows_sum_to_one_and_weighting(rng):
    lons, lats = rng.uniform(66, 66.1, 40), rng.uniform(34, 34.1, 40)
    g = build_knn_graph(np.zeros((40, 1)), lons, lats, k=5)
    for weighted in (False, True):
        A = propagation_matrix(g, weighted)
        np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel(), 1.0, rtol=1e-12)
    A = propagation_matrix(g, True).toarray()
    src, dst = g.edge_index
    nb = src != dst
    sigma = np.median(g.edge_weight[nb])
    raw = np.where(nb, 1 / (1 + g.edge_weight / sigma), 1.0)
    dense = np.zeros((40, 40))
    dense[src, dst] = raw
    np.testing.assert_allclose(A, dense / dense.sum(axis=1, keepdims=True), rtol=1e-12)


def test_isolated_nodes_do_not_influence_each_other(rng):
    X = rng.normal(size=(6, 3))
    g = self_loop_graph(X, [0, 1, 0, 1, 0, 1])
    params = init_gcnn(rng, 3, 8, (4,))
    A = propagation_matrix(g, False)
    out = gcnn_forward(params, X, A)[0]
    X2 = X.copy()
    X2[3] += 5.0
    out2 = gcnn_forward(params, X2, A)[0]
    changed = out != out2
    assert changed[3] and not np.delete(changed, 3).any()


def test_equal_features_give_equal_outputs(rng):
    lons, lats = rng.uniform(66, 66.1, 30), rng.uniform(34, 34.1, 30)
    g = build_knn_graph(np.tile(rng.normal(size=(1, 4)), (30, 1)), lons, lats, k=5)
    params = init_gcnn(rng, 4, 8, (4,))
    for weighted in (False, True):
        out = gcnn_forward(params, g.node_features, propagation_matrix(g, weighted))[0]
        np.testing.assert_allclose(out, out[0], rtol=1e-12)


@pytest.mark.parametrize("weighted", [False, True])
def test_gcnn_gradients_match_finite_differences(rng, weighted):
    lons, lats = rng.uniform(66, 66.1, 25), rng.uniform(34, 34.1, 25)
    X = rng.normal(size=(25, 4))
    y = rng.integers(0, 2, 25).astype(float)
    g = build_knn_graph(X, lons, lats, k=4)
    A = propagation_matrix(g, weighted)
    params = init_gcnn(rng, 4, 6, (5,))
    for k in params:
        if "b" in k.split("_")[-1]:
            params[k] = rng.normal(size=params[k].shape) * 0.1
    nodes = np.arange(0, 25, 2)
    _, grads = gcnn_loss_and_grads(params, X, A, y, nodes)
    fd_check(lambda: gcnn_loss_and_grads(params, X, A, y, nodes)[0], params, grads, rng)


def test_gcnn_trains_on_masked_nodes_only(rng):
    lons, lats = rng.uniform(66, 66.2, 120), rng.uniform(34, 34.2, 120)
    X = np.column_stack([lons - 66.1, lats - 34.1]) * 100
    y = (X[:, 0] > 0).astype(int)
    mask = np.arange(120) % 3 != 0
    m = make_matrix(X, y, train_mask=mask)
    m.lons[:], m.lats[:] = lons, lats
    model = train_model("GCNN_weighted", m, TrainConfig(nn_max_epochs=150, nn_learning_rate=1e-2))
    g = build_knn_graph(X, lons, lats, y, k=5, schema_fingerprint=m.schema.fingerprint)
    p = predict_proba(model, g, np.flatnonzero(~mask))
    assert np.mean((p >= 0.5) == y[~mask]) >= 0.85
    with pytest.raises(UnsupportedModelKind):
        predict_proba(model, X)


# ---------------------------------------------------------------------------
# contract checks

def test_schema_and_label_checks(rng):
    X, y = noisy_linear(rng, 50, 2)
    m = make_matrix(X, y)
    model = train_model("LR", m)
    with pytest.raises(SchemaMismatch):
        predict_proba(model, np.zeros((3, 5)))
    other = make_matrix(np.hstack([X, X]), y)
    with pytest.raises(SchemaMismatch):
        predict_proba(model, other)
    with pytest.raises(SingleClassData):
        train_model("RF", make_matrix(X, np.zeros(50)))
    with pytest.raises(UnsupportedModelKind):
        train_model("SVM", m)
    with pytest.raises(ConfigError):
        TrainConfig(nn_patience=0)
    with pytest.raises(ConfigError):
        TrainConfig.from_json({"nope": 1})


@pytest.mark.parametrize("kind", ["LR", "GBT", "FNN"])
def test_save_load_gives_identical_predictions(kind, rng, tmp_path):
    X, y = noisy_linear(rng, 120, 3)
    X = np.column_stack([X, rng.integers(0, 3, 120)])
    m = make_matrix(X, y, categorical=(3,))
    model = train_model(kind, m, TrainConfig(gbt_n_rounds=20, nn_max_epochs=20))
    save_model(model, tmp_path / "m.json")
    assert np.array_equal(predict_proba(load_model(tmp_path / "m.json"), m), predict_proba(model, m))
