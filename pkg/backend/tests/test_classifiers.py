"""
test_classifiers.py - Unit tests for the six classifier families and Gini importance.

The decision tree and k-NN are checked against slow reference
implementations written out in plain Python; LDA/QDA against discriminants
computed with explicit matrix inverses.
"""

import os
import sys
import tempfile

import joblib
import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from modules.classifiers import (
    ConstantClassifier,
    ModelFamily,
    ModelSpec,
    fit,
    gini_importance,
    hinge_objective,
    load_model,
    posteriors,
    predict,
    refit_on_top_features,
    save_model,
)
from modules.dataset import Dataset
from modules.errors import DimensionError, ModelError


def spec(family, **kw):
    return ModelSpec.for_family(family, **kw)


def labels(model, X):
    return predict(model, X)[0]


# ── Reference CART ───────────────────────────────────────

def oracle_tree(X, y, n_classes, depth=0, max_depth=30):
    """Exhaustive split search; returns a nested (feature, threshold, left, right) or a label."""
    counts = [int((y == c).sum()) for c in range(n_classes)]
    n = len(y)
    leaf = counts.index(max(counts))
    if n < 2 or max(counts) == n or depth >= max_depth:
        return leaf
    candidates = []
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f].tolist()))
        for a, b in zip(values, values[1:]):
            threshold = (a + b) / 2
            mask = X[:, f] <= threshold
            left = [int((y[mask] == c).sum()) for c in range(n_classes)]
            right = [counts[c] - left[c] for c in range(n_classes)]
            nl, nr = sum(left), sum(right)
            score = sum(v * v for v in left) / nl + sum(v * v for v in right) / nr
            candidates.append((score, f, threshold))
    if not candidates:
        return leaf
    top = max(c[0] for c in candidates)
    _, f, threshold = next(c for c in candidates if c[0] >= top - 1e-12)
    mask = X[:, f] <= threshold
    return (f, threshold,
            oracle_tree(X[mask], y[mask], n_classes, depth + 1, max_depth),
            oracle_tree(X[~mask], y[~mask], n_classes, depth + 1, max_depth))


def oracle_predict(node, x):
    while isinstance(node, tuple):
        f, threshold, left, right = node
        node = left if x[f] <= threshold else right
    return node


def oracle_nodes(node):
    if isinstance(node, tuple):
        return 1 + oracle_nodes(node[2]) + oracle_nodes(node[3])
    return 1


def test_tree_matches_exhaustive_oracle():
    """25 small integer-valued fixtures, many tied splits."""
    rng = np.random.default_rng(42)
    for case in range(25):
        d = 1 + case % 3
        n = int(rng.integers(5, 51))
        X = rng.integers(0, 4, size=(n, d)).astype(float)
        y = rng.integers(0, 3, size=n)
        max_depth = 30 if case % 2 == 0 else 2
        model = fit(spec("dt", max_depth=max_depth), X, y, n_classes=3)
        if isinstance(model.estimator, ConstantClassifier):
            continue
        reference = oracle_tree(X, y, 3, max_depth=max_depth)
        assert model.estimator.node_count == oracle_nodes(reference), f"case {case}"
        probes = np.vstack([X, rng.integers(-1, 5, size=(30, d)) + 0.5 * rng.integers(0, 2, size=(30, d))])
        expected = [oracle_predict(reference, x) for x in probes]
        assert list(labels(model, probes)) == expected, f"case {case}"


def test_tree_xor():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    model = fit(spec("dt", max_depth=2), X, y)
    assert list(labels(model, X)) == [0, 1, 1, 0]


def test_tree_leaves_pure_or_stopped():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    tree = fit(spec("dt"), X, y).estimator
    for node in range(tree.node_count):
        if tree.feature[node] < 0:
            counts = tree.value[node]
            assert counts.max() == counts.sum()


def test_constant_target_every_family():
    X = np.random.default_rng(0).normal(size=(20, 3))
    y = np.full(20, 2)
    for family in ModelFamily:
        model = fit(spec(family), X, y, n_classes=4)
        assert list(labels(model, X[:5])) == [2] * 5, family


# ── Random forest ────────────────────────────────────────

def test_forest_single_tree_equals_tree():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(80, 4))
    y = rng.integers(0, 3, size=80)
    Q = rng.normal(size=(50, 4))
    tree = fit(spec("dt"), X, y)
    forest = fit(spec("rf", n_estimators=1, bootstrap=False, max_features=None), X, y)
    assert np.array_equal(labels(tree, Q), labels(forest, Q))


def test_forest_deterministic_per_seed():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 6))
    y = (X[:, 0] * X[:, 1] > 0).astype(int)
    a = fit(spec("rf", n_estimators=10, seed=5), X, y)
    b = fit(spec("rf", n_estimators=10, seed=5), X, y)
    assert np.array_equal(labels(a, X), labels(b, X))
    assert np.allclose(a.estimator.normalized_importances(), b.estimator.normalized_importances())


# ── k-NN ─────────────────────────────────────────────────

def oracle_knn(X, y, q, k, n_classes):
    d2 = [float(((X[i] - q) ** 2).sum()) for i in range(len(X))]
    order = sorted(range(len(X)), key=lambda i: (d2[i], i))[:k]
    votes = [0] * n_classes
    for i in order:
        votes[y[i]] += 1
    best = max(votes)
    for i in order:
        if votes[y[i]] == best:
            return int(y[i])


def test_knn_matches_brute_force_scan():
    """Integer grids produce many exact distance ties."""
    rng = np.random.default_rng(11)
    for k in (1, 3, 4, 5):
        X = rng.integers(0, 6, size=(150, 3)).astype(float)
        y = rng.integers(0, 3, size=150)
        Q = rng.integers(-1, 7, size=(60, 3)).astype(float)
        expected = [oracle_knn(X, y, q, k, 3) for q in Q]
        for algorithm in ("brute", "kd_tree"):
            model = fit(spec("knn", n_neighbors=k, knn_algorithm=algorithm), X, y, n_classes=3)
            assert list(labels(model, Q)) == expected, (k, algorithm)


def test_knn_one_neighbour_recovers_training_labels():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(120, 5))
    y = rng.integers(0, 4, size=120)
    model = fit(spec("knn", n_neighbors=1), X, y)
    assert np.array_equal(labels(model, X), y)


def test_knn_auto_picks_tree_for_large_low_dim():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(2500, 3))
    y = (X[:, 0] > 0).astype(int)
    model = fit(spec("knn"), X, y)
    assert model.estimator.resolved_algorithm == "kd_tree"
    brute = fit(spec("knn", knn_algorithm="brute"), X, y)
    Q = rng.normal(size=(200, 3))
    assert np.array_equal(labels(model, Q), labels(brute, Q))


def test_knn_small_distance_blocks_match_single_block():
    """Chunking queries and reference rows keeps the (distance, index) order exactly."""
    rng = np.random.default_rng(8)
    X = rng.integers(0, 4, size=(97, 2)).astype(float)
    y = rng.integers(0, 3, size=97)
    Q = rng.integers(-1, 5, size=(23, 2)).astype(float)
    whole = fit(spec("knn", n_neighbors=5, knn_algorithm="brute"), X, y, n_classes=3)
    chunked = fit(spec("knn", n_neighbors=5, knn_algorithm="brute"), X, y, n_classes=3)
    chunked.estimator.BLOCK_FLOATS = 16
    assert np.array_equal(chunked.estimator.kneighbors(Q), whole.estimator.kneighbors(Q))
    assert list(labels(chunked, Q)) == [oracle_knn(X, y, q, 5, 3) for q in Q]


# ── LDA / QDA ────────────────────────────────────────────

def two_gaussians(seed=0, n=40):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, 2)) @ np.array([[1.0, 0.3], [0.0, 0.8]]) + [1.0, 0.5]
    B = rng.normal(size=(n + 10, 2)) @ np.array([[0.6, 0.0], [0.2, 1.2]]) + [-1.0, 0.0]
    X = np.vstack([A, B])
    y = np.array([0] * n + [1] * (n + 10))
    return X, y


def softmax(scores):
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=1, keepdims=True)


def test_lda_boundary_by_hand():
    """Means ±(1,0), equal priors → boundary x=0."""
    offsets = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    X = np.vstack([offsets + [1.0, 0.0], offsets + [-1.0, 0.0]])
    y = np.array([0] * 4 + [1] * 4)
    model = fit(spec("lda", ridge=0.0), X, y)
    assert list(labels(model, np.array([[0.1, 7.0], [-0.1, -7.0]]))) == [0, 1]


def test_lda_posteriors_by_hand():
    X, y = two_gaussians()
    model = fit(spec("lda", ridge=0.0), X, y)
    n = len(y)
    means = [X[y == c].mean(axis=0) for c in (0, 1)]
    pooled = sum((X[y == c] - means[c]).T @ (X[y == c] - means[c]) for c in (0, 1)) / n
    inv = np.linalg.inv(pooled)
    Q = np.random.default_rng(9).normal(size=(25, 2)) * 2
    scores = np.column_stack([
        Q @ inv @ means[c] - 0.5 * means[c] @ inv @ means[c] + np.log((y == c).mean())
        for c in (0, 1)
    ])
    assert np.abs(posteriors(model, Q) - softmax(scores)).max() < 1e-9


def test_qda_posteriors_by_hand():
    X, y = two_gaussians(seed=1)
    model = fit(spec("qda", ridge=0.0), X, y)
    Q = np.random.default_rng(10).normal(size=(25, 2)) * 2
    columns = []
    for c in (0, 1):
        Xc = X[y == c]
        mu = Xc.mean(axis=0)
        cov = (Xc - mu).T @ (Xc - mu) / len(Xc)
        inv = np.linalg.inv(cov)
        diff = Q - mu
        maha = np.einsum("ij,jk,ik->i", diff, inv, diff)
        columns.append(-0.5 * np.log(np.linalg.det(cov)) - 0.5 * maha + np.log((y == c).mean()))
    assert np.abs(posteriors(model, Q) - softmax(np.column_stack(columns))).max() < 1e-9


def test_qda_equals_lda_with_shared_covariance():
    rng = np.random.default_rng(6)
    base = rng.normal(size=(50, 3))
    X = np.vstack([base + [2.0, 0.0, 0.0], base - [2.0, 0.0, 0.0]])
    y = np.array([0] * 50 + [1] * 50)
    Q = rng.normal(size=(100, 3)) * 3
    lda = fit(spec("lda"), X, y)
    qda = fit(spec("qda"), X, y)
    assert np.array_equal(labels(lda, Q), labels(qda, Q))


def test_discriminant_ridge_handles_constant_column():
    rng = np.random.default_rng(8)
    X = np.column_stack([rng.normal(size=40), np.zeros(40)])
    y = (X[:, 0] > 0).astype(int)
    for family in ("lda", "qda"):
        model = fit(spec(family), X, y)
        assert (labels(model, X) == y).mean() > 0.9


# ── Linear SVM ───────────────────────────────────────────

def separable_set(seed=0, n=100):
    rng = np.random.default_rng(seed)
    a = np.column_stack([3 + rng.normal(scale=0.3, size=n), rng.uniform(-1, 1, size=n)])
    b = np.column_stack([-3 + rng.normal(scale=0.3, size=n), rng.uniform(-1, 1, size=n)])
    return np.vstack([a, b]), np.array([1] * n + [0] * n)


def test_svm_separable_accuracy_and_objective():
    X, y = separable_set()
    model = fit(spec("svm_linear"), X, y)
    assert (labels(model, X) == y).all()
    history = model.estimator.history
    assert len(history) == 20
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))
    assert abs(hinge_objective(model, X, y) - history[-1]) < 1e-12


def test_svm_seeded():
    X, y = separable_set(seed=3)
    a = fit(spec("svm_linear", seed=1), X, y).estimator.weights
    b = fit(spec("svm_linear", seed=1), X, y).estimator.weights
    assert np.array_equal(a, b)


# ── Importance ───────────────────────────────────────────

def test_importance_single_split_feature():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(80, 5))
    y = (X[:, 3] > 0).astype(int)
    model = fit(spec("dt"), X, y, feature_names=[f"f{i}" for i in range(5)])
    report = gini_importance(model)
    assert report.entries[0] == ("f3", 1.0)
    assert all(v == 0 for _, v in report.entries[1:])


def test_importance_sums_to_one_and_ignores_label_names():
    rng = np.random.default_rng(13)
    X = rng.integers(0, 5, size=(120, 4)).astype(float)
    y = (X[:, 0] + X[:, 2] + rng.integers(0, 2, size=120)).astype(int) % 3
    permuted = np.array([2, 0, 1])[y]
    a = gini_importance(fit(spec("dt"), X, y))
    b = gini_importance(fit(spec("dt"), X, permuted))
    assert abs(sum(v for _, v in a.entries) - 1.0) < 1e-9
    assert dict(a.entries) == dict(b.entries)


def test_importance_rejects_other_families():
    X, y = separable_set()
    try:
        gini_importance(fit(spec("knn"), X, y))
        assert False, "Should have raised ModelError"
    except ModelError:
        pass
    try:
        posteriors(fit(spec("dt"), X, y), X)
        assert False, "Should have raised ModelError"
    except ModelError:
        pass


def test_refit_on_top_features():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(200, 4))
    y = (X[:, 2] > 0).astype(int)
    names = ("a", "b", "c", "d")
    train = Dataset(X[:100], y[:100], names, ("benign", "dos"))
    test = Dataset(X[100:], y[100:], names, ("benign", "dos"))
    importance = gini_importance(fit(spec("dt"), train.X, train.y, 2, names))
    model, report = refit_on_top_features(train, test, importance, n_top=1)
    assert model.feature_names == ("c",)
    assert report.accuracy > 0.9

    full, _ = refit_on_top_features(train, test, importance, n_top=4)
    plain = fit(spec("dt"), train.X, train.y, 2, names)
    assert np.array_equal(labels(full, test.X), labels(plain, test.X))
    try:
        refit_on_top_features(train, test, importance, n_top=5)
        assert False, "Should have raised DimensionError"
    except DimensionError:
        pass


# ── Contract ─────────────────────────────────────────────

def test_fit_and_predict_validation():
    X, y = separable_set()
    bad = X.copy()
    bad[0, 0] = np.nan
    for call in (lambda: fit(spec("dt"), bad, y),
                 lambda: fit(spec("dt"), X, y[:-1]),
                 lambda: predict(fit(spec("dt"), X, y), X[:, :1])):
        try:
            call()
            assert False, "Should have raised DimensionError"
        except DimensionError:
            pass
    try:
        fit(spec("dt"), X, y, n_classes=1)
        assert False, "Should have raised ModelError"
    except ModelError:
        pass


def test_training_time_recorded():
    X, y = separable_set()
    model = fit(spec("knn"), X, y)
    _, infer_time = predict(model, X)
    assert model.train_time_s >= 0 and infer_time >= 0
    assert model.family is ModelFamily.KNN


# ── Persistence ──────────────────────────────────────────

def test_saved_models_predict_identically_after_reload():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(90, 4))
    y = rng.integers(0, 3, size=90)
    Q = rng.normal(size=(40, 4))
    with tempfile.TemporaryDirectory() as tmp:
        for family in ModelFamily:
            model = fit(spec(family, n_estimators=5), X, y, n_classes=3, feature_names=list("abcd"))
            path = save_model(model, os.path.join(tmp, f"{family.value}.joblib"),
                              {"n_components": None})
            loaded, preprocess = load_model(path)
            assert loaded.family is family
            assert loaded.feature_names == ("a", "b", "c", "d")
            assert preprocess == {"n_components": None}
            assert np.array_equal(labels(loaded, Q), labels(model, Q)), family


def test_load_model_rejects_other_files():
    with tempfile.TemporaryDirectory() as tmp:
        text = os.path.join(tmp, "notes.joblib")
        with open(text, "w", encoding="utf-8") as f:
            f.write("not a model\n")
        other = os.path.join(tmp, "other.joblib")
        joblib.dump({"format": "classifier", "version": 0}, other)
        for path in (text, other):
            try:
                load_model(path)
                assert False, "Should have raised ModelError"
            except ModelError:
                pass


if __name__ == "__main__":
    tests = [v for k, v in globals().items() if k.startswith("test_")]
    passed = 0
    for t in tests:
        try:
            t()
            print(f"  ✓ {t.__name__}")
            passed += 1
        except AssertionError as e:
            print(f"  ✗ {t.__name__}: {e}")
        except Exception as e:
            print(f"  ✗ {t.__name__}: {e}")
    print(f"\n{passed}/{len(tests)} tests passed")
