import numpy as np
import pytest
from sklearn.base import clone

from sfegacn.classifier import DenseClassifier


@pytest.fixture
def three_class():
    rng = np.random.default_rng(0)
    means = np.array([[0, 0], [5, 0], [0, 5]])
    X = np.vstack([m + rng.normal(size=(40, 2)) for m in means])
    return X, np.repeat(["a", "b", "c"], 40)


def test_fit_predict(three_class):
    X, y = three_class
    clf = DenseClassifier(hidden=(8,), epochs=40).fit(X, y)
    assert (clf.predict(X) == y).mean() > 0.95
    np.testing.assert_allclose(clf.predict_proba(X).sum(1), 1.0)
    assert clf.loss_curve_[-1] < clf.loss_curve_[0]


def test_validation_curve(three_class):
    X, y = three_class
    clf = DenseClassifier(hidden=(), epochs=5).fit(X[::2], y[::2], X[1::2], y[1::2])
    assert len(clf.val_loss_curve_) == 5
    assert clf.val_loss_curve_[-1] == pytest.approx(clf.log_loss(X[1::2], y[1::2]))


def test_balanced_weights_equalise_class_totals():
    X = np.vstack([np.zeros((9, 1)), np.ones((1, 1))])
    y = np.array(["big"] * 9 + ["small"])
    plain = DenseClassifier(hidden=(), epochs=30, standardize=False).fit(X, y)
    bal = DenseClassifier(hidden=(), epochs=30, standardize=False,
                          class_weight="balanced").fit(X, y)
    small = list(plain.classes_).index("small")
    assert bal.predict_proba([[1.0]])[0, small] > plain.predict_proba([[1.0]])[0, small]
    with pytest.raises(ValueError):
        DenseClassifier(class_weight="heavy").fit(X, y)


def test_sklearn_clone_and_determinism(three_class):
    X, y = three_class
    a = DenseClassifier(epochs=3, seed=4)
    b = clone(a)
    np.testing.assert_array_equal(a.fit(X, y).predict_proba(X), b.fit(X, y).predict_proba(X))
