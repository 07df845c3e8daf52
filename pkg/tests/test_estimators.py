import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.estimator_checks import parametrize_with_checks

from mirroropt.estimators import MirrorDescentClassifier, MirrorDescentRegressor
from mirroropt.exceptions import UnsupportedPair
from mirroropt.problems import synth_margin_dataset


@parametrize_with_checks([MirrorDescentRegressor(max_iter=200), MirrorDescentClassifier(max_iter=200)])
def test_sklearn_compatible(estimator, check):
    check(estimator)


def test_regressor_recovers_consistent_system(rng):
    A = rng.standard_normal((60, 4))
    w = rng.standard_normal(4)
    reg = MirrorDescentRegressor(stepsize="msps", max_iter=3000).fit(A, A @ w)
    np.testing.assert_allclose(reg.coef_, w, atol=1e-6)
    assert reg.score(A, A @ w) > 1 - 1e-10


def test_regressor_on_the_simplex_with_entropy(rng):
    A = rng.integers(0, 2, (40, 5)).astype(float)
    w = np.array([0.5, 0.2, 0.1, 0.1, 0.1])
    reg = MirrorDescentRegressor(mirror="negentropy", constraint="simplex", stepsize="msps",
                                 max_iter=5000).fit(A, A @ w)
    assert reg.coef_.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(reg.coef_, w, atol=1e-3)


def test_classifier_separates_margin_data():
    data = synth_margin_dataset(400, 5, 0.05, seed=3)
    labels = np.where(data.labels > 0, "spam", "ham")
    clf = MirrorDescentClassifier(max_iter=4000).fit(data.features, labels)
    assert set(clf.classes_) == {"ham", "spam"}
    assert clf.score(data.features, labels) >= 0.97
    proba = clf.predict_proba(data.features[:5])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)


def test_params_and_clone():
    clf = MirrorDescentClassifier(c=2.0, eta_b=0.5)
    assert clf.get_params()["c"] == 2.0
    other = clone(clf).set_params(mirror="pnorm", p=1.3)
    assert other.get_params()["p"] == 1.3 and clf.get_params()["mirror"] == "euclidean"


def test_errors(rng):
    X = rng.standard_normal((10, 2))
    with pytest.raises(NotFittedError):
        MirrorDescentRegressor().predict(X)
    with pytest.raises(ValueError, match="binary"):
        MirrorDescentClassifier().fit(X, np.arange(10) % 3)
    with pytest.raises(UnsupportedPair):
        MirrorDescentRegressor(mirror="negentropy").fit(X, X[:, 0])
    with pytest.raises(ValueError):
        MirrorDescentRegressor(stepsize="adam").fit(X, X[:, 0])
    reg = MirrorDescentRegressor(max_iter=10).fit(X, X[:, 0])
    with pytest.raises(ValueError):
        reg.predict(rng.standard_normal((3, 5)))


def test_random_state_controls_sampling(rng):
    X = rng.standard_normal((30, 3))
    y = X @ np.ones(3) + 0.3 * rng.standard_normal(30)
    a = MirrorDescentRegressor(stepsize="constant", eta=0.05, max_iter=50, random_state=1).fit(X, y)
    b = MirrorDescentRegressor(stepsize="constant", eta=0.05, max_iter=50, random_state=1).fit(X, y)
    c = MirrorDescentRegressor(stepsize="constant", eta=0.05, max_iter=50, random_state=2).fit(X, y)
    np.testing.assert_array_equal(a.coef_, b.coef_)
    assert not np.array_equal(a.coef_, c.coef_)
