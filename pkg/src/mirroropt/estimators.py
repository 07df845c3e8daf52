"""scikit-learn style estimators trained by stochastic mirror descent."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, validate_data

from .constraints import FeasibleSet, check_pair, euclid_project
from .geometry import MirrorMap
from .problems import Dataset, LinearModelProblem, logistic_problem
from .solver import RunConfig, run_smd
from .stepsizes import MSPS, Constant, MSPSMax, SmoothedMSPSMax

_RULES = {
    "constant": lambda est, n: Constant(est.eta),
    "msps": lambda est, n: MSPS(est.c),
    "msps_max": lambda est, n: MSPSMax(est.c, est.eta_b),
    "smoothed_msps_max": lambda est, n: SmoothedMSPSMax(est.c, est.tau, n=n, eta_init=est.eta_b),
}


class _MirrorDescentBase(BaseEstimator):
    """Shared parameters and the training loop.

    Parameters
    ----------
    mirror : {"euclidean", "pnorm", "negentropy", "mahalanobis"}
    p : float
        Exponent of the p-norm map; ignored otherwise.
    M : array-like or None
        Matrix of the Mahalanobis map; ``None`` uses the diagonal of
        ``X.T @ X / n``.
    constraint : {"reals", "nonneg", "box", "simplex"}
    lo, hi : float
        Box bounds.
    stepsize : {"constant", "msps", "msps_max", "smoothed_msps_max"}
    eta, c, eta_b, tau : float
        Stepsize constants; each rule reads the ones it needs. The smoothed
        rule starts its moving bound at ``eta_b``.
    max_iter : int
        Number of sampled component steps.
    random_state : int
    """

    def __init__(self, mirror="euclidean", p=1.5, M=None, constraint="reals", lo=0.0, hi=1.0,
                 stepsize="msps_max", eta=0.1, c=1.0, eta_b=10.0, tau=1.0, max_iter=1000,
                 random_state=0):
        self.mirror = mirror
        self.p = p
        self.M = M
        self.constraint = constraint
        self.lo = lo
        self.hi = hi
        self.stepsize = stepsize
        self.eta = eta
        self.c = c
        self.eta_b = eta_b
        self.tau = tau
        self.max_iter = max_iter
        self.random_state = random_state

    def _mirror_map(self, X):
        d = X.shape[1]
        if self.mirror == "euclidean":
            return MirrorMap.euclidean(d)
        if self.mirror == "pnorm":
            return MirrorMap.pnorm(self.p, d)
        if self.mirror == "negentropy":
            return MirrorMap.neg_entropy(d)
        if self.mirror == "mahalanobis":
            M = np.diag(np.mean(X * X, axis=0) + 1e-12) if self.M is None else np.asarray(self.M)
            return MirrorMap.mahalanobis(M)
        raise ValueError(f"unknown mirror {self.mirror!r}")

    def _feasible_set(self):
        if self.constraint == "reals":
            return FeasibleSet.reals()
        if self.constraint == "nonneg":
            return FeasibleSet.nonneg()
        if self.constraint == "box":
            return FeasibleSet.box(self.lo, self.hi)
        if self.constraint == "simplex":
            return FeasibleSet.simplex()
        raise ValueError(f"unknown constraint {self.constraint!r}")

    def _train(self, problem, X):
        if self.stepsize not in _RULES:
            raise ValueError(f"unknown stepsize {self.stepsize!r}")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be positive")
        mirror = self._mirror_map(X)
        fset = self._feasible_set()
        check_pair(mirror, fset)
        d = X.shape[1]
        x0 = np.full(d, 1.0 / d) if fset.kind == "simplex" else euclid_project(fset, np.zeros(d))
        T = int(self.max_iter)
        cfg = RunConfig(mirror, fset, _RULES[self.stepsize](self, problem.n), T, x0,
                        seed=int(self.random_state), record_every=T, per_step_metrics=False)
        traj = run_smd(problem, cfg)
        self.coef_ = traj.final_x
        self.n_iter_ = T
        return self


class MirrorDescentRegressor(RegressorMixin, _MirrorDescentBase):
    """Least squares, f_i(x) = (<x_i, coef> - y_i)^2 / 2, fitted by SMD.

    Examples
    --------
    >>> X = np.eye(3)
    >>> reg = MirrorDescentRegressor(stepsize="msps", max_iter=200).fit(X, [1.0, 2.0, 3.0])
    >>> np.round(reg.predict(X), 6).tolist()
    [1.0, 2.0, 3.0]
    """

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        problem = LinearModelProblem(X, y.astype(float), "squared", self._feasible_set())
        return self._train(problem, X)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_


class MirrorDescentClassifier(ClassifierMixin, _MirrorDescentBase):
    """Binary logistic regression fitted by SMD. No intercept is added."""

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.classifier_tags.multi_class = False
        return tags

    def fit(self, X, y):
        X, y = validate_data(self, X, y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(
                f"Only binary classification is supported; got {len(self.classes_)} classes")
        signs = np.where(y == self.classes_[1], 1.0, -1.0)
        problem = logistic_problem(Dataset(X, signs, "fit"), fset=self._feasible_set())
        return self._train(problem, X)

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_

    def predict_proba(self, X):
        z = self.decision_function(X)
        p1 = 0.5 * (1.0 + np.tanh(0.5 * z))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        positive = self.decision_function(X) > 0
        return self.classes_[positive.astype(int)]
