"""Finite-sum problems, datasets and the neighborhood quantities sigma^2, sigma^2_X.

Problems are evaluated in batches: ``component_values(idx, X)`` takes one
component index per row of ``X`` so the solver can advance many replicates
in one numpy call.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import lsq_linear
from scipy.spatial.distance import cdist
from scipy.special import expit

from .constraints import (
    BOX,
    L1BALL,
    NONNEG,
    REALS,
    SIMPLEX,
    FeasibleSet,
    LiftMatrix,
    euclid_project,
    project_simplex,
)
from .exceptions import (
    BadLabels,
    DimensionMismatch,
    DomainError,
    MissingOptimum,
    NotStochastic,
    ParseError,
    UnboundedSet,
)
from .geometry import NormTag, dual_norm_sq

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "MIRROROPT_DATA_DIR"


@dataclass
class Component:
    """One summand f_i of a finite-sum objective."""

    value: Callable
    grad: Callable
    inf_unconstrained: float
    inf_constrained: Callable[[FeasibleSet], float]
    smoothness_L: float
    norm: NormTag = field(default_factory=NormTag.l2)
    dim: int | None = None


class FiniteSumProblem:
    """Base class for f(x) = (1/n) sum_i f_i(x) over a feasible set.

    Subclasses implement :meth:`component_values` and
    :meth:`component_grads`; everything else has a generic fallback.

    Attributes
    ----------
    n, dim : int
    fset : FeasibleSet
    norm : NormTag
        Norm in which the declared ``smoothness`` constants hold.
    component_inf : ndarray of shape (n,)
        Unconstrained infima f_i^* (may contain ``-inf``).
    smoothness : ndarray of shape (n,)
    known_xstar : ndarray or None
    known_fstar : float or None
    """

    name = "problem"

    def __init__(self, n, dim, fset, norm, component_inf, smoothness,
                 known_xstar=None, known_fstar=None):
        self.n = int(n)
        self.dim = int(dim)
        self.fset = fset
        self.norm = norm
        self.component_inf = np.asarray(component_inf, dtype=float)
        self.smoothness = np.asarray(smoothness, dtype=float)
        self.known_xstar = None if known_xstar is None else np.asarray(known_xstar, dtype=float)
        if known_fstar is None and self.known_xstar is not None:
            known_fstar = float(self.value(self.known_xstar))
        self.known_fstar = known_fstar
        self._inf_constrained_cache = {}

    # -- batched evaluation -------------------------------------------------
    def component_values(self, idx, X):
        raise NotImplementedError

    def component_grads(self, idx, X):
        raise NotImplementedError

    def all_values(self, X):
        """Matrix of f_i(x) with shape ``X.shape[:-1] + (n,)``."""
        X = np.asarray(X, dtype=float)
        flat = X.reshape(-1, self.dim)
        out = np.empty((flat.shape[0], self.n))
        for i in range(self.n):
            out[:, i] = self.component_values(np.full(flat.shape[0], i), flat)
        return out.reshape(X.shape[:-1] + (self.n,))

    def value(self, X):
        return np.mean(self.all_values(X), axis=-1)

    def grad(self, X):
        X = np.asarray(X, dtype=float)
        flat = X.reshape(-1, self.dim)
        acc = np.zeros_like(flat)
        for i in range(self.n):
            acc += self.component_grads(np.full(flat.shape[0], i), flat)
        return (acc / self.n).reshape(X.shape)

    def bregman_f(self, x, y):
        """B_f(x; y) for the averaged objective, along the last axis."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.value(x) - self.value(y) - np.sum(self.grad(y) * (x - y), axis=-1)

    def component_bregman(self, i, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        idx = np.full(max(len(x), len(y)), i)
        x, y = np.broadcast_arrays(x, y)
        return (self.component_values(idx, x) - self.component_values(idx, y)
                - np.sum(self.component_grads(idx, y) * (x - y), axis=-1))

    # -- infima --------------------------------------------------------------
    def exact_inf_constrained(self, i, fset):
        """Closed-form inf of f_i over ``fset`` or ``None`` when unavailable."""
        return None

    def inf_constrained(self, i, fset=None, resolution=20001):
        fset = self.fset if fset is None else fset
        exact = self.exact_inf_constrained(i, fset)
        if exact is not None:
            return float(exact)
        key = (i, repr(fset), resolution)
        if key not in self._inf_constrained_cache:
            self._inf_constrained_cache[key] = component_inf_oracle(
                self.components[i], fset, resolution)
        return self._inf_constrained_cache[key]

    def constrained_infima(self, fset=None, resolution=20001):
        return np.array([self.inf_constrained(i, fset, resolution) for i in range(self.n)])

    def has_exact_constrained_infima(self, fset=None):
        fset = self.fset if fset is None else fset
        return all(self.exact_inf_constrained(i, fset) is not None for i in range(self.n))

    def smoothness_wrt(self, norm_tag):
        """Per-component smoothness constants under another norm (None if unknown)."""
        if norm_tag == self.norm:
            return self.smoothness
        return None

    @property
    def components(self):
        comps = []
        for i in range(self.n):
            comps.append(Component(
                value=_bind_value(self, i),
                grad=_bind_grad(self, i),
                inf_unconstrained=float(self.component_inf[i]),
                inf_constrained=lambda fset, i=i: self.inf_constrained(i, fset),
                smoothness_L=float(self.smoothness[i]),
                norm=self.norm,
                dim=self.dim,
            ))
        return comps

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, dim={self.dim}, set={self.fset!r})"


def _bind_value(problem, i):
    def value(x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_2d(x)
        out = problem.component_values(np.full(len(flat), i), flat)
        return out if x.ndim == 2 else float(out[0])
    return value


def _bind_grad(problem, i):
    def grad(x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_2d(x)
        out = problem.component_grads(np.full(len(flat), i), flat)
        return out if x.ndim == 2 else out[0]
    return grad


class CallableProblem(FiniteSumProblem):
    """Finite sum assembled from arbitrary :class:`Component` objects.

    Component callables receive a single point of shape (d,); evaluation
    is therefore a Python loop and meant for small, hand-built problems.
    """

    name = "callable"

    def __init__(self, components, fset, dim, norm=None, known_xstar=None, known_fstar=None):
        self._components = [c if c.dim is not None else replace(c, dim=int(dim))
                            for c in components]
        norm = norm if norm is not None else self._components[0].norm
        super().__init__(
            len(self._components), dim, fset, norm,
            [c.inf_unconstrained for c in self._components],
            [c.smoothness_L for c in self._components],
            known_xstar=known_xstar, known_fstar=known_fstar,
        )

    @property
    def components(self):
        return self._components

    def component_values(self, idx, X):
        X = np.atleast_2d(X)
        return np.array([self._components[i].value(x) for i, x in zip(idx, X)], dtype=float)

    def component_grads(self, idx, X):
        X = np.atleast_2d(X)
        return np.array([self._components[i].grad(x) for i, x in zip(idx, X)], dtype=float)

    def exact_inf_constrained(self, i, fset):
        return None

    def inf_constrained(self, i, fset=None, resolution=20001):
        fset = self.fset if fset is None else fset
        try:
            return float(self._components[i].inf_constrained(fset))
        except (NotImplementedError, TypeError):
            return component_inf_oracle(self._components[i], fset, resolution)


def _interval(fset):
    if fset.kind == REALS:
        return -np.inf, np.inf
    if fset.kind == NONNEG:
        return 0.0, np.inf
    if fset.kind == BOX:
        if fset.lo.size != 1:
            raise DomainError("quad1d problems live in one dimension")
        return float(fset.lo[0]), float(fset.hi[0])
    raise DomainError(f"quad1d problems need a Reals, NonNeg or Box set, got {fset.kind}")


def _quad_limit(a, b, c, direction):
    """lim f(x) for x -> direction * inf."""
    if a > 0:
        return np.inf
    if a < 0:
        return -np.inf
    if b == 0:
        return c
    return -np.inf if direction * b < 0 else np.inf


def quad_min_on_interval(a, b, c, lo, hi):
    """Exact infimum of a x^2 + b x + c over [lo, hi] (endpoints may be infinite)."""
    cands = []
    for end, direction in ((lo, -1), (hi, 1)):
        if np.isfinite(end):
            cands.append(a * end * end + b * end + c)
        else:
            cands.append(_quad_limit(a, b, c, direction))
    if a > 0:
        v = -b / (2 * a)
        if lo <= v <= hi:
            cands.append(c - b * b / (4 * a))
    return float(min(cands))


class Quad1DProblem(FiniteSumProblem):
    """f_i(x) = a_i x^2 + b_i x + c_i on an interval of the real line."""

    name = "quad1d"

    def __init__(self, a, b, c, fset):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        lo, hi = _interval(fset)
        infs = np.array([quad_min_on_interval(ai, bi, ci, -np.inf, np.inf)
                         for ai, bi, ci in zip(self.a, self.b, self.c)])
        abar, bbar, cbar = self.a.mean(), self.b.mean(), self.c.mean()
        xstar = None
        if abar > 0:
            xstar = np.array([np.clip(-bbar / (2 * abar), lo, hi)])
        elif np.isfinite(lo) and np.isfinite(hi):
            ends = [lo, hi]
            vals = [abar * e * e + bbar * e + cbar for e in ends]
            xstar = np.array([ends[int(np.argmin(vals))]])
        super().__init__(len(self.a), 1, fset, NormTag.l2(), infs, 2 * np.abs(self.a),
                         known_xstar=xstar)

    def component_values(self, idx, X):
        x = np.asarray(X, dtype=float)[..., 0]
        return self.a[idx] * x * x + self.b[idx] * x + self.c[idx]

    def component_grads(self, idx, X):
        x = np.asarray(X, dtype=float)[..., 0]
        return (2 * self.a[idx] * x + self.b[idx])[..., None]

    def all_values(self, X):
        x = np.asarray(X, dtype=float)[..., 0:1]
        return self.a * x * x + self.b * x + self.c

    def value(self, X):
        x = np.asarray(X, dtype=float)[..., 0]
        return self.a.mean() * x * x + self.b.mean() * x + self.c.mean()

    def grad(self, X):
        x = np.asarray(X, dtype=float)[..., 0]
        return (2 * self.a.mean() * x + self.b.mean())[..., None]

    def exact_inf_constrained(self, i, fset):
        try:
            lo, hi = _interval(fset)
        except DomainError:
            return None
        return quad_min_on_interval(self.a[i], self.b[i], self.c[i], lo, hi)

    def smoothness_wrt(self, norm_tag):
        if norm_tag.kind in ("mahalanobis", "mahalanobis_inv"):
            m = float(norm_tag.M[0, 0])
            scale = 1.0 / m if norm_tag.kind == "mahalanobis" else m
            return 2 * np.abs(self.a) * scale
        return 2 * np.abs(self.a)

    @property
    def curvature(self) -> float:
        """Second derivative of the averaged objective."""
        return 2 * float(self.a.mean())


def quad1d_problem(coeffs, fset, require_strongly_convex=False) -> Quad1DProblem:
    """Build the one-dimensional quadratic finite sum from ``(a, b, c)`` triples."""
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1, 3)
    if require_strongly_convex and not coeffs[:, 0].mean() > 0:
        raise DomainError("the averaged quadratic is not strongly convex")
    return Quad1DProblem(coeffs[:, 0], coeffs[:, 1], coeffs[:, 2], fset)


def _linear_range(w, fset):
    """Range [lo, hi] of <w, x> over the set."""
    if fset.kind == REALS:
        return (0.0, 0.0) if not np.any(w) else (-np.inf, np.inf)
    if fset.kind == NONNEG:
        lo = 0.0 if np.all(w >= 0) else -np.inf
        hi = 0.0 if np.all(w <= 0) else np.inf
        return lo, hi
    if fset.kind == BOX:
        a, b = w * fset.lo, w * fset.hi
        return float(np.sum(np.minimum(a, b))), float(np.sum(np.maximum(a, b)))
    if fset.kind == SIMPLEX:
        return float(w.min()), float(w.max())
    r = fset.radius * float(np.max(np.abs(w)))
    return -r, r


class LinearModelProblem(FiniteSumProblem):
    """Losses of a linear predictor, f_i(x) = loss(<w_i, x>, target_i).

    ``loss="squared"`` gives f_i = (<w_i, x> - b_i)^2 / 2 (linear systems);
    ``loss="logistic"`` gives f_i = log(1 + exp(-y_i <w_i, x>)).
    """

    def __init__(self, W, targets, loss, fset, norm=None, known_xstar=None,
                 known_fstar=None, smoothness=None, xstar_exact=True):
        W = np.asarray(W, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if W.ndim != 2 or targets.shape != (W.shape[0],):
            raise DimensionMismatch(
                f"features {W.shape} and targets {targets.shape} do not match")
        if loss not in ("squared", "logistic"):
            raise ValueError(f"unknown loss {loss!r}")
        self.W = W
        self.targets = targets
        self.loss = loss
        self.name = "linear_system" if loss == "squared" else "logistic"
        self.xstar_exact = xstar_exact
        norm = NormTag.l2() if norm is None else norm
        zero_rows = ~np.any(W != 0, axis=1)
        if loss == "squared":
            infs = np.where(zero_rows, 0.5 * targets ** 2, 0.0)
        else:
            infs = np.where(zero_rows, np.log(2.0), 0.0)
        self._curv = 1.0 if loss == "squared" else 0.25
        if smoothness is None:
            smoothness = self._curv * dual_norm_sq(norm, W)
        super().__init__(W.shape[0], W.shape[1], fset, norm, infs, smoothness,
                         known_xstar=known_xstar, known_fstar=known_fstar)

    def _loss(self, z, t):
        if self.loss == "squared":
            return 0.5 * (z - t) ** 2
        return np.logaddexp(0.0, -t * z)

    def _dloss(self, z, t):
        if self.loss == "squared":
            return z - t
        return -t * expit(-t * z)

    def component_values(self, idx, X):
        z = np.sum(self.W[idx] * X, axis=-1)
        return self._loss(z, self.targets[idx])

    def component_grads(self, idx, X):
        w = self.W[idx]
        z = np.sum(w * X, axis=-1)
        return self._dloss(z, self.targets[idx])[..., None] * w

    def all_values(self, X):
        z = np.asarray(X, dtype=float) @ self.W.T
        return self._loss(z, self.targets)

    def grad(self, X):
        z = np.asarray(X, dtype=float) @ self.W.T
        return (self._dloss(z, self.targets) @ self.W) / self.n

    def exact_inf_constrained(self, i, fset):
        if fset.kind == BOX and fset.lo.size != self.dim:
            return None
        lo, hi = _linear_range(self.W[i], fset)
        t = self.targets[i]
        if self.loss == "squared":
            gap = max(lo - t, t - hi, 0.0)
            return 0.5 * gap * gap
        best_margin = hi if t > 0 else -lo
        if np.isinf(best_margin):
            return 0.0
        return float(np.logaddexp(0.0, -best_margin))

    def smoothness_wrt(self, norm_tag):
        return self._curv * dual_norm_sq(norm_tag, self.W)

    def hessian(self):
        """Hessian of the averaged squared loss (constant)."""
        if self.loss != "squared":
            raise ValueError("the logistic Hessian is not constant")
        return self.W.T @ self.W / self.n


def _solve_least_squares(A, b, fset):
    if fset.kind == REALS:
        x, *_ = np.linalg.lstsq(A, b, rcond=None)
        return x
    if fset.kind in (NONNEG, BOX):
        if fset.kind == NONNEG:
            bounds = (0.0, np.inf)
        else:
            d = A.shape[1]
            if fset.lo.size not in (1, d):
                return None
            bounds = (np.broadcast_to(fset.lo, (d,)), np.broadcast_to(fset.hi, (d,)))
        res = lsq_linear(A, b, bounds=bounds, method="bvls", tol=1e-14)
        return res.x
    return None


def linear_system_problem(A, b, fset=None, norm=None, xstar=None) -> LinearModelProblem:
    """Linear system Ax = b as the finite sum of f_i(x) = (<A_i, x> - b_i)^2 / 2.

    ``xstar`` may be supplied by the caller; otherwise a least-squares
    minimizer is computed for Reals/NonNeg/Box sets.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
    fset = FeasibleSet.reals() if fset is None else fset
    if xstar is None:
        xstar = _solve_least_squares(A, b, fset)
    return LinearModelProblem(A, b, "squared", fset, norm=norm, known_xstar=xstar)


def stationary_distribution(P):
    """Stationary distribution of a row-stochastic matrix (least-squares solve)."""
    P = np.asarray(P, dtype=float)
    m = P.shape[0]
    lhs = np.vstack([P.T - np.eye(m), np.ones((1, m))])
    rhs = np.concatenate([np.zeros(m), [1.0]])
    x, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    x = np.maximum(x, 0.0)
    return x / x.sum()


def markov_problem(P) -> LinearModelProblem:
    """Stationary-distribution search as a simplex-constrained linear system.

    Rows g_i of (P^T - I) give f_i(x) = <g_i, x>^2 / 2, smooth with constant
    ``max(1, ||g_i||_inf^2)`` w.r.t. the l1 norm.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise NotStochastic(f"transition matrix must be square, got {P.shape}")
    if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-9, rtol=0):
        raise NotStochastic("rows must be non-negative and sum to one")
    m = P.shape[0]
    G = P.T - np.eye(m)
    observed = np.max(np.abs(G), axis=1) ** 2
    if np.any(observed > 1.0 + 1e-12):
        logger.warning("row smoothness %.3g exceeds the unit bound", observed.max())
    smooth = np.maximum(1.0, observed)
    xstar = stationary_distribution(P)
    prob = LinearModelProblem(G, np.zeros(m), "squared", FeasibleSet.simplex(),
                              norm=NormTag.l1(), known_xstar=xstar, known_fstar=0.0,
                              smoothness=smooth)
    prob.name = "markov"
    prob.P = P
    return prob


def random_stochastic_matrix(m, seed=0, rng=None):
    rng = np.random.Generator(np.random.Philox(seed)) if rng is None else rng
    P = rng.random((m, m)) + 1e-3
    return P / P.sum(axis=1, keepdims=True)


@dataclass
class Dataset:
    """Binary classification data with labels in {-1, +1}."""

    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    separator: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2:
            self.features = self.features.reshape(len(self.labels), -1)
        if self.features.shape[0] != self.labels.shape[0]:
            raise DimensionMismatch(
                f"{self.features.shape[0]} rows but {self.labels.shape[0]} labels")
        if np.isnan(self.features).any() or np.isnan(self.labels).any():
            raise ValueError("dataset contains NaN entries")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


def logistic_problem(data: Dataset, fset=None, norm=None, known_xstar=None) -> LinearModelProblem:
    """Logistic loss on ``data``; f_i^* is taken to be 0 by convention."""
    labels = np.asarray(data.labels)
    if labels.size and not np.all(np.isin(labels, (-1.0, 1.0))):
        raise BadLabels("labels must be -1 or +1")
    fset = FeasibleSet.reals() if fset is None else fset
    prob = LinearModelProblem(data.features, labels, "logistic", fset, norm=norm,
                              known_xstar=known_xstar, xstar_exact=known_xstar is None)
    prob.name = f"logistic[{data.name}]"
    return prob


def lift_problem(problem: LinearModelProblem):
    """Re-express an l1-ball constrained linear model on the 2d-simplex.

    Returns the lifted problem and the :class:`LiftMatrix` mapping lifted
    points back (``x = Lambda w``).
    """
    if problem.fset.kind != L1BALL:
        raise DomainError("only l1-ball problems are lifted")
    lift = LiftMatrix(problem.fset.radius, problem.dim)
    lam = lift.matrix()
    lifted = LinearModelProblem(problem.W @ lam, problem.targets, problem.loss,
                                FeasibleSet.simplex(), norm=NormTag.l1())
    lifted.name = problem.name + "[lifted]"
    return lifted, lift


def rbf_features(data: Dataset, bandwidth: float, landmarks=None) -> Dataset:
    """Kernel features K_ij = exp(-bandwidth * ||x_i - z_j||^2).

    ``landmarks`` defaults to the data itself, giving the n x n kernel matrix.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    Z = data.features if landmarks is None else np.asarray(landmarks, dtype=float)
    K = np.exp(-bandwidth * cdist(data.features, Z, "sqeuclidean"))
    return Dataset(K, data.labels.copy(), name=f"{data.name}+rbf({bandwidth:g})")


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / ".cache" / "mirroropt"))


def resolve_data_path(path) -> Path:
    path = Path(path)
    if not path.is_absolute() and not path.exists():
        candidate = data_dir() / path
        if candidate.exists():
            return candidate
    return path


def read_libsvm(path, n_features=None) -> Dataset:
    """Read a sparse LIBSVM text file into a dense :class:`Dataset`.

    Labels 0 map to -1; other labels map by sign. A file with two labels
    outside {-1, 0, 1} (e.g. 1/2) maps the smaller to -1.
    """
    path = resolve_data_path(path)
    rows, labels = [], []
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise ParseError(f"bad label {parts[0]!r}", lineno) from None
            entries = {}
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(f"expected idx:val, got {tok!r}", lineno)
                try:
                    j = int(idx)
                    v = float(val)
                except ValueError:
                    raise ParseError(f"bad entry {tok!r}", lineno) from None
                if j < 1:
                    raise ParseError(f"indices are 1-based, got {j}", lineno)
                entries[j] = v
                max_idx = max(max_idx, j)
            rows.append(entries)
            labels.append(label)
    d = max_idx if n_features is None else int(n_features)
    X = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for j, v in entries.items():
            if j > d:
                raise ParseError(f"index {j} exceeds n_features={d}", r + 1)
            X[r, j - 1] = v
    y = np.asarray(labels, dtype=float)
    uniq = np.unique(y)
    if len(uniq) == 2 and not set(uniq) <= {-1.0, 0.0, 1.0}:
        y = np.where(y == uniq[0], -1.0, 1.0)
    else:
        y = np.where(y > 0, 1.0, -1.0)
    return Dataset(X, y, name=Path(path).name)


def synth_margin_dataset(n, d, margin, seed=0) -> Dataset:
    """Linearly separable points on the unit sphere with a guaranteed margin.

    A unit separator u is drawn first; points uniform on the sphere are
    kept only when ``|<u, x>| >= margin`` and labelled by the sign.
    """
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    kept = []
    total = 0
    while total < n:
        batch = rng.standard_normal((2 * n, d))
        batch /= np.linalg.norm(batch, axis=1, keepdims=True)
        batch = batch[np.abs(batch @ u) >= margin]
        kept.append(batch)
        total += len(batch)
    X = np.concatenate(kept)[:n]
    y = np.where(X @ u > 0, 1.0, -1.0)
    return Dataset(X, y, name=f"synth(n={n},d={d},margin={margin:g},seed={seed})", separator=u)


def _xstar_value(problem, xstar):
    if xstar is None:
        xstar = problem.known_xstar
    if xstar is None:
        raise MissingOptimum(f"{problem.name}: no minimizer known; pass xstar explicitly")
    xstar = np.asarray(xstar, dtype=float)
    return xstar, float(problem.value(xstar))


def sigma_sq(problem: FiniteSumProblem, xstar=None) -> float:
    """Finite optimal objective difference f(x_*) - mean_i inf_{R^d} f_i."""
    xstar, fstar = _xstar_value(problem, xstar)
    infs = problem.component_inf
    if np.any(np.isneginf(infs)):
        return np.inf
    return max(fstar - float(np.mean(infs)), 0.0)


def sigma_sq_constrained(problem: FiniteSumProblem, xstar=None, fset=None,
                         resolution=20001) -> float:
    """Constrained version f(x_*) - mean_i inf_X f_i.

    Uses exact per-component infima when the problem provides them; falls
    back to :func:`component_inf_oracle`, whose grid minimum is an upper
    bound on the true infimum (so the returned value is a lower estimate).
    """
    xstar, fstar = _xstar_value(problem, xstar)
    fset = problem.fset if fset is None else fset
    if not problem.has_exact_constrained_infima(fset):
        logger.info("sigma^2_X of %s uses grid infima (resolution %d)", problem.name, resolution)
    infs = problem.constrained_infima(fset, resolution)
    if np.any(np.isneginf(infs)):
        return np.inf
    return max(fstar - float(np.mean(infs)), 0.0)


def grad_sq_at_optimum(problem: FiniteSumProblem, xstar=None) -> float:
    """mean_i ||grad f_i(x_*)||_2^2."""
    xstar, _ = _xstar_value(problem, xstar)
    X = np.broadcast_to(xstar, (problem.n, problem.dim))
    G = problem.component_grads(np.arange(problem.n), X)
    return float(np.mean(np.sum(G * G, axis=-1)))


def project_l1_ball(x, radius):
    x = np.asarray(x, dtype=float)
    if np.sum(np.abs(x)) <= radius:
        return x.copy()
    return np.sign(x) * radius * project_simplex(np.abs(x) / radius)


def _project(fset, x, box=None):
    if box is not None:
        return np.clip(x, box[0], box[1])
    if fset.kind == L1BALL:
        return project_l1_ball(x, fset.radius)
    return euclid_project(fset, x)


def _call_batch(fn, pts):
    # component callables take one point; a batched call could silently broadcast
    return np.array([fn(p) for p in pts], dtype=float)


def component_inf_oracle(component: Component, fset: FeasibleSet, resolution=10001,
                         bounding_box=None, seed=0, refine_steps=500) -> float:
    """Brute-force infimum of one component over a bounded set.

    Evaluates ``resolution`` grid points (1-D boxes) or random samples
    (Dirichlet on the simplex, lifted Dirichlet on the l1 ball, uniform on
    boxes), then runs projected gradient with backtracking from the best
    sample. The result is an upper bound on the true infimum.

    ``bounding_box=(lo, hi)`` makes unbounded sets usable.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    box = None
    if bounding_box is not None:
        box = (np.atleast_1d(np.asarray(bounding_box[0], float)),
               np.atleast_1d(np.asarray(bounding_box[1], float)))
    elif fset.kind == BOX:
        box = (fset.lo, fset.hi)
    elif not fset.bounded:
        raise UnboundedSet(f"{fset.kind} is unbounded; supply bounding_box")

    if box is not None:
        lo, hi = box
        d = lo.size
        if d == 1:
            pts = np.linspace(lo[0], hi[0], resolution)[:, None]
        else:
            pts = lo + (hi - lo) * rng.random((resolution, d))
            if d <= 10:
                corners = np.array(np.meshgrid(*zip(lo, hi))).reshape(d, -1).T
                pts = np.vstack([pts, corners])
        if fset.kind != BOX and bounding_box is not None and fset.kind != REALS:
            pts = np.array([_project(fset, p) for p in pts])
        proj_box = box if fset.kind in (BOX, REALS) else None
    else:
        proj_box = None
        if fset.kind == SIMPLEX:
            d = _component_dim(component)
            pts = np.vstack([rng.dirichlet(np.ones(d), size=resolution), np.eye(d),
                             np.full((1, d), 1.0 / d)])
        else:
            d = _component_dim(component)
            lam = LiftMatrix(fset.radius, d).matrix()
            w = rng.dirichlet(np.ones(2 * d), size=resolution)
            pts = np.vstack([w @ lam.T, fset.radius * np.eye(d), -fset.radius * np.eye(d)])

    vals = _call_batch(component.value, pts)
    k = int(np.argmin(vals))
    best_x, best = pts[k].copy(), float(vals[k])

    x, fx = best_x, best
    step = 1.0
    for _ in range(refine_steps):
        g = np.asarray(component.grad(x), dtype=float)
        if not np.all(np.isfinite(g)) or np.max(np.abs(g)) == 0:
            break
        improved = False
        while step > 1e-14:
            cand = _project(fset, x - step * g, proj_box)
            fc = float(component.value(cand))
            if fc < fx - 1e-16:
                x, fx = cand, fc
                improved = True
                step *= 2.0
                break
            step *= 0.5
        if not improved:
            break
    return min(best, fx)


def _component_dim(component):
    if component.dim is None:
        raise DimensionMismatch("component has no declared dim; set Component.dim")
    return component.dim


@dataclass
class InterpolationReport:
    sigma_x_zero: bool
    xstar_in_all_component_minima: bool
    sigma_sq_constrained: float
    component_gaps: np.ndarray
    tol: float

    @property
    def agree(self) -> bool:
        return self.sigma_x_zero == self.xstar_in_all_component_minima

    @property
    def decidable(self) -> bool:
        """False when sigma^2_X <= tol but the largest gap lies in (tol, n*tol]."""
        n = len(self.component_gaps)
        g = float(np.max(self.component_gaps)) if n else 0.0
        return not (self.sigma_x_zero and self.tol < g <= n * self.tol)


def interpolation_check(problem: FiniteSumProblem, xstar=None, tol=1e-8) -> InterpolationReport:
    """Check both sides of: sigma^2_X = 0 iff x_* minimizes every f_i over X."""
    xstar, fstar = _xstar_value(problem, xstar)
    X = np.broadcast_to(xstar, (problem.n, problem.dim))
    vals = problem.component_values(np.arange(problem.n), X)
    infs = problem.constrained_infima()
    gaps = np.maximum(vals - infs, 0.0)
    sig = max(fstar - float(np.mean(infs)), 0.0)
    return InterpolationReport(
        sigma_x_zero=bool(sig <= tol),
        xstar_in_all_component_minima=bool(np.all(gaps <= tol)),
        sigma_sq_constrained=sig,
        component_gaps=gaps,
        tol=tol,
    )
