"""Feasible sets and closed-form mirror steps.

A mirror step solves

    argmin_{z in X}  <g, z> + (1/eta) B_psi(z; x)

and only the (map, set) pairs with a closed-form solution are supported:
projected gradient for the Euclidean map, the exponentiated-gradient update
for negative entropy on the simplex, the p-norm link update and the
preconditioned step on the whole space. Everything else raises
:class:`UnsupportedPair` instead of falling back to an inner solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, InfeasibleStart, UnsupportedPair
from .geometry import ENTROPY_FLOOR, EUCLIDEAN, MAHALANOBIS, NEG_ENTROPY, PNORM, MirrorMap

REALS = "reals"
NONNEG = "nonneg"
BOX = "box"
SIMPLEX = "simplex"
L1BALL = "l1ball"

SET_KINDS = (REALS, NONNEG, BOX, SIMPLEX, L1BALL)

SUPPORTED_PAIRS = {
    (EUCLIDEAN, REALS),
    (EUCLIDEAN, NONNEG),
    (EUCLIDEAN, BOX),
    (EUCLIDEAN, SIMPLEX),
    (NEG_ENTROPY, SIMPLEX),
    (PNORM, REALS),
    (MAHALANOBIS, REALS),
}

# exp() of more than this is replaced by a max-shifted evaluation
_EG_SHIFT_THRESHOLD = 30.0


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """Constraint set X.

    ``lo``/``hi`` are used by boxes and ``radius`` by the l1 ball. Use the
    classmethod constructors rather than the raw initializer.
    """

    kind: str
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in SET_KINDS:
            raise ValueError(f"unknown set kind {self.kind!r}")
        if self.kind == BOX:
            lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
            hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
            if lo.shape != hi.shape:
                raise ValueError("box bounds have different shapes")
            if np.any(lo > hi):
                raise ValueError("box needs lo <= hi componentwise")
            lo.setflags(write=False)
            hi.setflags(write=False)
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        if self.kind == L1BALL and not (self.radius is not None and self.radius > 0):
            raise ValueError("l1 ball needs a positive radius")

    @classmethod
    def reals(cls):
        return cls(REALS)

    @classmethod
    def nonneg(cls):
        return cls(NONNEG)

    @classmethod
    def box(cls, lo, hi):
        return cls(BOX, lo=lo, hi=hi)

    @classmethod
    def simplex(cls):
        return cls(SIMPLEX)

    @classmethod
    def l1ball(cls, radius):
        return cls(L1BALL, radius=float(radius))

    @property
    def bounded(self) -> bool:
        return self.kind in (BOX, SIMPLEX, L1BALL)

    def contains(self, x, tol=1e-9):
        """Membership test along the last axis (returns bool or bool array)."""
        x = np.asarray(x, dtype=float)
        finite = np.all(np.isfinite(x), axis=-1)
        if self.kind == REALS:
            return finite
        if self.kind == NONNEG:
            return finite & np.all(x >= -tol, axis=-1)
        if self.kind == BOX:
            return finite & np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)
        if self.kind == SIMPLEX:
            return (
                finite
                & np.all(x >= -tol, axis=-1)
                & (np.abs(np.sum(x, axis=-1) - 1.0) <= tol)
            )
        return finite & (np.sum(np.abs(x), axis=-1) <= self.radius + tol)

    def __eq__(self, other):
        if not isinstance(other, FeasibleSet):
            return NotImplemented
        if self.kind != other.kind:
            return False
        if self.kind == BOX:
            return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)
        return self.radius == other.radius

    def __hash__(self):
        return hash(self.kind)

    def __repr__(self):
        if self.kind == BOX:
            return f"FeasibleSet(box, lo={self.lo.tolist()}, hi={self.hi.tolist()})"
        if self.kind == L1BALL:
            return f"FeasibleSet(l1ball, radius={self.radius:g})"
        return f"FeasibleSet({self.kind})"


def project_simplex(v):
    """Euclidean projection onto the probability simplex, row-wise.

    Sort-and-threshold: with ``u`` sorted in decreasing order, the
    threshold is ``(sum_{j<=k} u_j - 1)/k`` for the largest ``k`` that keeps
    ``u_k`` above it.
    """
    v = np.asarray(v, dtype=float)
    flat = np.atleast_2d(v)
    d = flat.shape[-1]
    u = -np.sort(-flat, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ks = np.arange(1, d + 1)
    cond = u - css / ks > 0
    rho = d - 1 - np.argmax(cond[:, ::-1], axis=-1)
    theta = css[np.arange(flat.shape[0]), rho] / (rho + 1.0)
    out = np.maximum(flat - theta[:, None], 0.0)
    return out.reshape(v.shape)


def euclid_project(fset: FeasibleSet, x):
    """Euclidean projection of ``x`` onto ``fset`` (not available for l1 balls)."""
    x = np.asarray(x, dtype=float)
    if fset.kind == REALS:
        return x.copy()
    if fset.kind == NONNEG:
        return np.maximum(x, 0.0)
    if fset.kind == BOX:
        return np.clip(x, fset.lo, fset.hi)
    if fset.kind == SIMPLEX:
        return project_simplex(x)
    raise UnsupportedPair("Euclidean projection onto an l1 ball is not provided; lift to the simplex")


def check_pair(mirror: MirrorMap, fset: FeasibleSet):
    if (mirror.kind, fset.kind) not in SUPPORTED_PAIRS:
        raise UnsupportedPair(
            f"no closed-form mirror step for map {mirror.kind!r} on set {fset.kind!r}"
        )


def _eg_step(x, g, eta):
    step = -eta * g
    big = np.max(np.abs(step), axis=-1, keepdims=True) > _EG_SHIFT_THRESHOLD
    if np.any(big):
        shift = np.where(big, np.max(step, axis=-1, keepdims=True), 0.0)
        y = np.exp(np.log(x) + step - shift)
    else:
        y = x * np.exp(step)
    y = y / np.sum(y, axis=-1, keepdims=True)
    return np.maximum(y, ENTROPY_FLOOR)


def mirror_step(mirror: MirrorMap, fset: FeasibleSet, x, g, eta):
    """One mirror-descent step from ``x`` along gradient ``g`` with stepsize ``eta``.

    Parameters
    ----------
    mirror, fset
        A supported (map, set) pair.
    x, g : array_like, shape (d,) or (R, d)
        Current point(s) and gradient(s).
    eta : float or array_like of shape (R,)
        Stepsize(s); batched rows may use different stepsizes.

    Returns
    -------
    ndarray
        The minimizer of ``<g, z> + B_psi(z; x)/eta`` over the set.
    """
    check_pair(mirror, fset)
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1 and x.ndim == 2:
        eta = eta[:, None]
    if mirror.kind == NEG_ENTROPY:
        if np.any(~(x > 0)):
            raise DomainError("exponentiated gradient needs a strictly positive iterate")
        return _eg_step(x, g, eta)
    if mirror.kind == EUCLIDEAN:
        return euclid_project(fset, x - eta * g)
    if mirror.kind == PNORM:
        return mirror.inverse_grad(mirror.grad(x) - eta * g)
    return x - eta * mirror.inverse_grad(g)


@dataclass(frozen=True)
class LiftMatrix:
    """The d x 2d matrix Lambda whose columns are +lambda e_j, -lambda e_j.

    Points of the l1 ball of radius lambda are exactly ``Lambda w`` for w on
    the 2d-dimensional simplex, so exponentiated gradient can run on ``w``.
    """

    radius: float
    dim: int

    def matrix(self):
        lam = np.zeros((self.dim, 2 * self.dim))
        j = np.arange(self.dim)
        lam[j, 2 * j] = self.radius
        lam[j, 2 * j + 1] = -self.radius
        return lam


def l1_lift(radius: float, x0):
    """Return w on the 2d-simplex with ``Lambda w = x0``.

    Mass left over when ``||x0||_1 < radius`` is spread uniformly over all
    2d coordinates, which keeps w strictly positive.
    """
    x0 = np.asarray(x0, dtype=float)
    total = np.sum(np.abs(x0))
    if total > radius + 1e-9:
        raise InfeasibleStart(f"||x0||_1 = {total:g} exceeds the radius {radius:g}")
    d = x0.shape[-1]
    w = np.empty(2 * d)
    w[0::2] = np.maximum(x0, 0.0) / radius
    w[1::2] = np.maximum(-x0, 0.0) / radius
    residual = max(1.0 - total / radius, 0.0)
    w += residual / (2 * d)
    return w


def l1_unlift(lift: LiftMatrix, w):
    w = np.asarray(w, dtype=float)
    if not np.all(FeasibleSet.simplex().contains(w)):
        raise DomainError("lifted point is not on the simplex")
    return lift.radius * (w[..., 0::2] - w[..., 1::2])
