"""Mirror maps, Bregman divergences and primal/dual norms.

Every routine operates along the last axis, so a batch of points stored as
an ``(R, d)`` array is handled in one call. This is what lets the solver run
many Monte Carlo replicates in lock-step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import DomainError

EUCLIDEAN = "euclidean"
PNORM = "pnorm"
NEG_ENTROPY = "negentropy"
MAHALANOBIS = "mahalanobis"

MAP_KINDS = (EUCLIDEAN, PNORM, NEG_ENTROPY, MAHALANOBIS)

# multiplicative updates never produce exact zeros from a positive start
ENTROPY_FLOOR = 1e-300


def _as_spd(M):
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=1e-12, atol=1e-12):
        raise DomainError("matrix is not symmetric")
    try:
        factor = cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError("matrix is not positive definite") from exc
    M.setflags(write=False)
    return M, factor


def _solve(factor, z):
    """Apply M^{-1} along the last axis of ``z``."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return cho_solve(factor, z)
    return cho_solve(factor, z.T).T


@dataclass(frozen=True, eq=False)
class NormTag:
    """A norm on R^d, identified by kind and its parameter.

    ``kind`` is one of ``"l2"``, ``"lp"``, ``"l1"``, ``"linf"``,
    ``"mahalanobis"`` (``sqrt(x^T M x)``) and ``"mahalanobis_inv"``
    (``sqrt(x^T M^{-1} x)``).
    """

    kind: str
    p: float | None = None
    M: np.ndarray | None = None
    _factor: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("l2", "lp", "l1", "linf", "mahalanobis", "mahalanobis_inv"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "lp":
            if self.p is None or not self.p >= 1.0:
                raise ValueError("lp norm needs p >= 1")
        if self.kind in ("mahalanobis", "mahalanobis_inv"):
            if self.M is None:
                raise ValueError("mahalanobis norms need a matrix M")
            if self._factor is None:
                M, factor = _as_spd(self.M)
                object.__setattr__(self, "M", M)
                object.__setattr__(self, "_factor", factor)

    @classmethod
    def l2(cls):
        return cls("l2")

    @classmethod
    def lp(cls, p):
        if p == 2:
            return cls("l2")
        if p == 1:
            return cls("l1")
        if np.isinf(p):
            return cls("linf")
        return cls("lp", p=float(p))

    @classmethod
    def l1(cls):
        return cls("l1")

    @classmethod
    def linf(cls):
        return cls("linf")

    @classmethod
    def mahalanobis(cls, M):
        return cls("mahalanobis", M=M)

    def dual(self) -> NormTag:
        """Return the dual norm tag."""
        if self.kind == "l2":
            return self
        if self.kind == "l1":
            return NormTag("linf")
        if self.kind == "linf":
            return NormTag("l1")
        if self.kind == "lp":
            return NormTag.lp(conjugate_exponent(self.p))
        if self.kind == "mahalanobis":
            return NormTag("mahalanobis_inv", M=self.M, _factor=self._factor)
        return NormTag("mahalanobis", M=self.M, _factor=self._factor)

    def __eq__(self, other):
        if not isinstance(other, NormTag):
            return NotImplemented
        if self.kind != other.kind:
            return False
        if self.kind == "lp":
            return self.p == other.p
        if self.M is not None:
            return np.array_equal(self.M, other.M)
        return True

    def __hash__(self):
        return hash((self.kind, self.p))

    def __str__(self):
        if self.kind == "lp":
            return f"lp({self.p:g})"
        return self.kind


def conjugate_exponent(p: float) -> float:
    """Return q with 1/p + 1/q = 1."""
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def norm(tag: NormTag, x) -> np.ndarray | float:
    """Evaluate ``||x||`` under ``tag`` along the last axis."""
    x = np.asarray(x, dtype=float)
    k = tag.kind
    if k == "l2":
        return np.sqrt(np.sum(x * x, axis=-1))
    if k == "l1":
        return np.sum(np.abs(x), axis=-1)
    if k == "linf":
        return np.max(np.abs(x), axis=-1)
    if k == "lp":
        return np.linalg.norm(x, ord=tag.p, axis=-1)
    if k == "mahalanobis":
        return np.sqrt(np.maximum(np.sum(x * (x @ tag.M), axis=-1), 0.0))
    return np.sqrt(np.maximum(np.sum(x * _solve(tag._factor, x), axis=-1), 0.0))


def dual_norm_sq(tag: NormTag, g) -> np.ndarray | float:
    """Squared dual norm ``||g||_*^2`` where ``tag`` names the *primal* norm.

    >>> float(dual_norm_sq(NormTag.l1(), [3.0, -5.0, 1.0]))
    25.0
    """
    return norm(tag.dual(), g) ** 2


def _lp_link(x, p):
    """phi^p(x)_i = ||x||_p^{2-p} sign(x_i) |x_i|^{p-1}, with phi^p(0) = 0."""
    x = np.asarray(x, dtype=float)
    if p == 2:
        return x.copy()
    nrm = np.linalg.norm(x, ord=p, axis=-1, keepdims=True)
    safe = np.where(nrm > 0, nrm, 1.0)
    out = safe ** (2.0 - p) * np.sign(x) * np.abs(x) ** (p - 1.0)
    return np.where(nrm > 0, out, 0.0)


@dataclass(frozen=True, eq=False)
class MirrorMap:
    """Distance-generating function psi together with its gradient maps.

    Build instances with the constructors :meth:`euclidean`, :meth:`pnorm`,
    :meth:`neg_entropy` and :meth:`mahalanobis`. Instances are immutable
    and safe to share between runs.

    Attributes
    ----------
    kind : str
        One of ``euclidean``, ``pnorm``, ``negentropy``, ``mahalanobis``.
    dim : int
        Dimension d of the primal space.
    p : float or None
        Exponent of the p-norm map, in (1, 2].
    M : ndarray or None
        Positive-definite matrix of the Mahalanobis map.
    """

    kind: str
    dim: int
    p: float | None = None
    M: np.ndarray | None = None
    _factor: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ValueError(f"unknown mirror map {self.kind!r}")
        if int(self.dim) < 1:
            raise ValueError("dim must be positive")
        if self.kind == PNORM and not (self.p is not None and 1.0 < self.p <= 2.0):
            raise ValueError(f"p-norm map needs 1 < p <= 2, got {self.p}")
        if self.kind == MAHALANOBIS:
            M, factor = _as_spd(self.M)
            if M.shape[0] != self.dim:
                raise DomainError("M does not match dim")
            object.__setattr__(self, "M", M)
            object.__setattr__(self, "_factor", factor)

    @classmethod
    def euclidean(cls, dim):
        return cls(EUCLIDEAN, int(dim))

    @classmethod
    def pnorm(cls, p, dim):
        return cls(PNORM, int(dim), p=float(p))

    @classmethod
    def neg_entropy(cls, dim):
        return cls(NEG_ENTROPY, int(dim))

    @classmethod
    def mahalanobis(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(MAHALANOBIS, M.shape[0], M=M)

    @property
    def mu_psi(self) -> float:
        """Strong-convexity constant of psi w.r.t. :attr:`norm`."""
        if self.kind == PNORM:
            return self.p - 1.0
        return 1.0

    @property
    def q(self) -> float | None:
        return conjugate_exponent(self.p) if self.kind == PNORM else None

    @property
    def norm(self) -> NormTag:
        """Primal norm in which psi is ``mu_psi``-strongly convex."""
        if self.kind == EUCLIDEAN:
            return NormTag.l2()
        if self.kind == PNORM:
            return NormTag.lp(self.p)
        if self.kind == NEG_ENTROPY:
            return NormTag.l1()
        return NormTag("mahalanobis", M=self.M, _factor=self._factor)

    def _check_interior(self, y):
        if self.kind == NEG_ENTROPY and np.any(~(np.asarray(y) > 0)):
            raise DomainError("negative entropy needs strictly positive coordinates")

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == EUCLIDEAN:
            return 0.5 * np.sum(x * x, axis=-1)
        if self.kind == PNORM:
            return 0.5 * np.linalg.norm(x, ord=self.p, axis=-1) ** 2
        if self.kind == NEG_ENTROPY:
            if np.any(x < 0):
                raise DomainError("negative entropy is undefined for negative coordinates")
            return np.sum(_xlogx(x), axis=-1)
        return 0.5 * np.sum(x * (x @ self.M), axis=-1)

    def grad(self, x):
        """Gradient map ``grad psi(x)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == EUCLIDEAN:
            return x.copy()
        if self.kind == PNORM:
            return _lp_link(x, self.p)
        if self.kind == NEG_ENTROPY:
            self._check_interior(x)
            return 1.0 + np.log(x)
        return x @ self.M

    def inverse_grad(self, z):
        """Inverse gradient map ``(grad psi)^{-1}(z)``."""
        z = np.asarray(z, dtype=float)
        if self.kind == EUCLIDEAN:
            return z.copy()
        if self.kind == PNORM:
            return _lp_link(z, self.q)
        if self.kind == NEG_ENTROPY:
            return np.exp(z - 1.0)
        return _solve(self._factor, z)

    def bregman(self, x, y):
        """Bregman divergence ``B_psi(x; y)``.

        For the negative entropy this is the generalized KL divergence
        ``sum x log(x/y) - x + y``, which is the usual KL divergence when
        both points lie on the simplex.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == EUCLIDEAN:
            diff = x - y
            return 0.5 * np.sum(diff * diff, axis=-1)
        if self.kind == NEG_ENTROPY:
            self._check_interior(y)
            if np.any(x < 0):
                raise DomainError("negative entropy is undefined for negative coordinates")
            safe_x = np.where(x > 0, x, 1.0)
            terms = np.where(x > 0, x * np.log(safe_x / y), 0.0) - x + y
            return np.sum(terms, axis=-1)
        if self.kind == MAHALANOBIS:
            diff = x - y
            return 0.5 * np.sum(diff * (diff @ self.M), axis=-1)
        val = self.psi(x) - self.psi(y) - np.sum(self.grad(y) * (x - y), axis=-1)
        return val

    def __repr__(self):
        extra = f", p={self.p:g}" if self.kind == PNORM else ""
        return f"MirrorMap({self.kind}, dim={self.dim}{extra})"


def _xlogx(x):
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x * np.log(safe), 0.0)


def bregman(mirror: MirrorMap, x, y):
    """``B_psi(x; y) = psi(x) - psi(y) - <grad psi(y), x - y>``."""
    return mirror.bregman(x, y)


def grad_map(mirror: MirrorMap, x):
    return mirror.grad(x)


def inverse_grad_map(mirror: MirrorMap, z):
    return mirror.inverse_grad(z)
