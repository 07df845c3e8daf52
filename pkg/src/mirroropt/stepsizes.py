"""Stepsize rules: constant, mirror Polyak, mSPS, mSPS_max and smoothed mSPS_max.

The Polyak-family rules divide a loss gap by ``c * ||g||_*^2`` where the
dual norm is that of the mirror map's primal norm. All rules evaluate on
batches: ``StepContext`` fields may be arrays with one entry per replicate.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ZeroGradientAtNonOptimum
from .geometry import NormTag, dual_norm_sq

GRAD_EPS = 1e-300
GAP_EPS = 1e-12


@dataclass
class StepContext:
    """What a stepsize rule may look at when choosing eta_t.

    ``loss_value``/``loss_inf`` are f_{xi_t}(x_t) and f_{xi_t}^*;
    ``dual_norm_tag`` is the primal norm whose dual measures the gradient,
    the same convention as :func:`~mirroropt.geometry.dual_norm_sq`.
    ``grad_dual_sq`` can be supplied to skip recomputing ``||grad||_*^2``.
    """

    loss_value: np.ndarray | float
    loss_inf: np.ndarray | float
    grad: np.ndarray
    mu_psi: float = 1.0
    dual_norm_tag: NormTag = field(default_factory=NormTag.l2)
    t: int = 0
    grad_dual_sq: np.ndarray | float | None = None

    def dual_sq(self):
        if self.grad_dual_sq is None:
            self.grad_dual_sq = dual_norm_sq(self.dual_norm_tag, self.grad)
        return self.grad_dual_sq


class StepsizeRule:
    """Base class. Subclasses implement :meth:`__call__`."""

    polyak = False
    stateful = False

    def __call__(self, ctx: StepContext):
        raise NotImplementedError

    def fresh(self, batch=None):
        """Copy of the rule with per-run state reset (``batch`` rows of it)."""
        return copy.copy(self)

    def describe(self) -> str:
        return repr(self)


@dataclass
class Constant(StepsizeRule):
    eta: float

    def __call__(self, ctx):
        shape = np.shape(ctx.loss_value)
        return np.full(shape, float(self.eta)) if shape else float(self.eta)

    def describe(self):
        return f"constant(eta={self.eta:g})"


def _polyak_ratio(gap, gsq, numerator_scale, denom_scale):
    """numerator_scale * gap / (denom_scale * gsq) with the converged convention.

    Returns 0 where both the gap and the gradient vanish and raises when
    only the gradient does.
    """
    gap = np.asarray(gap, dtype=float)
    gsq = np.asarray(gsq, dtype=float)
    zero_grad = gsq <= GRAD_EPS
    bad = zero_grad & (gap > GAP_EPS)
    if np.any(bad):
        raise ZeroGradientAtNonOptimum(
            f"vanishing gradient with loss gap {float(np.max(gap[bad])):.3g}")
    safe = np.where(zero_grad, 1.0, gsq)
    eta = np.where(zero_grad, 0.0, numerator_scale * np.maximum(gap, 0.0) / (denom_scale * safe))
    return eta if eta.ndim else float(eta)


@dataclass
class MirrorPolyak(StepsizeRule):
    """Deterministic mirror Polyak step mu_psi (f(x_t) - f_*) / ||g_t||_*^2."""

    fstar: float | None = None
    polyak = True

    def __call__(self, ctx):
        fstar = ctx.loss_inf if self.fstar is None else self.fstar
        return _polyak_ratio(ctx.loss_value - fstar, ctx.dual_sq(), ctx.mu_psi, 1.0)

    def describe(self):
        return "mirror_polyak"


@dataclass
class MSPS(StepsizeRule):
    """Mirror stochastic Polyak stepsize mu_psi (f_i - f_i^*) / (c ||grad f_i||_*^2)."""

    c: float = 1.0
    polyak = True

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")

    def __call__(self, ctx):
        return _polyak_ratio(ctx.loss_value - ctx.loss_inf, ctx.dual_sq(), ctx.mu_psi, self.c)

    def describe(self):
        return f"msps(c={self.c:g})"


@dataclass
class MSPSMax(StepsizeRule):
    """mSPS clipped at ``eta_b``."""

    c: float = 1.0
    eta_b: float = 1.0
    polyak = True

    def __post_init__(self):
        if not (self.c > 0 and self.eta_b > 0):
            raise ValueError("c and eta_b must be positive")

    def __call__(self, ctx):
        raw = _polyak_ratio(ctx.loss_value - ctx.loss_inf, ctx.dual_sq(), ctx.mu_psi, self.c)
        out = np.minimum(raw, self.eta_b)
        return out if np.ndim(out) else float(out)

    def describe(self):
        return f"msps_max(c={self.c:g},eta_b={self.eta_b:g})"


@dataclass
class SmoothedMSPSMax(StepsizeRule):
    """mSPS_max with the moving bound eta_b^t = tau^(b/n) * eta_{t-1}.

    Holds the previous stepsize as state; use :meth:`fresh` for each run.
    ``bound_history`` records every bound used, for replay.
    """

    c: float = 1.0
    tau: float = 1.0
    batch_b: int = 1
    n: int = 1
    eta_init: float = 1.0
    polyak = True
    stateful = True

    def __post_init__(self):
        if not (0 < self.tau <= 1):
            raise ValueError("tau must lie in (0, 1]")
        self.prev = self.eta_init
        self.bound_history = []

    def fresh(self, batch=None):
        new = copy.copy(self)
        new.prev = self.eta_init if batch is None else np.full(batch, float(self.eta_init))
        new.bound_history = []
        return new

    def __call__(self, ctx):
        bound = self.tau ** (self.batch_b / self.n) * self.prev
        raw = _polyak_ratio(ctx.loss_value - ctx.loss_inf, ctx.dual_sq(), ctx.mu_psi, self.c)
        out = np.minimum(raw, bound)
        self.bound_history.append(np.copy(bound))
        self.prev = out
        return out if np.ndim(out) else float(out)

    def describe(self):
        return f"smoothed_msps_max(c={self.c:g},tau={self.tau:g},b={self.batch_b},n={self.n})"


def stepsize(rule: StepsizeRule, ctx: StepContext):
    return rule(ctx)


def msps_bounds(c, mu_psi, L, mu=None):
    """Lower/upper bounds on mSPS for an L-smooth (and mu-strongly convex) component."""
    lower = mu_psi / (2.0 * c * L)
    upper = np.inf if mu is None else mu_psi / (2.0 * c * mu)
    return lower, upper


def alpha(c, mu_psi, L, eta_b):
    """min{mu_psi / (2 c L), eta_b}."""
    return min(mu_psi / (2.0 * c * L), eta_b)


@dataclass
class PLConstants:
    alpha: float
    nu: float
    valid: bool
    c_ok: bool
    eta_b_ok: bool


def pl_constants(c, mu_psi, L_max, mu_pl, eta_b) -> PLConstants:
    """Contraction constants of mSPS_max for preconditioned SGD under PL.

    ``alpha = min{mu_psi/(2 c L_max), eta_b}`` and
    ``nu = eta_b (1/alpha - 2 mu + L_max / (2c))``. ``valid`` requires
    ``c > L_max/(4 mu)``, ``eta_b`` below the larger of the two admissible
    thresholds and ``0 < nu < 1``.
    """
    a = alpha(c, mu_psi, L_max, eta_b)
    rate_coef = 1.0 / a - 2.0 * mu_pl + L_max / (2.0 * c)
    nu = eta_b * rate_coef
    c_ok = c > L_max / (4.0 * mu_pl)
    thresh_a = 1.0 / rate_coef if rate_coef > 0 else np.inf
    thresh_b = mu_psi / (2.0 * c * L_max)
    eta_b_ok = eta_b < max(thresh_a, thresh_b)
    valid = bool(c_ok and eta_b_ok and 0.0 < nu < 1.0)
    return PLConstants(alpha=a, nu=nu, valid=valid, c_ok=bool(c_ok), eta_b_ok=bool(eta_b_ok))
