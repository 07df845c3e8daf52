"""Convergence bounds, their hypotheses, and empirical rate fits.

Bounds are stated in terms of the iteration counter ``t`` of the
guarantee. Trajectories are recorded by the number of steps taken ``s``,
so :func:`bound_for_steps` converts: last-iterate guarantees on
``x_{t+1}`` use ``t = s`` and averaged guarantees over ``x_1..x_t`` use
``t = s + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, IncompleteSpec, NonPositiveMetric
from .geometry import EUCLIDEAN, MAHALANOBIS, NEG_ENTROPY, MirrorMap
from .stepsizes import MSPS, Constant, MirrorPolyak, MSPSMax, alpha, pl_constants

THM1 = "Thm1RelStrong"
THM3 = "Thm3RelSmooth"
THM5 = "Thm5StrongMSPS"
THM7 = "Thm7ConvexMSPS"
COR8 = "Cor8ConstSmooth"
NONSMOOTH = "NonSmoothPolyak"
PL = "PLPrecond"

BOUND_KINDS = (THM1, THM3, THM5, THM7, COR8, NONSMOOTH, PL)

# metric each guarantee controls
THEOREM_METRIC = {
    THM1: "bregman_psi",
    THM3: "bf_avg",
    THM5: "bregman_psi",
    THM7: "f_avg_gap",
    COR8: "f_avg_gap",
    NONSMOOTH: "f_avg_gap",
    PL: "f_gap",
}

# guarantees on an average of x_1..x_t (the rest bound x_{t+1})
_AVERAGED = {THM3, THM7, COR8, NONSMOOTH}

_REQUIRED = {
    THM1: ("mu", "eta", "B1"),
    THM3: ("eta", "B1"),
    THM5: ("mu", "alpha", "B1"),
    THM7: ("alpha", "B1"),
    COR8: ("eta", "B1"),
    NONSMOOTH: ("G", "B1", "mu_psi"),
    PL: ("nu", "f1_gap", "L", "eta_b", "c"),
}


@dataclass
class BoundSpec:
    """A guarantee together with the constants it needs.

    Missing neighborhood terms (``sigma_sq``, ``sigma_sq_X``) default to
    zero. ``alpha`` and ``nu`` may be left out when the constants that
    determine them are present.
    """

    kind: str
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise ValueError(f"unknown bound kind {self.kind!r}")
        self.constants = dict(self.constants)
        k = self.constants
        if self.kind in (THM5, THM7) and "alpha" not in k:
            if all(name in k for name in ("c", "mu_psi", "L", "eta_b")):
                k["alpha"] = alpha(k["c"], k["mu_psi"], k["L"], k["eta_b"])
        if self.kind == PL and "nu" not in k:
            if all(name in k for name in ("c", "L_max", "mu", "eta_b")):
                pc = pl_constants(k["c"], k.get("mu_psi", 1.0), k["L_max"], k["mu"], k["eta_b"])
                k["nu"] = pc.nu
                k["alpha"] = pc.alpha

    @property
    def metric(self) -> str:
        return THEOREM_METRIC[self.kind]

    def require(self):
        missing = [name for name in _REQUIRED[self.kind] if self.constants.get(name) is None]
        if missing:
            raise IncompleteSpec(f"{self.kind} needs constants {missing}")


def _neighborhood(scale, var):
    # an infinite or zero step bound times a zero variance is zero
    if var == 0:
        return 0.0
    return scale * var


def bound_curve(spec: BoundSpec, t_values):
    """Right-hand side of the guarantee at each ``t``.

    >>> bound_curve(BoundSpec(THM3, {"eta": 1.0, "B1": 1.0}), [10])
    array([0.1])
    """
    spec.require()
    k = spec.constants
    t = np.asarray(t_values, dtype=float)
    B1 = k["B1"] if spec.kind != PL else None
    sx = float(k.get("sigma_sq_X", 0.0))
    s = float(k.get("sigma_sq", 0.0))
    if spec.kind == THM1:
        return (1 - k["mu"] * k["eta"]) ** t * B1 + _neighborhood(1 / k["mu"], sx)
    if spec.kind == THM3:
        return B1 / (k["eta"] * t) + sx
    if spec.kind == THM5:
        a = k["alpha"]
        return (1 - k["mu"] * a) ** t * B1 + _neighborhood(k.get("eta_b", np.inf) / (a * k["mu"]), s)
    if spec.kind == THM7:
        a = k["alpha"]
        return 2 * B1 / (a * t) + _neighborhood(2 * k.get("eta_b", np.inf) / a, s)
    if spec.kind == COR8:
        return 2 * B1 / (k["eta"] * t) + 2 * s
    if spec.kind == NONSMOOTH:
        return k["G"] * np.sqrt(2 * B1 / (k["mu_psi"] * t))
    nu = k["nu"]
    return nu ** t * k["f1_gap"] + _neighborhood(k["L"] * k["eta_b"] / (2 * (1 - nu) * k["c"]), s)


def theorem_t(kind, steps):
    """Map recorded step counts ``s`` to the guarantee's ``t``."""
    steps = np.asarray(steps)
    return steps + 1 if kind in _AVERAGED else steps


def bound_for_steps(spec: BoundSpec, steps):
    return bound_curve(spec, theorem_t(spec.kind, steps))


@dataclass
class DominationResult:
    holds: bool
    worst_margin: float
    worst_t: int
    mean: np.ndarray
    bound: np.ndarray
    se: np.ndarray


def check_domination(spec: BoundSpec, result, metric=None, n_se=3.0, atol=0.0,
                     steps_from=0) -> DominationResult:
    """Is mean(metric) <= bound + n_se * SE at every recorded step?

    ``result`` is a :class:`~mirroropt.solver.MonteCarloResult` or a
    :class:`~mirroropt.solver.Trajectory` (zero standard error).
    """
    metric = spec.metric if metric is None else metric
    arrays = result.arrays()
    steps = np.asarray(arrays["t"])
    mean = np.asarray(arrays[metric], dtype=float)
    se_all = getattr(result, "se", None)
    se = np.zeros_like(mean) if se_all is None else np.asarray(se_all[metric], dtype=float)
    keep = steps >= steps_from
    steps, mean, se = steps[keep], mean[keep], se[keep]
    bound = bound_for_steps(spec, steps)
    margin = bound + n_se * se + atol - mean
    j = int(np.nanargmin(margin))
    return DominationResult(bool(np.all(margin >= 0)), float(margin[j]), int(steps[j]),
                            mean, bound, se)


@dataclass
class Precondition:
    name: str
    holds: bool
    detail: str = ""


def sample_points(fset, count, rng, scale=1.0, center=None):
    """Random points of the feasible set (interior points for the simplex)."""
    from .constraints import BOX, L1BALL, NONNEG, REALS, SIMPLEX

    d = None
    if center is not None:
        d = np.asarray(center).shape[-1]
    if fset.kind == SIMPLEX:
        return rng.dirichlet(np.ones(d), size=count)
    if fset.kind == BOX:
        lo, hi = np.broadcast_arrays(fset.lo, fset.hi) if d is None else (
            np.broadcast_to(fset.lo, (d,)), np.broadcast_to(fset.hi, (d,)))
        return lo + (hi - lo) * rng.random((count, lo.shape[0]))
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    if fset.kind == REALS:
        return c + scale * rng.standard_normal((count, d))
    if fset.kind == NONNEG:
        return np.abs(c + scale * rng.standard_normal((count, d)))
    if fset.kind == L1BALL:
        w = rng.dirichlet(np.ones(2 * d), size=count)
        return fset.radius * (w[:, 0::2] - w[:, 1::2])
    raise DomainError(f"cannot sample from {fset!r}")


def relative_smoothness_check(problem, mirror: MirrorMap, L, samples=10000, seed=0,
                              scale=1.0, rtol=1e-9):
    """Falsification test of B_{f_i}(x; y) <= L B_psi(x; y) on random pairs.

    Passing does not prove relative smoothness; a failure disproves it.
    Returns ``(holds, worst_ratio)``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    center = np.zeros(problem.dim)
    X = sample_points(problem.fset, samples, rng, scale, center)
    Y = sample_points(problem.fset, samples, rng, scale, center)
    idx = rng.integers(0, problem.n, size=samples)
    bf = (problem.component_values(idx, X) - problem.component_values(idx, Y)
          - np.sum(problem.component_grads(idx, Y) * (X - Y), axis=-1))
    bpsi = mirror.bregman(X, Y)
    ok = bf <= L * bpsi * (1 + rtol) + 1e-12
    pos = bpsi > 0
    worst = float(np.max(bf[pos] / bpsi[pos])) if np.any(pos) else 0.0
    return bool(np.all(ok)), worst


def relative_smoothness(problem, mirror: MirrorMap):
    """Per-component relative smoothness constants L_i / mu_psi.

    A function that is L-smooth in a norm is (L / mu_psi)-smooth relative
    to any psi that is mu_psi-strongly convex in that norm.
    """
    L = problem.smoothness_wrt(mirror.norm)
    if L is None:
        raise IncompleteSpec(f"no smoothness constant known for norm {mirror.norm}")
    return np.asarray(L, dtype=float) / mirror.mu_psi


def _relative_spectrum(problem, mirror: MirrorMap):
    """Eigenvalues of the objective Hessian measured against psi (quadratics only)."""
    from .problems import LinearModelProblem, Quad1DProblem

    if isinstance(problem, Quad1DProblem):
        H = np.array([[problem.curvature]])
    elif isinstance(problem, LinearModelProblem) and problem.loss == "squared":
        H = problem.hessian()
    else:
        raise IncompleteSpec("relative curvature is only computed for quadratics")
    if mirror.kind == EUCLIDEAN:
        return np.linalg.eigvalsh(H)
    if mirror.kind == MAHALANOBIS:
        w, V = np.linalg.eigh(mirror.M)
        Mih = V @ np.diag(w ** -0.5) @ V.T
        return np.linalg.eigvalsh(Mih @ H @ Mih)
    raise IncompleteSpec(f"no closed form for map {mirror.kind!r}")


def relative_strong_convexity(problem, mirror: MirrorMap) -> float:
    """mu with B_f >= mu B_psi over the whole space, for quadratic objectives."""
    return float(_relative_spectrum(problem, mirror)[0])


def relative_smoothness_objective(problem, mirror: MirrorMap):
    """Smoothness of the averaged objective relative to psi (None if unknown)."""
    try:
        return float(_relative_spectrum(problem, mirror)[-1])
    except IncompleteSpec:
        return None


def comparator_bound(problem, mirror: MirrorMap, x_init, alpha_, eta_b, comparators,
                          t_values, f_ref=0.0):
    """Averaged-iterate bound when the minimizer is not attained.

    The convex mSPS_max argument holds with any comparator u in place of
    x_*: f(xbar_t) - f(u) <= 2 B_psi(u; x_1)/(alpha t) + 2 eta_b s(u)/alpha
    with s(u) = f(u) - mean_i f_i^*. Adding f(u) - f_ref and minimizing
    over the comparators bounds the gap to ``f_ref`` (e.g. inf f).
    """
    U = np.atleast_2d(np.asarray(comparators, dtype=float))
    t = np.asarray(t_values, dtype=float)
    fu = problem.value(U)
    spread = fu - float(np.mean(problem.component_inf))
    bu = mirror.bregman(U, np.asarray(x_init, dtype=float))
    per = (2 * bu[None, :] / (alpha_ * t[:, None])
           + 2 * eta_b * spread[None, :] / alpha_ + (fu - f_ref)[None, :])
    return np.min(per, axis=1)


def check_preconditions(spec: BoundSpec, problem=None, mirror=None, rule=None,
                        samples=10000, seed=0):
    """Machine-checkable hypotheses of the guarantee ``spec``.

    Returns a list of :class:`Precondition`. Sampling checks can only
    reject a claimed constant, never certify it.
    """
    k = spec.constants
    out = []
    try:
        spec.require()
        out.append(Precondition("constants", True))
    except IncompleteSpec as exc:
        out.append(Precondition("constants", False, str(exc)))

    def eta_of(r):
        if isinstance(r, Constant):
            return r.eta
        return k.get("eta")

    if spec.kind in (THM1, THM3):
        eta = eta_of(rule)
        L = k.get("L")
        if eta is None or L is None:
            out.append(Precondition("eta <= 1/L", False, "eta or L missing"))
        else:
            out.append(Precondition("eta <= 1/L", eta <= 1.0 / L + 1e-15, f"eta={eta:g}, 1/L={1/L:g}"))
        if rule is not None:
            out.append(Precondition("constant stepsize", isinstance(rule, Constant), rule.describe()))
        if spec.kind == THM1:
            mu = k.get("mu")
            out.append(Precondition("mu > 0", mu is not None and mu > 0, f"mu={mu}"))
    if spec.kind in (THM5, THM7):
        need = 0.5 if spec.kind == THM5 else 1.0
        c = rule.c if isinstance(rule, (MSPS, MSPSMax)) else k.get("c")
        out.append(Precondition(f"c >= {need:g}", c is not None and c >= need, f"c={c}"))
        if rule is not None:
            out.append(Precondition("mSPS-type rule", isinstance(rule, (MSPS, MSPSMax)), rule.describe()))
        if spec.kind == THM5:
            mu = k.get("mu")
            out.append(Precondition("mu > 0", mu is not None and mu > 0, f"mu={mu}"))
    if spec.kind == COR8:
        eta, L, mp = eta_of(rule), k.get("L"), k.get("mu_psi", 1.0)
        ok = eta is not None and L is not None and eta <= mp / (2 * L) + 1e-15
        out.append(Precondition("eta <= mu_psi/(2L)", ok, f"eta={eta}, L={L}"))
    if spec.kind == NONSMOOTH:
        if rule is not None:
            out.append(Precondition("mirror Polyak rule", isinstance(rule, MirrorPolyak), rule.describe()))
        if problem is not None:
            out.append(Precondition("f_* known", problem.known_fstar is not None))
    if spec.kind == PL:
        if all(k.get(n) is not None for n in ("c", "L_max", "mu", "eta_b")):
            pc = pl_constants(k["c"], k.get("mu_psi", 1.0), k["L_max"], k["mu"], k["eta_b"])
            out.append(Precondition("c > L_max/(4 mu)", pc.c_ok, f"c={k['c']:g}"))
            out.append(Precondition("eta_b threshold", pc.eta_b_ok, f"eta_b={k['eta_b']:g}"))
            out.append(Precondition("nu in (0,1)", 0 < pc.nu < 1, f"nu={pc.nu:.6g}"))
        else:
            out.append(Precondition("PL constants", False, "c, L_max, mu, eta_b required"))
        if mirror is not None:
            out.append(Precondition("Mahalanobis map", mirror.kind == MAHALANOBIS, mirror.kind))

    if mirror is not None:
        out.append(Precondition("mu_psi declared", mirror.mu_psi > 0, f"mu_psi={mirror.mu_psi:g}"))
        if problem is not None and spec.kind in (THM1, THM3) and k.get("L") is not None:
            if mirror.kind == NEG_ENTROPY and problem.fset.kind != "simplex":
                out.append(Precondition("relative smoothness (sampled)", False, "entropy off the simplex"))
            else:
                holds, worst = relative_smoothness_check(problem, mirror, k["L"], samples, seed)
                out.append(Precondition("relative smoothness (sampled)", holds,
                                        f"max B_f/B_psi={worst:.6g}, L={k['L']:g}"))
    return out


def preconditions_hold(results) -> bool:
    return all(r.holds for r in results)


def _window(arrays, metric, window):
    t = np.asarray(arrays["t"], dtype=float)
    m = np.asarray(arrays[metric], dtype=float)
    if window is not None:
        t0, t1 = window
        sel = (t >= t0) & (t <= t1)
        t, m = t[sel], m[sel]
    if len(t) < 2:
        raise ValueError("need at least two points in the window")
    if np.any(~(m > 0)):
        raise NonPositiveMetric(f"{metric} is not positive over the window")
    return t, m


def _as_arrays(traj):
    return traj if isinstance(traj, dict) else traj.arrays()


def _regress(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def fit_linear_rate(traj, metric, window=None):
    """Fit metric_t ~ C rho^t by least squares on log(metric).

    Returns ``{"decay_per_step": rho, "r2": r2}``.
    """
    t, m = _window(_as_arrays(traj), metric, window)
    slope, r2 = _regress(t, np.log(m))
    return {"decay_per_step": float(np.exp(slope)), "r2": r2}


def fit_sublinear_rate(traj, metric, window=None, t_offset=0):
    """Fit metric_t ~ C t^k by regressing log(metric) on log(t + t_offset).

    Use ``t_offset=1`` with trajectories indexed by steps taken, so the
    averaged guarantees line up with their own counter.
    """
    t, m = _window(_as_arrays(traj), metric, window)
    t = t + t_offset
    if np.any(t <= 0):
        raise ValueError("t must be positive for a power-law fit")
    slope, r2 = _regress(np.log(t), np.log(m))
    return {"exponent": slope, "r2": r2}


def iterations_to_eps(arrays, eps, metric="f_gap"):
    """First recorded step at which ``metric`` is at most ``eps`` (None if never)."""
    t = np.asarray(arrays["t"])
    m = np.asarray(arrays[metric], dtype=float)
    hit = np.nonzero(m <= eps)[0]
    return int(t[hit[0]]) if len(hit) else None


def dimension_scaling(build, dims, eps, configs, max_iters, replicates=20, seed=0,
                      metric="f_gap", record_every=1):
    """Iterations needed to reach ``eps`` by each method as d grows.

    Parameters
    ----------
    build : callable
        ``build(d) -> (problem, x_init)``.
    configs : dict
        Method name -> callable ``(problem, d) -> (mirror, rule)``. Use the
        names ``"EG"`` and ``"SPGD"`` to get a ratio column.
    max_iters : int
        Budget per run; methods that miss ``eps`` report ``None``.
    record_every : int
        Resolution of the reported iteration counts.

    Returns
    -------
    list of dict
        One row per dimension with ``iters_to_eps_<name>`` entries and,
        when both methods reached ``eps``, ``ratio = SPGD / EG``.
    """
    from .solver import RunConfig, monte_carlo

    rows = []
    for d in dims:
        problem, x_init = build(d)
        row = {"d": int(d)}
        for name, make in configs.items():
            mirror, rule = make(problem, d)
            cfg = RunConfig(mirror, problem.fset, rule, max_iters, x_init, seed=seed,
                            record_every=record_every, per_step_metrics=False)
            res = monte_carlo(problem, cfg, replicates)
            row[f"iters_to_eps_{name}"] = iterations_to_eps(res.arrays(), eps, metric)
        eg, sp = row.get("iters_to_eps_EG"), row.get("iters_to_eps_SPGD")
        row["ratio"] = sp / eg if eg and sp else None
        rows.append(row)
    return rows
