"""Stochastic and deterministic mirror descent loops with metric recording.

All runs go through one batched engine that advances ``R`` replicates in
lock-step; a single run is the ``R = 1`` case, so ``monte_carlo`` with one
replicate reproduces ``run_smd`` exactly.

Randomness: replicate ``r`` of a run seeded with ``s`` draws its component
indices from ``numpy.random.Generator(numpy.random.Philox(s + r))``. Philox
is a counter-based generator with a fixed, platform-independent stream, so
trajectories are reproducible bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .constraints import FeasibleSet, check_pair
from .exceptions import DomainError, MissingOptimum, NumericalDivergence
from .geometry import MirrorMap
from .problems import FiniteSumProblem
from .stepsizes import Constant, MirrorPolyak, StepContext, StepsizeRule

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e150
MAX_DIVERGED_FRACTION = 0.01
_DRAW_CHUNK = 512
_REPLICATE_BLOCK = 4096

METRICS = ("eta", "f_gap", "bregman_psi", "bregman_f", "f_avg_gap", "f_best_gap", "bf_avg")


@dataclass
class RunConfig:
    """Settings of one mirror-descent run.

    ``inf_source`` selects which per-component infimum the Polyak-type
    rules subtract: the unconstrained f_i^* (default) or the infimum over
    the feasible set.

    With ``per_step_metrics=False`` the full objective is only evaluated
    at recorded steps, so ``f_best_gap`` and ``bf_avg`` are taken over the
    recorded iterates. This is much cheaper for large n.
    """

    mirror: MirrorMap
    fset: FeasibleSet
    rule: StepsizeRule
    T: int
    x_init: np.ndarray
    seed: int = 0
    record_every: int = 1
    xstar_for_metrics: np.ndarray | None = None
    inf_source: str = "unconstrained"
    keep_iterates: bool = False
    per_step_metrics: bool = True

    def __post_init__(self):
        self.x_init = np.asarray(self.x_init, dtype=float)
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if self.inf_source not in ("unconstrained", "constrained"):
            raise ValueError("inf_source is 'unconstrained' or 'constrained'")

    def digest(self) -> str:
        m = self.mirror
        payload = {
            "map": m.kind,
            "p": m.p,
            "M": None if m.M is None else hashlib.sha256(m.M.tobytes()).hexdigest(),
            "set": repr(self.fset),
            "rule": self.rule.describe(),
            "T": self.T,
            "seed": self.seed,
            "x_init": self.x_init.tolist(),
            "record_every": self.record_every,
            "xstar": None if self.xstar_for_metrics is None else np.asarray(
                self.xstar_for_metrics, dtype=float).tolist(),
            "inf_source": self.inf_source,
            "per_step_metrics": self.per_step_metrics,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class IterateRecord:
    """Metrics after ``t`` steps, i.e. at x_{t+1} when iterates start at x_1.

    ``eta_t`` is the stepsize of the step that produced the iterate (NaN at
    t = 0). ``f_avg_gap`` uses the uniform average of the t + 1 iterates so
    far and ``bf_avg`` is the running mean of ``bregman_f`` over them.
    """

    t: int
    eta_t: float
    f_gap: float
    bregman_psi: float
    bregman_f: float
    f_avg_gap: float
    f_best_gap: float
    bf_avg: float


_RECORD_FIELDS = [f.name for f in fields(IterateRecord)]
_METRIC_TO_FIELD = {"eta": "eta_t"}


@dataclass
class Trajectory:
    records: list
    final_x: np.ndarray
    config_digest: str
    diverged: bool = False
    metrics_flag: str = "exact"
    iterates: np.ndarray | None = None
    indices: np.ndarray | None = None
    etas: np.ndarray | None = None
    grads: np.ndarray | None = None

    def arrays(self) -> dict:
        """Metric name -> array over the recorded steps (plus ``"t"``)."""
        out = {"t": np.array([r.t for r in self.records])}
        for m in METRICS:
            name = _METRIC_TO_FIELD.get(m, m)
            out[m] = np.array([getattr(r, name) for r in self.records], dtype=float)
        return out

    def digest(self) -> str:
        h = hashlib.sha256(self.config_digest.encode())
        for r in self.records:
            h.update(np.array([getattr(r, k) for k in _RECORD_FIELDS], dtype=float).tobytes())
        h.update(np.asarray(self.final_x, dtype=float).tobytes())
        return h.hexdigest()


@dataclass
class MonteCarloResult:
    """Per-step means and standard errors over replicates."""

    t: np.ndarray
    mean: dict
    se: dict
    replicates: int
    n_diverged: int
    config_digest: str
    final_x_mean: np.ndarray
    metrics_flag: str = "exact"
    samples: dict | None = field(default=None, repr=False)

    def arrays(self) -> dict:
        out = {"t": self.t}
        out.update(self.mean)
        return out


def _metric_reference(problem, cfg):
    xstar = cfg.xstar_for_metrics
    if xstar is None:
        xstar = problem.known_xstar
    if xstar is None:
        return None, None, "raw"
    xstar = np.asarray(xstar, dtype=float)
    flag = "exact"
    if getattr(problem, "xstar_exact", True) is False and cfg.xstar_for_metrics is None:
        flag = "approximate"
    return xstar, float(problem.value(xstar)), flag


def _record_steps(T, every):
    steps = list(range(0, T + 1, every))
    if steps[-1] != T:
        steps.append(T)
    return np.array(steps)


def _generators(seeds):
    """One Philox stream per replicate; indices are drawn in chunks."""
    return [np.random.Generator(np.random.Philox(int(s))) for s in seeds]


def _simulate(problem: FiniteSumProblem, cfg: RunConfig, seeds, deterministic=False):
    mirror, fset = cfg.mirror, cfg.fset
    check_pair(mirror, fset)
    R = len(seeds)
    d = problem.dim
    x0 = np.asarray(cfg.x_init, dtype=float)
    if x0.shape != (d,):
        raise DomainError(f"x_init has shape {x0.shape}, expected ({d},)")
    if not fset.contains(x0):
        raise DomainError("x_init is not feasible")
    if mirror.kind == "negentropy" and np.any(x0 <= 0):
        raise DomainError("x_init must be strictly positive for negative entropy")
    if cfg.keep_iterates and R != 1:
        raise ValueError("keep_iterates needs a single replicate")

    xstar, fstar, flag = _metric_reference(problem, cfg)
    if deterministic:
        if problem.known_fstar is None and fstar is None:
            raise MissingOptimum("deterministic Polyak descent needs f_* (known_fstar)")
        loss_inf_full = problem.known_fstar if problem.known_fstar is not None else fstar
    elif cfg.inf_source == "constrained":
        comp_inf = problem.constrained_infima(fset)
    else:
        comp_inf = problem.component_inf

    rule = cfg.rule.fresh(batch=R) if cfg.rule.stateful else cfg.rule
    mu_psi = mirror.mu_psi
    norm_tag = mirror.norm
    steps = _record_steps(cfg.T, cfg.record_every)
    K = len(steps)
    rec = {m: np.full((R, K), np.nan) for m in METRICS}

    X = np.tile(x0, (R, 1))
    sumX = np.zeros((R, d))
    f_best = np.full(R, np.inf)
    bf_sum = np.zeros(R)
    alive = np.ones(R, dtype=bool)
    diverge_step = np.full(R, -1)

    if cfg.keep_iterates:
        hist_x = np.empty((cfg.T + 1, d))
        hist_x[0] = x0
        hist_idx = np.empty(cfg.T, dtype=np.int64)
        hist_eta = np.empty(cfg.T)
        hist_g = np.empty((cfg.T, d))

    gens = None if deterministic else _generators(seeds)
    draw_buf = None
    eta = np.full(R, np.nan)
    k = 0
    n_seen = 0
    for s in range(cfg.T + 1):
        sumX += X
        recording = k < K and steps[k] == s
        if not (recording or cfg.per_step_metrics or deterministic):
            fx = None
        else:
            fx = problem.value(X)
        if fx is None:
            pass
        elif xstar is not None:
            gap = fx - fstar
            gfull = problem.grad(X)
            bf = fstar - fx - np.sum(gfull * (xstar - X), axis=-1)
        else:
            gap = fx
            bf = np.full(R, np.nan)
        if fx is not None:
            f_best = np.minimum(f_best, gap)
            bf_sum += bf
            n_seen += 1
        if recording:
            xbar = sumX / (s + 1)
            favg = problem.value(xbar)
            rec["eta"][:, k] = eta
            rec["f_gap"][:, k] = gap
            rec["bregman_f"][:, k] = bf
            rec["f_avg_gap"][:, k] = favg - fstar if xstar is not None else favg
            rec["f_best_gap"][:, k] = f_best
            rec["bf_avg"][:, k] = bf_sum / n_seen
            if xstar is not None:
                rec["bregman_psi"][:, k] = mirror.bregman(xstar, X)
            dead = ~alive
            if np.any(dead):
                for m in METRICS:
                    rec[m][dead, k] = np.nan
            k += 1
        if s == cfg.T:
            break

        if deterministic:
            vals = fx
            G = problem.grad(X)
            infs = np.full(R, loss_inf_full)
            idx = None
        else:
            j = s % _DRAW_CHUNK
            if j == 0:
                size = min(_DRAW_CHUNK, cfg.T - s)
                draw_buf = np.stack([g.integers(0, problem.n, size=size) for g in gens])
            idx = draw_buf[:, j]
            vals = problem.component_values(idx, X)
            G = problem.component_grads(idx, X)
            infs = comp_inf[idx]
        ctx = StepContext(vals, infs, G, mu_psi, norm_tag, t=s + 1)
        eta = np.broadcast_to(np.asarray(rule(ctx), dtype=float), (R,)).copy()
        Xn = _step_rows(mirror, fset, X, G, eta, alive)

        bad = alive & ~(np.all(np.isfinite(Xn), axis=1)
                        & (np.max(np.abs(np.where(np.isfinite(Xn), Xn, 0.0)), axis=1)
                           <= DIVERGENCE_THRESHOLD))
        if np.any(bad):
            diverge_step[bad] = s + 1
            alive &= ~bad
            Xn[bad] = X[bad]
        X = Xn
        if cfg.keep_iterates:
            hist_x[s + 1] = X[0]
            hist_idx[s] = -1 if idx is None else idx[0]
            hist_eta[s] = eta[0]
            hist_g[s] = G[0]
        if not np.any(alive):
            break

    out = {
        "steps": steps,
        "records": rec,
        "final_x": X,
        "alive": alive,
        "diverge_step": diverge_step,
        "flag": flag,
        "n_recorded": k,
    }
    if cfg.keep_iterates:
        out["history"] = (hist_x, hist_idx, hist_eta, hist_g)
    return out


def _step_rows(mirror, fset, X, G, eta, alive):
    from .constraints import mirror_step

    if np.all(alive):
        with np.errstate(over="ignore", invalid="ignore"):
            return mirror_step(mirror, fset, X, G, eta)
    Xn = X.copy()
    if np.any(alive):
        with np.errstate(over="ignore", invalid="ignore"):
            Xn[alive] = mirror_step(mirror, fset, X[alive], G[alive], eta[alive])
    return Xn


def _trajectory_from(sim, cfg, row=0):
    steps = sim["steps"]
    rec = sim["records"]
    n = sim["n_recorded"]
    records = []
    for k in range(n):
        vals = [rec[m][row, k] for m in METRICS]
        if not sim["alive"][row] and np.all(np.isnan(vals[1:])):
            break
        records.append(IterateRecord(int(steps[k]), *[float(v) for v in vals]))
    traj = Trajectory(records, sim["final_x"][row].copy(), cfg.digest(),
                      diverged=not bool(sim["alive"][row]), metrics_flag=sim["flag"])
    if "history" in sim:
        traj.iterates, traj.indices, traj.etas, traj.grads = sim["history"]
    return traj


def run_smd(problem: FiniteSumProblem, cfg: RunConfig) -> Trajectory:
    """Stochastic mirror descent with uniformly sampled components.

    Raises
    ------
    NumericalDivergence
        If an iterate becomes non-finite or exceeds 1e150 in magnitude;
        the partial trajectory is attached to the exception.
    """
    sim = _simulate(problem, cfg, [cfg.seed])
    traj = _trajectory_from(sim, cfg)
    if traj.diverged:
        raise NumericalDivergence(
            f"iterates diverged at step {int(sim['diverge_step'][0])}", trajectory=traj)
    return traj


def run_deterministic_md(problem: FiniteSumProblem, cfg: RunConfig) -> Trajectory:
    """Full-gradient mirror descent, by default with the mirror Polyak stepsize."""
    sim = _simulate(problem, cfg, [cfg.seed], deterministic=True)
    traj = _trajectory_from(sim, cfg)
    if traj.diverged:
        raise NumericalDivergence("deterministic run diverged", trajectory=traj)
    return traj


def monte_carlo(problem: FiniteSumProblem, cfg: RunConfig, replicates: int,
                keep_samples=False, on_divergence="raise") -> MonteCarloResult:
    """Average ``replicates`` independent runs seeded ``seed, seed+1, ...``.

    Standard errors use the sample standard deviation over replicates that
    did not diverge. More than 1% diverged replicates is an error unless
    ``on_divergence="flag"``, in which case the result is returned with
    ``n_diverged`` set (and NaN means if every replicate diverged).
    """
    if on_divergence not in ("raise", "flag"):
        raise ValueError("on_divergence is 'raise' or 'flag'")
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    seeds = cfg.seed + np.arange(replicates)
    blocks = []
    for start in range(0, replicates, _REPLICATE_BLOCK):
        blocks.append(_simulate(problem, cfg, seeds[start:start + _REPLICATE_BLOCK]))
    steps = blocks[0]["steps"]
    rec = {m: np.concatenate([b["records"][m] for b in blocks]) for m in METRICS}
    alive = np.concatenate([b["alive"] for b in blocks])
    final_x = np.concatenate([b["final_x"] for b in blocks])
    n_div = int(np.sum(~alive))
    if n_div > MAX_DIVERGED_FRACTION * replicates and on_divergence == "raise":
        raise NumericalDivergence(f"{n_div} of {replicates} replicates diverged")
    if n_div:
        logger.warning("%d of %d replicates diverged and are excluded", n_div, replicates)
    mean, se = {}, {}
    for m in METRICS:
        vals = rec[m][alive]
        with np.errstate(invalid="ignore"), _quiet_nan():
            mean[m] = np.nanmean(vals, axis=0) if len(vals) else np.full(len(steps), np.nan)
            if len(vals) > 1:
                cnt = np.sum(~np.isnan(vals), axis=0)
                # shifting by one sample keeps identical replicates at exactly zero spread
                shift = vals - _first_finite(vals)
                se[m] = np.nanstd(shift, axis=0, ddof=1) / np.sqrt(np.maximum(cnt, 1))
            else:
                se[m] = np.zeros(len(steps))
    digest = cfg.digest() + f":R={replicates}"
    return MonteCarloResult(
        t=steps, mean=mean, se=se, replicates=replicates, n_diverged=n_div,
        config_digest=hashlib.sha256(digest.encode()).hexdigest(),
        final_x_mean=final_x[alive].mean(axis=0) if np.any(alive) else final_x.mean(axis=0),
        metrics_flag=blocks[0]["flag"],
        samples=rec if keep_samples else None,
    )


def _first_finite(vals):
    ok = ~np.isnan(vals)
    first = np.argmax(ok, axis=0)
    return np.where(ok.any(axis=0), vals[first, np.arange(vals.shape[1])], 0.0)


class _quiet_nan:
    def __enter__(self):
        import warnings

        self._ctx = warnings.catch_warnings()
        self._ctx.__enter__()
        warnings.simplefilter("ignore", RuntimeWarning)

    def __exit__(self, *exc):
        return self._ctx.__exit__(*exc)


def reference_solve(problem: FiniteSumProblem, mirror: MirrorMap, x_init, iterations=20000,
                    eta=None):
    """Long full-gradient mirror descent run used as a surrogate minimizer.

    The default stepsize is mu_psi / L with L the largest declared
    component smoothness, which is safe for the averaged objective.
    """
    L = problem.smoothness_wrt(mirror.norm)
    if eta is None:
        if L is None:
            raise ValueError("no smoothness constant available; pass eta")
        eta = mirror.mu_psi / float(np.max(L))
    cfg = RunConfig(mirror, problem.fset, Constant(eta), iterations, x_init,
                    record_every=iterations)
    sim = _simulate(problem, cfg, [0], deterministic=True) if problem.known_fstar is not None \
        else _full_gradient_descent(problem, cfg)
    return sim["final_x"][0]


def _full_gradient_descent(problem, cfg):
    from .constraints import mirror_step

    x = np.asarray(cfg.x_init, dtype=float)[None, :]
    eta = cfg.rule.eta
    for _ in range(cfg.T):
        x = mirror_step(cfg.mirror, cfg.fset, x, problem.grad(x), eta)
    return {"final_x": x}
