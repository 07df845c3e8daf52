"""Command-line runner: ``mirroropt run | verify | sigma``.

``run`` writes, per stepsize rule, a trajectory CSV ``<rule>.csv`` and a
``<rule>_bounds.csv`` with every applicable guarantee, plus
``manifest.json``. Numbers are written with 17 significant digits so
files are bit-stable for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from .config import (
    ExperimentConfig,
    build_mirror,
    build_problem,
    build_rules,
    build_x_init,
)
from .constraints import L1BALL, check_pair, l1_lift
from .exceptions import ConfigError, IncompleteSpec, MirrorOptError, MissingOptimum
from .stepsizes import MSPS, Constant, MirrorPolyak, MSPSMax, pl_constants

logger = logging.getLogger("mirroropt")

CSV_COLUMNS = (
    "t", "eta_mean", "f_gap_mean", "f_gap_se", "bpsi_mean", "bpsi_se", "bf_mean", "bf_se",
    "favg_gap_mean", "favg_gap_se", "fbest_gap_mean", "bf_avg_mean", "bf_avg_se",
)
_COLUMN_SOURCE = {
    "eta_mean": ("eta", "mean"),
    "f_gap_mean": ("f_gap", "mean"),
    "f_gap_se": ("f_gap", "se"),
    "bpsi_mean": ("bregman_psi", "mean"),
    "bpsi_se": ("bregman_psi", "se"),
    "bf_mean": ("bregman_f", "mean"),
    "bf_se": ("bregman_f", "se"),
    "favg_gap_mean": ("f_avg_gap", "mean"),
    "favg_gap_se": ("f_avg_gap", "se"),
    "fbest_gap_mean": ("f_best_gap", "mean"),
    "bf_avg_mean": ("bf_avg", "mean"),
    "bf_avg_se": ("bf_avg", "se"),
}

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_ERROR = 2
EXIT_STALE = 3


def code_digest() -> str:
    """Hash of the package sources, recorded in manifests."""
    h = hashlib.sha256(__version__.encode())
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def _fmt(v):
    return "%.17g" % v


def write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _file_sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _safe_name(label):
    return re.sub(r"[^A-Za-z0-9_.+-]+", "_", label).strip("_")


def trajectory_rows(t, mean, se):
    cols = []
    for name in CSV_COLUMNS[1:]:
        metric, which = _COLUMN_SOURCE[name]
        cols.append((mean if which == "mean" else se)[metric])
    return [[t[k]] + [c[k] for c in cols] for k in range(len(t))]


def applicable_bounds(problem, mirror, rule, x_init):
    """BoundSpecs whose hypotheses can be checked for this (problem, map, rule)."""
    from .problems import LinearModelProblem, Quad1DProblem, sigma_sq, sigma_sq_constrained

    xstar = problem.known_xstar
    if xstar is None:
        return {}
    B1 = float(mirror.bregman(xstar, x_init))
    out = {}
    try:
        L_rel = float(np.max(an.relative_smoothness(problem, mirror)))
        L_norm = float(np.max(problem.smoothness_wrt(mirror.norm)))
    except (IncompleteSpec, TypeError, ValueError):
        return {}
    try:
        mu = an.relative_strong_convexity(problem, mirror)
    except IncompleteSpec:
        mu = None
    s2 = sigma_sq(problem)
    if problem.has_exact_constrained_infima() or problem.fset.kind == "reals":
        s2x = sigma_sq_constrained(problem)
    else:
        s2x = None
    convex = isinstance(problem, LinearModelProblem) or (
        isinstance(problem, Quad1DProblem) and np.all(problem.a >= 0))
    mp = mirror.mu_psi
    if isinstance(rule, Constant) and s2x is not None:
        eta = rule.eta
        if eta <= 1.0 / L_rel:
            out[an.THM3] = an.BoundSpec(an.THM3, dict(eta=eta, B1=B1, sigma_sq_X=s2x, L=L_rel))
            if mu is not None and mu > 0:
                out[an.THM1] = an.BoundSpec(an.THM1, dict(eta=eta, mu=mu, B1=B1, sigma_sq_X=s2x))
        if convex and eta <= mp / (2 * L_norm) and np.isfinite(s2):
            out[an.COR8] = an.BoundSpec(an.COR8, dict(eta=eta, B1=B1, sigma_sq=s2, L=L_norm))
    if isinstance(rule, (MSPS, MSPSMax)) and convex and np.isfinite(s2):
        eta_b = rule.eta_b if isinstance(rule, MSPSMax) else np.inf
        base = dict(c=rule.c, mu_psi=mp, L=L_norm, eta_b=eta_b, B1=B1, sigma_sq=s2)
        if rule.c >= 0.5 and mu is not None and mu > 0:
            out[an.THM5] = an.BoundSpec(an.THM5, dict(base, mu=mu))
        if rule.c >= 1.0:
            out[an.THM7] = an.BoundSpec(an.THM7, base)
        if isinstance(rule, MSPSMax) and mirror.kind == "mahalanobis" and mu is not None and mu > 0:
            L_f = an.relative_smoothness_objective(problem, mirror)
            pc = pl_constants(rule.c, 1.0, L_norm, mu, eta_b)
            if pc.valid and L_f is not None:
                f1 = float(problem.value(x_init) - problem.known_fstar)
                out[an.PL] = an.BoundSpec(an.PL, dict(c=rule.c, L_max=L_norm, mu=mu, eta_b=eta_b,
                                                      L=L_f, f1_gap=f1, sigma_sq=s2))
    return out


def _prepare(cfg):
    problem = build_problem(cfg)
    set_name = cfg.geometry["set"]
    if problem.fset.kind != set_name:
        raise ConfigError(f"problem {cfg.problem['kind']!r} lives on {problem.fset.kind}, "
                          f"config asks for {set_name}")
    x_init = build_x_init(cfg, problem.dim, problem.fset)
    lift = None
    if problem.fset.kind == L1BALL and cfg.geometry["map"] == "negentropy":
        from .problems import lift_problem

        problem, lift = lift_problem(problem)
        x_init = l1_lift(lift.radius, x_init)
    mirror = build_mirror(cfg, problem.dim, problem)
    check_pair(mirror, problem.fset)
    return problem, mirror, x_init, lift


def run_experiment(cfg: ExperimentConfig, out_dir, quiet=False):
    """Run every configured rule and write CSVs and the manifest."""
    from .solver import RunConfig, monte_carlo, run_deterministic_md

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem, mirror, x_init, lift = _prepare(cfg)
    rules = build_rules(cfg, n=problem.n)
    run = cfg.run
    T = run["T"]
    R = run.get("replicates", 1)
    seed = run.get("seed", 0)
    every = run.get("record_every", 1)
    manifest = {
        "version": __version__,
        "code_digest": code_digest(),
        "config_digest": cfg.digest(),
        "config": cfg.to_text(),
        "seed": seed,
        "replicates": R,
        "problem": repr(problem),
        "lifted": lift is not None,
        "runs": {},
    }
    for label, rule in rules.items():
        rc = RunConfig(mirror, problem.fset, rule, T, x_init, seed=seed, record_every=every,
                       inf_source=run.get("inf_source", "unconstrained"),
                       per_step_metrics=run.get("per_step_metrics", True))
        entry = {"rule": rule.describe()}
        if isinstance(rule, MirrorPolyak):
            traj = run_deterministic_md(problem, rc)
            arrays = traj.arrays()
            t = arrays.pop("t")
            mean, se = arrays, {k: np.zeros_like(v) for k, v in arrays.items()}
            entry.update(diverged=traj.diverged, n_diverged=int(traj.diverged),
                         metrics=traj.metrics_flag)
        else:
            res = monte_carlo(problem, rc, R, on_divergence="flag")
            t, mean, se = res.t, res.mean, res.se
            entry.update(diverged=res.n_diverged > 0, n_diverged=res.n_diverged,
                         metrics=res.metrics_flag)
        base = _safe_name(label)
        csv_path = out_dir / f"{base}.csv"
        write_csv(csv_path, CSV_COLUMNS, trajectory_rows(t, mean, se))
        entry["csv"] = csv_path.name
        entry["csv_sha256"] = _file_sha(csv_path)
        specs = applicable_bounds(problem, mirror, rule, x_init)
        if specs:
            kinds = sorted(specs)
            cols = [an.bound_for_steps(specs[k], t) for k in kinds]
            bpath = out_dir / f"{base}_bounds.csv"
            write_csv(bpath, ["t"] + kinds, [[t[j]] + [c[j] for c in cols] for j in range(len(t))])
            entry["bounds_csv"] = bpath.name
            entry["bounds_sha256"] = _file_sha(bpath)
            entry["bounds"] = kinds
        manifest["runs"][label] = entry
        if not quiet:
            flag = " (diverged)" if entry["diverged"] else ""
            print(f"{label}: wrote {csv_path}{flag}")
    mpath = out_dir / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def cmd_run(config_path, out=None, seed=None, replicates=None, quiet=False) -> int:
    try:
        cfg = ExperimentConfig.load(config_path).with_overrides(seed, replicates)
        out_dir = out or cfg.run.get("out", "results")
        run_experiment(cfg, out_dir, quiet=quiet)
    except MirrorOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def manifest_is_current(config_path, out_dir):
    """(current, reason) for the manifest in ``out_dir`` against a config."""
    mpath = Path(out_dir) / "manifest.json"
    if not mpath.exists():
        return False, f"no manifest in {out_dir}"
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    cfg = ExperimentConfig.load(config_path).with_overrides(
        manifest.get("seed"), manifest.get("replicates"))
    if manifest.get("config_digest") != cfg.digest():
        return False, "config changed since the manifest was written"
    if manifest.get("code_digest") != code_digest():
        return False, "library code changed since the manifest was written"
    for label, entry in manifest.get("runs", {}).items():
        for key, sha in (("csv", "csv_sha256"), ("bounds_csv", "bounds_sha256")):
            if key in entry:
                path = Path(out_dir) / entry[key]
                if not path.exists() or _file_sha(path) != entry[sha]:
                    return False, f"{entry[key]} is missing or modified"
    return True, "ok"


def cmd_verify(suite="all", config=None, out=None, overrides=None, quiet=False) -> int:
    from .acceptance import SUITES, run_suite

    if suite not in SUITES:
        print(f"error: unknown suite {suite!r}; choose from {sorted(SUITES)}", file=sys.stderr)
        return EXIT_ERROR
    ov = {}
    try:
        if config is not None:
            ov.update(ExperimentConfig.load(config).verify)
            if out is not None:
                current, why = manifest_is_current(config, out)
                if not current:
                    print(f"error: stale manifest: {why}", file=sys.stderr)
                    return EXIT_STALE
    except MirrorOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    ov.update(overrides or {})
    results = run_suite(suite, overrides=ov, out_dir=out)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    if not quiet:
        print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sigma(config_path, quiet=False) -> int:
    from .problems import grad_sq_at_optimum, interpolation_check, sigma_sq, sigma_sq_constrained

    try:
        cfg = ExperimentConfig.load(config_path)
        problem, mirror, x_init, lift = _prepare(cfg)
        if problem.known_xstar is None:
            raise MissingOptimum(
                "this problem has no known minimizer; sigma^2 needs x_*. Use a problem with a "
                "closed-form solution (linear system, Markov chain, quad1d)")
        s2 = sigma_sq(problem)
        s2x = sigma_sq_constrained(problem)
        g2 = grad_sq_at_optimum(problem)
        rep = interpolation_check(problem)
    except MirrorOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"sigma^2 = {_fmt(s2)}")
    print(f"sigma^2_X = {_fmt(s2x)}")
    print(f"E||grad f_i(x_*)||_2^2 = {_fmt(g2)}")
    print(f"interpolation: sigma_X_zero={rep.sigma_x_zero} "
          f"xstar_minimizes_all={rep.xstar_in_all_component_minima} agree={rep.agree}")
    return EXIT_OK


def _parse_overrides(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            out[k.strip()] = v.strip()
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="mirroropt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--replicates", type=int)
    p_run.add_argument("--quiet", action="store_true")

    p_ver = sub.add_parser("verify", help="run acceptance suites")
    p_ver.add_argument("suite", nargs="?", default="all")
    p_ver.add_argument("--config")
    p_ver.add_argument("--out")
    p_ver.add_argument("--set", action="append", dest="overrides", metavar="KEY=VALUE")
    p_ver.add_argument("--quiet", action="store_true")

    p_sig = sub.add_parser("sigma", help="print neighborhood constants")
    p_sig.add_argument("--config", required=True)
    p_sig.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed, args.replicates, args.quiet)
    if args.command == "verify":
        try:
            ov = _parse_overrides(args.overrides)
        except argparse.ArgumentTypeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        return cmd_verify(args.suite, args.config, args.out, ov, args.quiet)
    return cmd_sigma(args.config, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
