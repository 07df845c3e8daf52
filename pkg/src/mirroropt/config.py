"""Experiment configuration: an INI file with a fixed key schema.

Example::

    [problem]
    kind = markov
    states = 5
    seed = 0

    [geometry]
    map = negentropy
    set = simplex

    [run]
    T = 1000
    replicates = 100
    record_every = 10
    seed = 0

    [stepsize.eg]
    rule = constant
    eta = 1.0

A stepsize section may list several values for one parameter
(``eta = 1e-5, 1e-4, 1e-3``); it then expands into one rule per value.
Unknown sections or keys are errors, and ``to_text`` writes a file that
parses back to an equal config.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .constraints import FeasibleSet
from .exceptions import ConfigError
from .geometry import MirrorMap
from .stepsizes import MSPS, Constant, MirrorPolyak, MSPSMax, SmoothedMSPSMax

_PROBLEM_KEYS = {
    "kind": str,
    # markov
    "states": int,
    # linear_system
    "rows": int,
    "cols": int,
    "noise": float,
    # quad1d, as "a,b,c; a,b,c"
    "coeffs": str,
    # logistic
    "source": str,
    "path": str,
    "n": int,
    "d": int,
    "margin": float,
    "n_features": int,
    "rbf_bandwidth": float,
    "seed": int,
}

_GEOMETRY_KEYS = {
    "map": str,
    "p": float,
    "M": str,
    "set": str,
    "lo": float,
    "hi": float,
    "radius": float,
}

_RUN_KEYS = {
    "T": int,
    "replicates": int,
    "record_every": int,
    "seed": int,
    "x_init": str,
    "inf_source": str,
    "per_step_metrics": bool,
    "out": str,
}

_RULE_KEYS = {
    "rule": str,
    "eta": "floats",
    "c": "floats",
    "eta_b": "floats",
    "tau": "floats",
    "batch_b": int,
    "eta_init": float,
}

_VERIFY_KEYS = {
    "convex_c": float,
    "strong_c": float,
}

PROBLEM_KINDS = ("markov", "linear_system", "quad1d", "logistic")
MAP_NAMES = ("euclidean", "pnorm", "negentropy", "mahalanobis")
SET_NAMES = ("reals", "nonneg", "box", "simplex", "l1ball")
RULE_NAMES = ("constant", "mirror_polyak", "msps", "msps_max", "smoothed_msps_max")


def _parse_value(kind, raw, where):
    raw = raw.strip()
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            vals = tuple(float(v) for v in raw.split(",") if v.strip())
            if not vals:
                raise ValueError(raw)
            return vals
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def _read_section(parser, name, schema):
    out = {}
    if not parser.has_section(name):
        return out
    for key, raw in parser.items(name):
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        out[key] = _parse_value(schema[key], raw, f"[{name}] {key}")
    return out


@dataclass
class ExperimentConfig:
    problem: dict
    geometry: dict
    run: dict
    stepsizes: dict
    verify: dict = field(default_factory=dict)

    # -- text form ----------------------------------------------------------
    @classmethod
    def from_text(cls, text: str) -> ExperimentConfig:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        known = {"problem", "geometry", "run", "verify"}
        for sec in parser.sections():
            if sec not in known and not sec.startswith("stepsize."):
                raise ConfigError(f"unknown section [{sec}]")
        for sec in ("problem", "geometry", "run"):
            if not parser.has_section(sec):
                raise ConfigError(f"missing section [{sec}]")
        rules = {}
        for sec in parser.sections():
            if sec.startswith("stepsize."):
                name = sec.split(".", 1)[1]
                if not name:
                    raise ConfigError("stepsize section needs a name")
                rules[name] = _read_section(parser, sec, _RULE_KEYS)
        cfg = cls(
            problem=_read_section(parser, "problem", _PROBLEM_KEYS),
            geometry=_read_section(parser, "geometry", _GEOMETRY_KEYS),
            run=_read_section(parser, "run", _RUN_KEYS),
            stepsizes=rules,
            verify=_read_section(parser, "verify", _VERIFY_KEYS),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_text(self) -> str:
        lines = []

        def emit(name, values):
            lines.append(f"[{name}]")
            for k, v in values.items():
                lines.append(f"{k} = {_format_value(v)}")
            lines.append("")

        emit("problem", self.problem)
        emit("geometry", self.geometry)
        emit("run", self.run)
        for name, vals in self.stepsizes.items():
            emit(f"stepsize.{name}", vals)
        if self.verify:
            emit("verify", self.verify)
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    # -- checks -------------------------------------------------------------
    def validate(self):
        kind = self.problem.get("kind")
        if kind not in PROBLEM_KINDS:
            raise ConfigError(f"[problem] kind must be one of {PROBLEM_KINDS}, got {kind!r}")
        if self.geometry.get("map") not in MAP_NAMES:
            raise ConfigError(f"[geometry] map must be one of {MAP_NAMES}")
        if self.geometry.get("set") not in SET_NAMES:
            raise ConfigError(f"[geometry] set must be one of {SET_NAMES}")
        if "T" not in self.run:
            raise ConfigError("[run] T is required")
        if not self.stepsizes:
            raise ConfigError("at least one [stepsize.NAME] section is required")
        for name, vals in self.stepsizes.items():
            if vals.get("rule") not in RULE_NAMES:
                raise ConfigError(f"[stepsize.{name}] rule must be one of {RULE_NAMES}")
        # building the rules checks required and out-of-range parameters
        build_rules(self)
        src = self.run.get("inf_source", "unconstrained")
        if src not in ("unconstrained", "constrained"):
            raise ConfigError("[run] inf_source is 'unconstrained' or 'constrained'")

    def with_overrides(self, seed=None, replicates=None) -> ExperimentConfig:
        run = dict(self.run)
        if seed is not None:
            run["seed"] = int(seed)
        if replicates is not None:
            run["replicates"] = int(replicates)
        return ExperimentConfig(dict(self.problem), dict(self.geometry), run,
                                {k: dict(v) for k, v in self.stepsizes.items()}, dict(self.verify))


# -- builders -----------------------------------------------------------------
def _parse_coeffs(text):
    try:
        rows = [tuple(float(v) for v in chunk.split(",")) for chunk in text.split(";") if chunk.strip()]
    except ValueError:
        raise ConfigError(f"[problem] coeffs: cannot parse {text!r}") from None
    if not rows or any(len(r) != 3 for r in rows):
        raise ConfigError("[problem] coeffs needs 'a,b,c' triples separated by ';'")
    return rows


def build_set(cfg: ExperimentConfig, dim=None) -> FeasibleSet:
    g = cfg.geometry
    kind = g["set"]
    if kind == "box":
        if "lo" not in g or "hi" not in g:
            raise ConfigError("[geometry] box needs lo and hi")
        lo, hi = g["lo"], g["hi"]
        if dim is not None:
            lo, hi = np.full(dim, lo), np.full(dim, hi)
        return FeasibleSet.box(lo, hi)
    if kind == "l1ball":
        if "radius" not in g:
            raise ConfigError("[geometry] l1ball needs radius")
        return FeasibleSet.l1ball(g["radius"])
    return getattr(FeasibleSet, kind)()


def build_problem(cfg: ExperimentConfig):
    """Problem named by the ``[problem]`` section, on the configured set."""
    from . import problems as pr

    p = cfg.problem
    kind = p["kind"]
    seed = p.get("seed", 0)
    if kind == "markov":
        P = pr.random_stochastic_matrix(p.get("states", 5), seed=seed)
        return pr.markov_problem(P)
    if kind == "quad1d":
        return pr.quad1d_problem(_parse_coeffs(p.get("coeffs", "")), build_set(cfg))
    if kind == "linear_system":
        rows, cols = p.get("rows", 50), p.get("cols", 5)
        rng = np.random.Generator(np.random.Philox(seed))
        A = rng.standard_normal((rows, cols))
        b = A @ rng.standard_normal(cols) + p.get("noise", 0.0) * rng.standard_normal(rows)
        return pr.linear_system_problem(A, b, fset=build_set(cfg, cols))
    source = p.get("source", "synth")
    if source == "synth":
        data = pr.synth_margin_dataset(p.get("n", 1000), p.get("d", 20), p.get("margin", 0.05), seed)
    elif source == "libsvm":
        if "path" not in p:
            raise ConfigError("[problem] libsvm source needs path")
        data = pr.read_libsvm(pr.resolve_data_path(p["path"]), p.get("n_features"))
    else:
        raise ConfigError(f"[problem] unknown source {source!r}")
    if "rbf_bandwidth" in p:
        data = pr.rbf_features(data, p["rbf_bandwidth"])
    fset = build_set(cfg, data.d)
    return pr.logistic_problem(data, fset=fset)


def build_mirror(cfg: ExperimentConfig, dim, problem=None) -> MirrorMap:
    g = cfg.geometry
    kind = g["map"]
    if kind == "euclidean":
        return MirrorMap.euclidean(dim)
    if kind == "negentropy":
        return MirrorMap.neg_entropy(dim)
    if kind == "pnorm":
        if "p" not in g:
            raise ConfigError("[geometry] pnorm needs p")
        return MirrorMap.pnorm(g["p"], dim)
    spec = g.get("M", "identity")
    if spec == "identity":
        return MirrorMap.mahalanobis(np.eye(dim))
    if spec == "diag_hessian":
        if problem is None or not hasattr(problem, "hessian"):
            raise ConfigError("M = diag_hessian needs a least-squares problem")
        return MirrorMap.mahalanobis(np.diag(np.diag(problem.hessian())))
    try:
        rows = [[float(v) for v in r.split(",")] for r in spec.split(";")]
        return MirrorMap.mahalanobis(np.array(rows))
    except ValueError:
        raise ConfigError(f"[geometry] cannot parse M = {spec!r}") from None


def build_rules(cfg: ExperimentConfig, n=1):
    """Expand the stepsize sections into ``{name: StepsizeRule}``.

    Sweeps over several values of one parameter become ``name[key=value]``.
    """
    out = {}
    for name, vals in cfg.stepsizes.items():
        kind = vals["rule"]
        sweep_keys = [k for k, v in vals.items() if isinstance(v, tuple) and len(v) > 1]
        if len(sweep_keys) > 1:
            raise ConfigError(f"[stepsize.{name}] sweeps at most one parameter")
        grid = vals[sweep_keys[0]] if sweep_keys else (None,)
        for value in grid:
            params = {k: (v[0] if isinstance(v, tuple) else v) for k, v in vals.items() if k != "rule"}
            label = name
            if sweep_keys:
                params[sweep_keys[0]] = value
                label = f"{name}[{sweep_keys[0]}={value:g}]"
            out[label] = _make_rule(kind, params, name, n)
    return out


def _make_rule(kind, params, name, n):
    def need(key):
        if key not in params:
            raise ConfigError(f"[stepsize.{name}] rule {kind} needs {key}")
        return params[key]

    try:
        if kind == "constant":
            return Constant(need("eta"))
        if kind == "mirror_polyak":
            return MirrorPolyak()
        if kind == "msps":
            return MSPS(params.get("c", 1.0))
        if kind == "msps_max":
            return MSPSMax(params.get("c", 1.0), need("eta_b"))
        return SmoothedMSPSMax(params.get("c", 1.0), need("tau"), params.get("batch_b", 1), n,
                               params.get("eta_init", 1.0))
    except ValueError as exc:
        raise ConfigError(f"[stepsize.{name}] {exc}") from None


def build_x_init(cfg: ExperimentConfig, dim, fset):
    spec = cfg.run.get("x_init", "default")
    if spec == "default":
        spec = "uniform" if fset.kind == "simplex" else "zeros"
    if spec == "uniform":
        return np.full(dim, 1.0 / dim)
    if spec == "zeros":
        return np.zeros(dim)
    if spec == "ones":
        return np.ones(dim)
    try:
        x = np.array([float(v) for v in spec.split(",")])
    except ValueError:
        raise ConfigError(f"[run] cannot parse x_init = {spec!r}") from None
    if x.shape != (dim,):
        raise ConfigError(f"[run] x_init has {x.size} entries, expected {dim}")
    return x
