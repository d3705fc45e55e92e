"""Experiment configuration: nested YAML sections mapped onto strict dataclasses.

Schema (every key optional unless marked)::

    experiment: simulate | kb | couple | girsanov | tails | lyapunov-audit | spde   (required)
    seeds: [0]                      # non-empty list of non-negative ints
    out: runs                       # output root
    workers: 1                      # process pool size for sweep points / seeds
    drift:                          # the drift under study
      kind: gaussian_kernel | pathdep_kernel | markov_linear | reduced_pde
      A: -1.0                       # markov_linear: scalar or square matrix
      b: 0.0                        # markov_linear: offset
      dim: null                     # markov_linear: dimension when A is scalar
      kernel_tail_tol: 1.0e-12      # gaussian_kernel
      finiteness_cap: 1.0e12        # pathdep_kernel
    drift2: {...}                   # girsanov only: reference drift (paths are generated under drift)
    past:   {kind: constant | zero | function, value: 0.0, window: 10.0, expr: null}
    past2:  {...}                   # couple only: second past (same keys)
    solver: {dt: 0.001, horizon: 10.0, method: euler | picard, blowup_radius: 1.0e12,
             picard_tol: 1.0e-10, picard_max_iter: 100}
    params: {...}                   # per-experiment keys, see PARAM_DEFAULTS
    spde:   {equation: gl | nse, nu: 1.0, n0: 2, cutoff: 64, n: 64, amplitude: 1.0,
             dt: 0.001, horizon: 20.0, burn_in: 2.0, experiment: sync | psi | factor | probe}
    tolerances: {name: value}       # overrides of acceptance thresholds
    sweep: {"spde.n0": [2, 3, 4]}   # dotted key -> list; one run per point

A list given directly for ``spde.n0`` or ``spde.nu`` is shorthand for a
sweep over that key.  For ``reduced_pde`` drifts the ``spde`` section
describes the underlying model.  ``function`` pasts evaluate ``expr`` as a
numpy expression in ``t`` (t <= 0).
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Any

import yaml

from ..errors import ConfigError

__all__ = [
    "DriftConfig",
    "PastConfig",
    "SolverSection",
    "SpdeSection",
    "ExperimentConfig",
    "EXPERIMENTS",
    "PARAM_DEFAULTS",
    "TOLERANCE_DEFAULTS",
    "load_config",
    "parse_config",
    "dump_config",
    "expand_sweep",
]

EXPERIMENTS = ("simulate", "kb", "couple", "girsanov", "tails", "lyapunov-audit", "spde")
DRIFT_KINDS = ("gaussian_kernel", "pathdep_kernel", "markov_linear", "reduced_pde")

PARAM_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {},
    "kb": {"burn_in": 2.0, "thin": 10, "rhat_threshold": 1.1},
    "couple": {"floor": 1e-14, "prefactor_window": 2.0},
    "girsanov": {"n_paths": 1000, "novikov_cap": 50.0},
    "tails": {"lags": [0.01, 0.02, 0.05], "z_grid": [0.5, 1.0, 1.5, 2.0], "burn_in": 0.0},
    "lyapunov-audit": {"n_histories": 10, "m": 400, "window": 10.0, "n_se": 3.0, "scale": 1.0},
    "spde": {"n_windows": 20, "n_pairs": 200, "lookbacks": [0.004, 0.008, 0.016, 0.032, 0.064, 0.128],
             "n_points": 20, "stride": 10},
}

TOLERANCE_DEFAULTS = {
    "sync_gap_ratio": 1e-8,
    "psi_tol": 1e-8,
    "factor_median": 1e-6,
}


def _from_mapping(cls, data, prefix: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(prefix, f"expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError(f"{prefix}.{k}", "unknown key")
    obj = cls(**data)
    obj.validate(prefix)
    return obj


def _num(v, key, positive=False, integer=False, allow_list=False):
    if allow_list and isinstance(v, list):
        if not v:
            raise ConfigError(key, "empty list")
        for x in v:
            _num(x, key, positive, integer)
        return
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if integer:
        ok = ok and float(v).is_integer()
    if not ok:
        raise ConfigError(key, f"expected a {'integer' if integer else 'number'}, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(key, f"must be positive, got {v!r}")


@dataclass
class DriftConfig:
    kind: str = "markov_linear"
    A: Any = -1.0
    b: Any = 0.0
    dim: int | None = None
    kernel_tail_tol: float = 1e-12
    finiteness_cap: float = 1e12

    def validate(self, p):
        if self.kind not in DRIFT_KINDS:
            raise ConfigError(f"{p}.kind", f"must be one of {DRIFT_KINDS}, got {self.kind!r}")
        _num(self.kernel_tail_tol, f"{p}.kernel_tail_tol", positive=True)
        _num(self.finiteness_cap, f"{p}.finiteness_cap", positive=True)
        if self.dim is not None:
            _num(self.dim, f"{p}.dim", positive=True, integer=True)


@dataclass
class PastConfig:
    kind: str = "constant"
    value: Any = 0.0
    window: float = 10.0
    expr: str | None = None

    def validate(self, p):
        if self.kind not in ("constant", "zero", "function"):
            raise ConfigError(f"{p}.kind", f"must be constant, zero or function, got {self.kind!r}")
        _num(self.window, f"{p}.window")
        if self.window < 0:
            raise ConfigError(f"{p}.window", "must be nonnegative")
        if self.kind == "function" and not isinstance(self.expr, str):
            raise ConfigError(f"{p}.expr", "a function past needs an expression in t")


@dataclass
class SolverSection:
    dt: float = 1e-3
    horizon: float = 10.0
    method: str = "euler"
    blowup_radius: float = 1e12
    picard_tol: float = 1e-10
    picard_max_iter: int = 100

    def validate(self, p):
        _num(self.dt, f"{p}.dt", positive=True)
        _num(self.horizon, f"{p}.horizon", positive=True)
        _num(self.blowup_radius, f"{p}.blowup_radius", positive=True)
        _num(self.picard_tol, f"{p}.picard_tol", positive=True)
        _num(self.picard_max_iter, f"{p}.picard_max_iter", positive=True, integer=True)
        if self.method not in ("euler", "picard"):
            raise ConfigError(f"{p}.method", f"must be euler or picard, got {self.method!r}")


@dataclass
class SpdeSection:
    equation: str = "gl"
    nu: Any = 1.0
    n0: Any = 2
    cutoff: int = 64
    n: int = 64
    amplitude: float = 1.0
    dt: float = 1e-3
    horizon: float = 20.0
    burn_in: float = 2.0
    experiment: str = "sync"

    def validate(self, p):
        if self.equation not in ("gl", "nse"):
            raise ConfigError(f"{p}.equation", f"must be gl or nse, got {self.equation!r}")
        if self.experiment not in ("sync", "psi", "factor", "probe"):
            raise ConfigError(f"{p}.experiment", f"must be sync, psi, factor or probe, got {self.experiment!r}")
        _num(self.nu, f"{p}.nu", positive=True, allow_list=True)
        _num(self.n0, f"{p}.n0", positive=True, integer=True, allow_list=True)
        for k in ("cutoff", "n"):
            _num(getattr(self, k), f"{p}.{k}", positive=True, integer=True)
        for k in ("amplitude", "dt", "horizon"):
            _num(getattr(self, k), f"{p}.{k}", positive=True)
        _num(self.burn_in, f"{p}.burn_in")


@dataclass
class ExperimentConfig:
    experiment: str
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs"
    workers: int = 1
    drift: DriftConfig = field(default_factory=DriftConfig)
    drift2: DriftConfig | None = None
    past: PastConfig = field(default_factory=PastConfig)
    past2: PastConfig | None = None
    solver: SolverSection = field(default_factory=SolverSection)
    params: dict = field(default_factory=dict)
    spde: SpdeSection = field(default_factory=SpdeSection)
    tolerances: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    # -----------------------------------------------------------------
    def param(self, key):
        return self.params.get(key, PARAM_DEFAULTS[self.experiment][key])

    def tol(self, key):
        return self.tolerances.get(key, TOLERANCE_DEFAULTS[key])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("drift2", "past2"):
            if d[k] is None:
                del d[k]
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        d = self.to_dict()
        for key, val in dotted.items():
            _set_dotted(d, key, val)
        return parse_config(d)


def _set_dotted(d: dict, key: str, val):
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        if not isinstance(cur.get(p), dict):
            raise ConfigError(key, "not a section")
        cur = cur[p]
    if parts[-1] not in cur:
        raise ConfigError(key, "unknown key")
    cur[parts[-1]] = val


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a plain mapping; the first offending key is named in the error."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    data = copy.deepcopy(data)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for k in data:
        if k not in known:
            raise ConfigError(k, "unknown key")
    if "experiment" not in data:
        raise ConfigError("experiment", "missing required key")
    exp = data["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {exp!r}")
    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "need a non-empty list of seeds")
    for s in seeds:
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            raise ConfigError("seeds", f"seeds must be non-negative integers, got {s!r}")
    if not isinstance(data.get("out", "runs"), str):
        raise ConfigError("out", "must be a string")
    w = data.get("workers", 1)
    if isinstance(w, bool) or not isinstance(w, int) or w < 1:
        raise ConfigError("workers", f"must be a positive integer, got {w!r}")
    kw = dict(experiment=exp, seeds=list(seeds), out=data.get("out", "runs"), workers=w)
    kw["drift"] = _from_mapping(DriftConfig, data.get("drift"), "drift")
    kw["past"] = _from_mapping(PastConfig, data.get("past"), "past")
    kw["solver"] = _from_mapping(SolverSection, data.get("solver"), "solver")
    kw["spde"] = _from_mapping(SpdeSection, data.get("spde"), "spde")
    if data.get("drift2") is not None:
        kw["drift2"] = _from_mapping(DriftConfig, data["drift2"], "drift2")
    if data.get("past2") is not None:
        kw["past2"] = _from_mapping(PastConfig, data["past2"], "past2")
    params = data.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("params", "expected a mapping")
    for k in params:
        if k not in PARAM_DEFAULTS[exp]:
            raise ConfigError(f"params.{k}", f"unknown key for experiment {exp!r}")
    kw["params"] = params
    tol = data.get("tolerances") or {}
    if not isinstance(tol, dict):
        raise ConfigError("tolerances", "expected a mapping")
    for k, v in tol.items():
        if k not in TOLERANCE_DEFAULTS:
            raise ConfigError(f"tolerances.{k}", "unknown tolerance")
        _num(v, f"tolerances.{k}", positive=True)
    kw["tolerances"] = tol
    sweep = data.get("sweep") or {}
    if not isinstance(sweep, dict):
        raise ConfigError("sweep", "expected a mapping of dotted key to list")
    for k, v in sweep.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"sweep.{k}", "sweep values must be a non-empty list")
    kw["sweep"] = sweep
    cfg = ExperimentConfig(**kw)
    base = cfg.to_dict()
    for k in sweep:
        try:
            _set_dotted(copy.deepcopy(base), k, None)
        except ConfigError:
            raise ConfigError(f"sweep.{k}", "does not name a configuration key") from None
    if exp == "girsanov" and cfg.drift2 is None:
        raise ConfigError("drift2", "girsanov needs a reference drift")
    if exp == "couple" and cfg.past2 is None:
        raise ConfigError("past2", "couple needs a second past")
    if exp not in ("spde",) and cfg.drift.kind == "reduced_pde" and cfg.spde.equation != "gl":
        raise ConfigError("spde.equation", "reduced_pde drifts are built on the gl model only")
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError("<file>", f"not valid YAML: {e}") from None
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def expand_sweep(cfg: ExperimentConfig) -> list[tuple[dict, ExperimentConfig]]:
    """Cartesian product of all swept keys; list shorthands in ``spde`` are included.

    Each point is ``(assignment, config)`` with the config free of sweeps.
    """
    sweep = dict(cfg.sweep)
    for k in ("nu", "n0"):
        v = getattr(cfg.spde, k)
        if isinstance(v, list):
            sweep[f"spde.{k}"] = v
    if not sweep:
        return [({}, cfg)]
    keys = sorted(sweep)
    points = []
    base = cfg.to_dict()
    base["sweep"] = {}
    for combo in itertools.product(*(sweep[k] for k in keys)):
        d = copy.deepcopy(base)
        assign = dict(zip(keys, combo))
        for k, v in assign.items():
            _set_dotted(d, k, v)
        points.append((assign, parse_config(d)))
    return points
