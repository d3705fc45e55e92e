"""Experiment runner: builds objects from a config, runs them, writes outputs and a manifest.

Outputs go to ``<out>/<hash12>/`` where ``hash12`` is the first twelve hex
digits of the config hash; a sweep writes one subdirectory per point.
Every file's sha256 is recorded in ``manifest.json`` and one line per run
is appended to ``<out>/manifests.jsonl``.  Output files never contain wall
times, so equal configs and seeds give equal digests.
"""
from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..drift import GaussianKernelDrift, MarkovLinearDrift, PathDependentKernelDrift
from ..ergodics import coupling_experiment, girsanov_logdensity, increment_tail_check, krylov_bogoliubov
from ..errors import BlowupError, ConfigError, MemSDEError, PartialResultError
from ..lyapunov import audit_generator, gaussian_kernel_spec, pathdep_kernel_spec, quadratic_spec, random_histories
from ..pathspace import FuturePath, HistoryPath, concat, snap_index
from ..solver import SolverConfig, euler_maruyama, make_rng, sample_wiener, solve_cauchy
from ..spde import (
    GLModel,
    NSEModel,
    ReducedDrift,
    assumption_probe_dissipative,
    assumption_probe_lip,
    factorization_residual,
    gl_forcing,
    reconstruct_psi,
    simulate,
    sync_experiment,
)
from .config import ExperimentConfig, dump_config, expand_sweep
from .io import emit_csv, ensure_dir, file_digest, save_path, write_trajectory

__all__ = ["RunManifest", "TaskStatus", "run_experiment", "build_drift", "build_past", "build_model"]

try:
    from importlib.metadata import version as _pkg_version

    CODE_VERSION = _pkg_version("artifact")
except Exception:  # not installed
    CODE_VERSION = "0+unknown"


@dataclass
class TaskStatus:
    name: str
    status: str  # ok | failed | check_failed
    message: str = ""
    summary: dict = field(default_factory=dict)


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    experiment: str
    seeds: list
    run_dir: str
    started: float
    finished: float
    outputs: dict  # relative path -> sha256
    tasks: list  # TaskStatus as dicts
    points: list = field(default_factory=list)  # sweep assignments with their subdirectory

    @property
    def exit_code(self) -> int:
        st = {t["status"] for t in self.tasks}
        if "failed" in st:
            return 2
        if "check_failed" in st:
            return 3
        return 0

    def verify(self) -> bool:
        """True when every recorded digest matches the file on disk."""
        return all(file_digest(os.path.join(self.run_dir, p)) == d for p, d in self.outputs.items())

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# ---------------------------------------------------------------------------
# builders


def build_model(cfg: ExperimentConfig):
    s = cfg.spde
    if s.equation == "gl":
        if not 1 <= s.n0 <= s.cutoff:
            raise ConfigError("spde.n0", "need 1 <= n0 <= cutoff")
        return GLModel(float(s.nu), int(s.cutoff), gl_forcing(int(s.cutoff), int(s.n0), float(s.amplitude)))
    if not 1 < s.n0 <= s.n // 3:
        raise ConfigError("spde.n0", "need 1 < n0 <= n // 3")
    return NSEModel(float(s.nu), int(s.n), int(s.n0), float(s.amplitude))


def build_drift(dc, cfg: ExperimentConfig):
    if dc.kind == "gaussian_kernel":
        return GaussianKernelDrift(dc.kernel_tail_tol)
    if dc.kind == "pathdep_kernel":
        return PathDependentKernelDrift(dc.finiteness_cap)
    if dc.kind == "markov_linear":
        try:
            return MarkovLinearDrift(dc.A, dc.b, dc.dim)
        except (MemSDEError, ValueError) as e:
            raise ConfigError("drift.A", str(e)) from None
    return ReducedDrift(build_model(cfg))


def build_past(pc, dt: float, dim: int) -> HistoryPath:
    if pc.kind == "zero":
        return HistoryPath.constant(0.0, dt, pc.window, dim=dim)
    if pc.kind == "constant":
        v = np.atleast_1d(np.asarray(pc.value, dtype=float))
        if v.size not in (1, dim):
            raise ConfigError("past.value", f"need 1 or {dim} components, got {v.size}")
        return HistoryPath.constant(v, dt, pc.window, dim=dim)

    def f(t):
        env = {"t": t, "np": np, "exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt, "abs": np.abs, "where": np.where}
        val = eval(pc.expr, {"__builtins__": {}}, env)  # noqa: S307 - trusted local config
        return np.broadcast_to(np.asarray(val, dtype=float).reshape(len(t), -1), (len(t), dim))

    try:
        return HistoryPath.from_function(f, dt, pc.window)
    except Exception as e:
        raise ConfigError("past.expr", f"could not evaluate: {e}") from None


def _solver_cfg(cfg: ExperimentConfig) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(dt=s.dt, horizon=s.horizon, blowup_radius=s.blowup_radius,
                        picard_tol=s.picard_tol, picard_max_iter=int(s.picard_max_iter))


def _lyapunov_spec(a, dc):
    if dc.kind == "gaussian_kernel":
        return gaussian_kernel_spec(a)
    if dc.kind == "pathdep_kernel":
        return pathdep_kernel_spec(a)
    if dc.kind == "markov_linear":
        return quadratic_spec(a.dim)
    raise ConfigError("drift.kind", "no Lyapunov function is declared for reduced_pde drifts")


# ---------------------------------------------------------------------------
# experiments; each returns a list of TaskStatus and writes into ``d``


def _write_traj(d, name, past, samples, dt, seed, csv):
    fut = FuturePath(samples, dt, past.origin_time)
    p = concat(past, fut)
    save_path(os.path.join(d, name + ".msde"), p, seed)
    if csv:
        z = p.chronological()
        emit_csv(np.column_stack([p.times(), z]), os.path.join(d, name + ".csv"),
                 ["t"] + [f"x{j}" for j in range(z.shape[1])])


def _exp_simulate(cfg, d, csv):
    a = build_drift(cfg.drift, cfg)
    past = build_past(cfg.past, cfg.solver.dt, a.dim)
    scfg = _solver_cfg(cfg)
    tasks = []
    for s in cfg.seeds:
        name = f"traj_seed{s}"
        try:
            y = solve_cauchy(a, past, s, scfg, method=cfg.solver.method)
            _write_traj(d, name, past, y.samples, scfg.dt, s, csv)
            tasks.append(TaskStatus(name, "ok", summary={"n_steps": y.n - 1}))
        except BlowupError as e:
            part = getattr(e, "partial", None)
            if part is not None and len(part):
                _write_traj(d, name + "_partial", past, part, scfg.dt, s, csv)
            tasks.append(TaskStatus(name, "failed", str(e)))
    return tasks


def _exp_kb(cfg, d, csv):
    a = build_drift(cfg.drift, cfg)
    past = build_past(cfg.past, cfg.solver.dt, a.dim)
    status, msg = "ok", ""
    try:
        m = krylov_bogoliubov(a, past, cfg.solver.horizon, cfg.param("burn_in"), cfg.solver.dt, cfg.seeds,
                              int(cfg.param("thin")), cfg.solver.blowup_radius, cfg.param("rhat_threshold"))
    except PartialResultError as e:
        m, status, msg = e.partial, "failed", str(e)
    cols = {f"x{j}": m.samples[:, j] for j in range(m.dim)}
    cols["weight"] = m.weights
    emit_csv(cols, os.path.join(d, "occupation.csv"))
    rhat = m.diagnostics.get("rhat", [])
    emit_csv({"coord": np.arange(m.dim), "mean": m.mean() if m.size else np.full(m.dim, np.nan),
              "variance": m.variance() if m.size else np.full(m.dim, np.nan),
              "rhat": np.asarray(rhat, dtype=float) if len(rhat) else np.full(m.dim, np.nan)},
             os.path.join(d, "summary.csv"))
    summary = {"converged": bool(m.diagnostics.get("converged", False)), "n_samples": int(m.size)}
    return [TaskStatus("kb", status, msg, summary)]


def _exp_couple(cfg, d, csv):
    a = build_drift(cfg.drift, cfg)
    x1 = build_past(cfg.past, cfg.solver.dt, a.dim)
    x2 = build_past(cfg.past2, cfg.solver.dt, a.dim)
    tasks, rows = [], []
    for s in cfg.seeds:
        name = f"couple_seed{s}"
        try:
            r = coupling_experiment(a, x1, x2, s, cfg.solver.horizon, floor=cfg.param("floor"),
                                    prefactor_window=cfg.param("prefactor_window"),
                                    blowup_radius=cfg.solver.blowup_radius)
        except BlowupError as e:
            tasks.append(TaskStatus(name, "failed", str(e)))
            continue
        emit_csv({"t": r.times, "gap": r.gap, "integrated_gap_sq": r.integrated_gap_sq},
                 os.path.join(d, name + ".csv"))
        rows.append((s, r.fitted_rate, r.C, float(r.dominated)))
        tasks.append(TaskStatus(name, "ok", summary={"rate": r.fitted_rate, "C": r.C, "dominated": r.dominated}))
    if rows:
        emit_csv(np.array(rows), os.path.join(d, "summary.csv"), ["seed", "rate", "C", "dominated"])
    return tasks


def _exp_girsanov(cfg, d, csv):
    a1 = build_drift(cfg.drift, cfg)
    a2 = build_drift(cfg.drift2, cfg)
    if a1.dim != a2.dim:
        raise ConfigError("drift2", f"dimension {a2.dim} differs from drift dimension {a1.dim}")
    past = build_past(cfg.past, cfg.solver.dt, a1.dim)
    scfg = _solver_cfg(cfg)
    n_paths = int(cfg.param("n_paths"))
    tasks = []
    for s in cfg.seeds:
        name = f"girsanov_seed{s}"
        ld, nov, trunc, failed = [], [], [], 0
        for i in range(n_paths):
            w = sample_wiener(s, i, a1.dim, scfg.dt, scfg.n_steps)
            try:
                y = euler_maruyama(a1, past, w, scfg)
            except BlowupError:
                failed += 1
                continue
            rep = girsanov_logdensity(a1, a2, concat(past, y), w, cfg.param("novikov_cap"))
            ld.append(rep.log_density)
            nov.append(rep.novikov_stat)
            trunc.append(float(rep.truncated))
        emit_csv({"log_density": ld, "novikov_stat": nov, "truncated": trunc}, os.path.join(d, name + ".csv"))
        mean = float(np.mean(np.exp(ld))) if ld else math.nan
        st = "failed" if failed else "ok"
        tasks.append(TaskStatus(name, st, f"{failed} paths blew up" if failed else "",
                                {"mean_density": mean, "n_paths": len(ld)}))
    return tasks


def _exp_tails(cfg, d, csv):
    a = build_drift(cfg.drift, cfg)
    past = build_past(cfg.past, cfg.solver.dt, a.dim)
    scfg = _solver_cfg(cfg)
    k0 = snap_index(cfg.param("burn_in"), scfg.dt)
    tasks = []
    for s in cfg.seeds:
        name = f"tails_seed{s}"
        try:
            y = solve_cauchy(a, past, s, scfg, method=cfg.solver.method).samples
        except BlowupError as e:
            tasks.append(TaskStatus(name, "failed", str(e)))
            continue
        av = a.along(past, y)
        tab = increment_tail_check(y[k0:], cfg.param("lags"), cfg.param("z_grid"), scfg.dt, av[k0:])
        emit_csv({"lag": [r.lag for r in tab.rows], "z": [r.z for r in tab.rows],
                  "empirical_prob": [r.empirical_prob for r in tab.rows],
                  "unit_bound": [r.unit_bound for r in tab.rows],
                  "fitted_bound": [tab.bound(r) for r in tab.rows]}, os.path.join(d, name + ".csv"))
        tasks.append(TaskStatus(name, "ok" if tab.ok else "check_failed",
                                "" if tab.ok else f"C_fit {tab.C_fit:.4g} exceeds C_theory {tab.C_theory:.4g}",
                                {"C_fit": tab.C_fit, "C_theory": tab.C_theory}))
    return tasks


def _exp_audit(cfg, d, csv):
    a = build_drift(cfg.drift, cfg)
    if a.dim != 1 and cfg.drift.kind != "markov_linear":
        raise ConfigError("drift.kind", "audits need a one-dimensional drift")
    spec = _lyapunov_spec(a, cfg.drift)
    tasks = []
    for s in cfg.seeds:
        name = f"audit_seed{s}"
        corpus = random_histories(int(cfg.param("n_histories")), cfg.solver.dt, cfg.param("window"), s,
                                  cfg.param("scale"))
        if a.dim > 1:
            corpus = [HistoryPath(np.repeat(x.samples, a.dim, axis=1), x.dt) for x in corpus]
        try:
            rows = audit_generator(a, spec, corpus, int(cfg.param("m")), seed=s, n_se=cfg.param("n_se"))
        except MemSDEError as e:
            tasks.append(TaskStatus(name, "failed", str(e)))
            continue
        emit_csv({"V": [r.V for r in rows], "estimate": [r.estimate for r in rows],
                  "stderr": [r.stderr for r in rows], "bound": [r.bound for r in rows],
                  "ok": [float(r.ok) for r in rows]}, os.path.join(d, name + ".csv"))
        bad = sum(not r.ok for r in rows)
        tasks.append(TaskStatus(name, "check_failed" if bad else "ok",
                                f"{bad} of {len(rows)} histories violate the drift condition" if bad else "",
                                {"violations": bad}))
    return tasks


def _zero_state(model):
    if isinstance(model, NSEModel):
        return np.zeros((model.n, model.n // 2 + 1), dtype=complex)
    return np.zeros(model.size)


def _spde_run(model, cfg, seed, every=1):
    s = cfg.spde
    n = snap_index(s.horizon, s.dt)
    return simulate(model, _zero_state(model), s.dt, n, seed, stream_id=0, every=every,
                    burn_in=snap_index(s.burn_in, s.dt))


def _save_states(d, name, model, run, seed):
    coords = np.array([model.coords(u) for u in run.states])
    write_trajectory(os.path.join(d, name + ".msde"), coords, run.dt * run.every, 0.0, seed)
    return coords


def _exp_spde(cfg, d, csv):
    model = build_model(cfg)
    s = cfg.spde
    tasks = []
    for seed in cfg.seeds:
        name = f"{s.experiment}_seed{seed}"
        try:
            tasks.append(_SPDE[s.experiment](model, cfg, seed, d, name))
        except (BlowupError, FloatingPointError) as e:
            tasks.append(TaskStatus(name, "failed", str(e)))
    return tasks


def _spde_sync(model, cfg, seed, d, name):
    s = cfg.spde
    rng = make_rng(seed, 1)
    if isinstance(model, NSEModel):
        hb = model.random_field(rng, model.n // 3, 0.1)
    else:
        hb = np.where(model.mask_h, 0.1 * rng.standard_normal(model.size), 0.0)
    r = sync_experiment(model, s.dt, s.horizon, seed, _zero_state(model), hb,
                        n_windows=int(cfg.param("n_windows")))
    stride = max(1, int(cfg.param("stride")))
    emit_csv({"t": r.times[::stride], "gap": r.gap[::stride]}, os.path.join(d, name + ".csv"))
    ratio = float(r.gap[-1] / r.gap[0])
    ok = ratio < cfg.tol("sync_gap_ratio") and not r.diverged
    return TaskStatus(name, "ok" if ok else "check_failed", "" if ok else r.finding,
                      {"gap_ratio": ratio, "rate": r.fitted_rate, "diverged": r.diverged})


def _spde_psi(model, cfg, seed, d, name):
    run = _spde_run(model, cfg, seed)
    coords = _save_states(d, f"states_seed{seed}", model, run, seed)
    ell = coords[:, model.split.l_idx]
    hist = HistoryPath(ell[::-1], run.dt)
    tol = cfg.tol("psi_tol")
    r = reconstruct_psi(model, hist, psi_tol=tol)
    n_conv = snap_index(r.lookback, run.dt)
    rows = []
    n = 1
    while n <= min(2 * n_conv, hist.n - 1):
        rows.append((n * run.dt, reconstruct_psi(model, hist, lookback=n * run.dt).h))
        n *= 2
    lbs = [lb for lb, _ in rows]
    change = [math.nan] + [float(np.linalg.norm(b - a)) for (_, a), (_, b) in zip(rows[:-1], rows[1:])]
    emit_csv({"lookback": lbs, "change": change}, os.path.join(d, name + ".csv"))
    ok = r.converged
    return TaskStatus(name, "ok" if ok else "check_failed", "" if ok else "lookback doubling did not converge",
                      {"lookback": r.lookback, "delta": r.delta})


def _spde_factor(model, cfg, seed, d, name):
    run = _spde_run(model, cfg, seed)
    _save_states(d, f"states_seed{seed}", model, run, seed)
    n = run.states.shape[0]
    idx = np.unique(np.linspace(n // 2, n - 1, int(cfg.param("n_points"))).astype(int))
    lbs = list(cfg.param("lookbacks")) + [None]
    med = []
    for lb in lbs:
        lb_ok = lb if lb is None or snap_index(lb, run.dt) <= idx[0] else None
        if lb is not None and lb_ok is None:
            raise ConfigError("params.lookbacks", f"lookback {lb} exceeds the stored run")
        fr = factorization_residual(model, run.states, run.dt, lookback=lb, indices=idx, psi_tol=cfg.tol("psi_tol"))
        med.append(float(np.median(fr.residual)))
    emit_csv({"lookback": [math.inf if lb is None else lb for lb in lbs], "median_residual": med},
             os.path.join(d, name + ".csv"))
    ok = med[-1] < cfg.tol("factor_median")
    return TaskStatus(name, "ok" if ok else "check_failed", "" if ok else "factorization residual too large",
                      {"median_residual": med[-1]})


def _spde_probe(model, cfg, seed, d, name):
    if not isinstance(model, GLModel):
        raise ConfigError("spde.experiment", "assumption probes have default constants for gl only")
    stride = max(1, int(cfg.param("stride")))
    run = _spde_run(model, cfg, seed, every=stride)
    S = run.states
    rng = make_rng(seed, 2)
    rows = []
    for _ in range(int(cfg.param("n_pairs"))):
        i, j = rng.integers(S.shape[0], size=2)
        p1 = assumption_probe_dissipative(model, S[i], S[j])
        ell, h = model.parts(S[i])
        _, g = model.parts(S[j])
        p2 = assumption_probe_lip(model, ell, h, g)
        rows.append((p1.lhs, p1.rhs, float(p1.ok), p2.lhs, p2.rhs, float(p2.ok)))
    rows = np.array(rows)
    emit_csv(rows, os.path.join(d, name + ".csv"),
             ["diss_lhs", "diss_rhs", "diss_ok", "low_lhs", "low_rhs", "low_ok"])
    bad = int(np.sum(rows[:, 2] == 0) + np.sum(rows[:, 5] == 0))
    return TaskStatus(name, "check_failed" if bad else "ok", f"{bad} probe failures" if bad else "",
                      {"failures": bad})


_SPDE = {"sync": _spde_sync, "psi": _spde_psi, "factor": _spde_factor, "probe": _spde_probe}

_EXPERIMENTS = {
    "simulate": _exp_simulate,
    "kb": _exp_kb,
    "couple": _exp_couple,
    "girsanov": _exp_girsanov,
    "tails": _exp_tails,
    "lyapunov-audit": _exp_audit,
    "spde": _exp_spde,
}


def _run_point(args):
    cfg, d, csv = args
    ensure_dir(d)
    with open(os.path.join(d, "config.yaml"), "w") as f:
        f.write(dump_config(cfg))
    try:
        tasks = _EXPERIMENTS[cfg.experiment](cfg, d, csv)
    except ConfigError:
        raise
    except MemSDEError as e:
        tasks = [TaskStatus(cfg.experiment, "failed", f"{type(e).__name__}: {e}")]
    return [asdict(t) for t in tasks]


def _point_dirname(i: int, assign: dict) -> str:
    parts = [f"{k.split('.')[-1]}={v}" for k, v in sorted(assign.items())]
    return f"p{i:03d}_" + "_".join(parts)


def run_experiment(cfg: ExperimentConfig, out: str | None = None, csv: bool = False) -> RunManifest:
    """Execute ``cfg`` and return its manifest (also written to disk)."""
    started = time.time()
    root = out if out is not None else cfg.out
    h = cfg.config_hash()
    run_dir = ensure_dir(os.path.join(root, h[:12]))
    points = expand_sweep(cfg)
    jobs, meta = [], []
    for i, (assign, pc) in enumerate(points):
        d = run_dir if not assign else os.path.join(run_dir, _point_dirname(i, assign))
        jobs.append((pc, d, csv))
        meta.append({"assignment": assign, "dir": os.path.relpath(d, run_dir)})
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    tasks = []
    for m, res in zip(meta, results):
        for t in res:
            if m["assignment"]:
                t["name"] = f"{m['dir']}/{t['name']}"
            tasks.append(t)
    with open(os.path.join(run_dir, "config.yaml"), "w") as f:
        f.write(dump_config(cfg))
    outputs = {}
    for dirpath, _, files in os.walk(run_dir):
        for fn in sorted(files):
            if fn == "manifest.json":
                continue
            p = os.path.join(dirpath, fn)
            outputs[os.path.relpath(p, run_dir)] = file_digest(p)
    man = RunManifest(h, CODE_VERSION, cfg.experiment, list(cfg.seeds), run_dir, started, time.time(),
                      dict(sorted(outputs.items())), tasks, meta)
    with open(os.path.join(run_dir, "manifest.json"), "w") as f:
        f.write(json.dumps(asdict(man), indent=2, sort_keys=True, default=_json_default))
    with open(os.path.join(root, "manifests.jsonl"), "a") as f:
        f.write(json.dumps(asdict(man), sort_keys=True, default=_json_default) + "\n")
    return man


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)
