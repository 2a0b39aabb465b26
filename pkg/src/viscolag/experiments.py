"""Experiment configuration, run orchestration, sweeps and the oracle suite."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
from scipy import integrate

try:
    import tomllib as tomli
except ModuleNotFoundError:  # python < 3.11
    import tomli

from . import __version__
from .compressible import (CompressibleParams, CompressibleState, PressureLaw,
                           step_compressible)
from .diagnostics import (DiagnosticsRecord, deviation_norms, fit_decay_rate, i0h,
                          loglog_slope, make_record, summarize, write_csv,
                          write_json)
from .errors import ConfigError, OracleFailure, ViscoError
from .incompressible import (FlowParams, FlowState, SchemeConfig, choose_dt,
                             kappa_threshold, make_initial_data, pressure_solve, step)
from .io import atomic_write_text, write_checkpoint
from .kinematics import (build_pack, det3, det_expansion_residual, make_volume_preserving_eta,
                         piola_residual)
from .linear import (build_adjusted_initial_data, mode_roots, propagate,
                     solve_linear_compressible, solve_linear_incompressible)
from .spectral import Field, Grid, leray_project, random_field

EXPERIMENTS = ("run", "sweep", "compare-linear", "straighten", "drift", "oracle")


# ------------------------------------------------------------------- config
@dataclass
class GridSpec:
    n: int = 16
    dealias: str = "pad3/2"


@dataclass
class ParamSpec:
    rho: float = 1.0
    mu: float = 1.0
    kappa: float = 1.0
    lambda_: float = 1.0
    pressure_a: float = 1.0
    gamma: float = 2.0


@dataclass
class InitialSpec:
    eta_kind: str = "zero"          # zero | shear | composed-shears | random (compressible)
    eta_amplitude: float = 0.0
    eta_modes: Optional[list] = None
    u_amplitude: float = 0.0
    u_kmax: Optional[int] = 2
    u_decay: float = 4.0
    u_mean: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    u_solenoidal: bool = False      # Leray-project the noise before the A-projection
    seed: int = 0


@dataclass
class ConstantSpec:
    c1: float = 1.0
    c2: float = 1.0
    c4: float = 1.0
    c5: float = 1.0


@dataclass
class ExperimentConfig:
    model: str = "incompressible"
    experiment: str = "run"
    t_final: float = 1.0
    sample_interval: float = 0.1
    out_dir: str = "out"
    grid: GridSpec = field(default_factory=GridSpec)
    params: ParamSpec = field(default_factory=ParamSpec)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    initial: InitialSpec = field(default_factory=InitialSpec)
    constants: ConstantSpec = field(default_factory=ConstantSpec)
    kappas: List[float] = field(default_factory=list)
    parallel: int = 1
    checkpoint: bool = False
    piola_samples: bool = True
    fault: bool = False             # testing hook: makes the oracle suite fail

    def validate(self):
        if self.model not in ("incompressible", "compressible"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.t_final > 0:
            raise ConfigError("t_final must be positive")
        if not 0 < self.sample_interval <= self.t_final:
            raise ConfigError("sample_interval must lie in (0, t_final]")
        if self.experiment == "sweep" and not self.kappas:
            raise ConfigError("a sweep needs a nonempty kappa list")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")
        self.flow_params()
        return self

    # builders
    def grid_obj(self) -> Grid:
        try:
            return Grid(self.grid.n, self.grid.dealias)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def flow_params(self):
        p = self.params
        if self.model == "incompressible":
            return FlowParams(p.rho, p.mu, p.kappa)
        return CompressibleParams(p.rho, p.mu, p.lambda_, p.kappa,
                                  PressureLaw(p.pressure_a, p.gamma))

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    nested = {"grid": GridSpec, "params": ParamSpec, "scheme": SchemeConfig,
              "initial": InitialSpec, "constants": ConstantSpec}
    kw = {k: _build(cls, data.pop(k, None), k) for k, cls in nested.items()}
    sweep = data.pop("sweep", None)
    if sweep is not None:
        kw["kappas"] = list(sweep.get("kappas", []))
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(nested)
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        cfg = ExperimentConfig(**data, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def with_kappa(cfg: ExperimentConfig, kappa: float) -> ExperimentConfig:
    return dataclasses.replace(cfg, params=dataclasses.replace(cfg.params, kappa=kappa))


# ------------------------------------------------------------- initial data
def initial_data(cfg: ExperimentConfig):
    g = cfg.grid_obj()
    ini = cfg.initial
    noise = random_field(g, 1, ini.seed, ini.u_kmax, ini.u_decay, ini.u_amplitude)
    if ini.u_solenoidal:
        noise = leray_project(noise)
    mean = np.asarray(ini.u_mean, dtype=float).reshape(3, 1, 1, 1)
    u_spec = Field(g, noise.phys + mean)
    if cfg.model == "compressible":
        if ini.eta_kind == "random":
            eta0 = random_field(g, 1, ini.seed + 1, ini.u_kmax, ini.u_decay, ini.eta_amplitude)
        else:
            eta0 = make_volume_preserving_eta(g, ini.eta_kind, ini.eta_amplitude, ini.eta_modes)
        return eta0, u_spec
    if ini.eta_kind == "random":
        raise ConfigError("random eta is only available for the compressible model")
    return make_initial_data(g, ini.eta_kind, u_spec, ini.eta_amplitude, ini.eta_modes,
                             cfg.scheme.proj_tol, cfg.scheme.max_picard)


def initial_state(cfg: ExperimentConfig, eta0=None, u0=None):
    if eta0 is None:
        eta0, u0 = initial_data(cfg)
    if cfg.model == "compressible":
        return CompressibleState.initial(eta0, u0, cfg.flow_params())
    return FlowState.initial(eta0, u0, cfg.flow_params())


# ---------------------------------------------------------------------- run
@dataclass
class RunResult:
    records: List[DiagnosticsRecord]
    state: object
    eta0: Field
    u0: Field
    deviations: list = field(default_factory=list)     # (t, ud2, kappa_etad3, combined)
    wall: float = 0.0
    steps: int = 0


def _linear_reference(cfg, eta0, u0):
    """Closure t -> (eta1, u1) evaluating the closed-form linear solution."""
    if cfg.model == "compressible":
        prm = cfg.flow_params()
        return lambda t: solve_linear_compressible(eta0, u0, t, prm)
    prm = cfg.flow_params()
    eta1, u1, _, _ = build_adjusted_initial_data(eta0, u0, build_pack(eta0, unit_jacobian=True))
    return lambda t: solve_linear_incompressible(eta1, u1, t, prm, tol=1e-8)


def run_simulation(cfg: ExperimentConfig, compare_linear=False,
                   on_step: Optional[Callable] = None) -> RunResult:
    """Advance to t_final, recording diagnostics every sample_interval."""
    cfg.validate()
    eta0, u0 = initial_data(cfg)
    state = initial_state(cfg, eta0, u0)
    g = state.grid
    u0_avg = g.mean(u0.hat)
    varpi = g.mean(eta0.hat)
    stepper = step_compressible if cfg.model == "compressible" else step
    linear = _linear_reference(cfg, eta0, u0) if compare_linear else None
    kappa = cfg.params.kappa
    c = cfg.constants

    res = RunResult([], state, eta0, u0)

    def sample(st):
        res.records.append(make_record(st, u0_avg, varpi, c.c4, c.c5, kappa, cfg.piola_samples))
        if linear is not None:
            res.deviations.append((st.t,) + tuple(deviation_norms(st, linear(st.t), kappa)))

    t0 = time.perf_counter()
    sample(state)
    eps = 1e-9 * cfg.t_final
    next_sample = cfg.sample_interval
    while cfg.t_final - state.t > eps:
        dt = min(choose_dt(state, cfg.scheme), cfg.t_final - state.t)
        state = stepper(state, cfg.scheme, dt)
        res.steps += 1
        if on_step is not None:
            on_step(state)
        if state.t >= next_sample - eps:
            sample(state)
            while next_sample <= state.t + eps:
                next_sample += cfg.sample_interval
    res.state = state
    res.wall = time.perf_counter() - t0
    return res


def series(records, name):
    return np.array([getattr(r, name) for r in records], dtype=float)


def integrated_straightening(records):
    """||eta_bar(t)||_0^2 + int_0^t ||eta_bar||_0^2 (trapezoid over samples)."""
    t = series(records, "t")
    v = series(records, "etabar_l2") ** 2
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (v[1:] + v[:-1]))])
    return v + integral


# ---------------------------------------------------------------- commands
def _out(cfg) -> Path:
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_manifest(out: Path, cfg, files, checkpoints=(), timings=None, extra=None):
    files = [Path(f) for f in files]
    missing = [str(f) for f in list(files) + list(checkpoints) if not Path(f).exists()]
    if missing:
        raise RuntimeError(f"manifest references missing files: {missing}")
    man = {
        "config_hash": cfg.digest(),
        "code_version": __version__,
        "files": sorted(f.name for f in files),
        "checkpoints": sorted(Path(c).name for c in checkpoints),
        "timings": timings or {},
    }
    if extra:
        man.update(extra)
    path = out / "manifest.json"
    atomic_write_text(path, json.dumps(man, indent=2, sort_keys=True))
    return man


def _decay_fit_or_none(t, v):
    try:
        return fit_decay_rate(t, v)
    except ViscoError:
        return None


def cmd_run(cfg: ExperimentConfig, compare_linear=False, tag="diagnostics"):
    from .plotting import timeseries_svg

    out = _out(cfg)
    res = run_simulation(cfg, compare_linear=compare_linear)
    csv_path = out / f"{tag}.csv"
    write_csv(res.records, csv_path)
    t = series(res.records, "t")
    fits = {}
    fit = _decay_fit_or_none(t, series(res.records, "stab"))
    if fit is not None:
        fits["stab"] = fit
    files = [csv_path]
    if compare_linear and res.deviations:
        dev = np.array(res.deviations)
        dev_path = out / "deviation.csv"
        header = "t,ud_h2_sq,kappa_etad_h3_sq,combined"
        atomic_write_text(dev_path, header + "\n" + "\n".join(",".join(repr(float(x)) for x in row)
                                                         for row in dev) + "\n")
        files.append(dev_path)
        f2 = _decay_fit_or_none(dev[:, 0], dev[:, 3])
        if f2 is not None:
            fits["deviation"] = f2
    summary = summarize(res.records, fits)
    summary["i0h"] = i0h(res.u0, res.eta0, cfg.params.kappa)
    summary["kappa_threshold"] = kappa_threshold(summary["i0h"], cfg.constants.c1, cfg.constants.c2)
    summary["steps"] = res.steps
    summary["integrated_straightening"] = float(integrated_straightening(res.records)[-1])
    if res.deviations:
        summary["deviation_sup"] = float(np.max(np.array(res.deviations)[:, 3]))
    sum_path = out / "summary.json"
    write_json(summary, sum_path)
    files.append(sum_path)
    svg = out / f"{tag}.svg"
    timeseries_svg(svg, t, {"stab": series(res.records, "stab"), "E": series(res.records, "E"),
                            "drift": series(res.records, "drift")})
    files.append(svg)
    ckpts = write_checkpoint(out / "checkpoint", res.state, cfg.scheme) if cfg.checkpoint else []
    write_manifest(out, cfg, files, ckpts, {"run_seconds": res.wall})
    return summary


def _sweep_member(cfg: ExperimentConfig):
    res = run_simulation(cfg, compare_linear=True)
    dev = np.array(res.deviations) if res.deviations else np.zeros((1, 4))
    return {
        "kappa": cfg.params.kappa,
        "straightening": float(integrated_straightening(res.records)[-1]),
        "etabar_l2_final": float(res.records[-1].etabar_l2),
        "deviation_sup": float(dev[:, 3].max()),
        "stab_final": float(res.records[-1].stab),
        "steps": res.steps,
        "seconds": res.wall,
    }


def _workers(requested):
    cap = os.environ.get("VISCO_THREADS")
    n = requested
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def run_sweep(cfg: ExperimentConfig):
    cfg.validate()
    members = [with_kappa(cfg, k) for k in cfg.kappas]
    n = _workers(cfg.parallel)
    if n > 1 and len(members) > 1:
        with ProcessPoolExecutor(max_workers=min(n, len(members))) as pool:
            rows = list(pool.map(_sweep_member, members))
    else:
        rows = [_sweep_member(m) for m in members]
    slopes = {}
    ks = [r["kappa"] for r in rows]
    if len(set(ks)) > 1:
        for key in ("straightening", "deviation_sup"):
            vals = [r[key] for r in rows]
            if all(v > 0 for v in vals):
                slopes[key] = loglog_slope(ks, vals)
    return rows, slopes


def cmd_sweep(cfg: ExperimentConfig):
    from .plotting import loglog_svg

    out = _out(cfg)
    rows, slopes = run_sweep(cfg)
    cols = ["kappa", "straightening", "etabar_l2_final", "deviation_sup", "stab_final", "steps"]
    path = out / "sweep.csv"
    atomic_write_text(path, ",".join(cols) + "\n" + "\n".join(
        ",".join(repr(float(r[c])) for c in cols) for r in rows) + "\n")
    summ = out / "sweep.json"
    write_json({"schema": 1, "rows": rows, "loglog_slopes": slopes}, summ)
    svg = out / "sweep.svg"
    loglog_svg(svg, [r["kappa"] for r in rows],
               {k: [r[k] for r in rows] for k in ("straightening", "deviation_sup")})
    write_manifest(out, cfg, [path, summ, svg],
                   timings={"member_seconds": [r["seconds"] for r in rows]})
    return {"rows": rows, "loglog_slopes": slopes}


def cmd_straighten(cfg: ExperimentConfig):
    summary = cmd_run(cfg, tag="straighten")
    return {"integrated_straightening": summary["integrated_straightening"],
            "final": {k: summary["final"][k] for k in ("etabar_l2", "etabar_sup")}}


def cmd_drift(cfg: ExperimentConfig):
    out = _out(cfg)
    res = run_simulation(cfg)
    csv_path = out / "drift.csv"
    write_csv(res.records, csv_path)
    d = series(res.records, "drift")
    t = series(res.records, "t")
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    rep = {
        "initial": float(d[0]),
        "final": float(d[-1]),
        "relative_final": float(d[-1] / d[0]) if d[0] > 0 else float("nan"),
        "monotone_trailing": bool(np.all(np.diff(d[half]) <= 0)),
    }
    p = out / "drift.json"
    write_json(rep, p)
    write_manifest(out, cfg, [csv_path, p], timings={"run_seconds": res.wall})
    return rep


# ------------------------------------------------------------------ oracle
def oracle_checks(cfg: ExperimentConfig, n_random=5):
    """Identity and closed-form checks; returns a list of dicts with pass flags."""
    g = cfg.grid_obj()
    out = []

    def add(name, value, tol):
        ok = bool(np.isfinite(value) and value <= tol)
        if cfg.fault:
            ok = False
        out.append({"check": name, "value": float(value), "tol": tol, "pass": ok})

    worst_p, worst_d = 0.0, 0.0
    for s in range(n_random):
        eta = random_field(g, 1, seed=100 + s, amplitude=0.05)
        pk = build_pack(eta)
        worst_p = max(worst_p, piola_residual(pk))
        dr = det_expansion_residual(eta)
        fine = Grid(tuple(2 * v for v in g.n), "pad2x")
        m = g.up(g.grad(eta.hat), m=fine.n)
        jm1 = det3(m + np.eye(3).reshape(3, 3, 1, 1, 1)) - 1.0
        worst_d = max(worst_d, dr / math.sqrt(np.mean(jm1**2) * (2 * math.pi) ** 3))
    add("piola", worst_p, 1e-10)
    add("det_expansion", worst_d, 1e-10)

    eta = make_volume_preserving_eta(g, "shear", 0.05)
    pk = build_pack(eta, unit_jacobian=True)
    qstar = random_field(g, 0, seed=7, amplitude=1.0)
    rhs = Field(g, pk.lap_hat(qstar.hat), True)
    sol = pressure_solve(pk, rhs, 1e-12, 100)
    err = math.sqrt(g.norm_sq(sol.q.hat - qstar.hat) / g.norm_sq(qstar.hat))
    add("manufactured_pressure", err, 1e-9)

    s1, s2 = mode_roots(1.0, 1.0, 1.0, 1.0)
    root = complex(-0.5, math.sqrt(3) / 2)
    add("dispersion_roots", abs(s1 - root) + abs(s2 - root.conjugate()), 1e-12)

    # closed form against a tight ODE integration of one mode
    rho, mu, kap, s = 1.0, 1.0, 1.0, 2.0
    ode = integrate.solve_ivp(lambda t, y: [y[1], (-mu * s * y[1] - kap * s * y[0]) / rho],
                              (0.0, 1.0), [1.0, 0.3], method="DOP853", rtol=1e-13, atol=1e-14)
    e, u = propagate(np.array(1.0), np.array(0.3), rho, mu, kap, np.array(s), 1.0)
    add("modal_closed_form", abs(e - ode.y[0, -1]) + abs(u - ode.y[1, -1]), 1e-10)

    law = PressureLaw(1.0, 2.0)
    d = np.linspace(-0.4, 0.4, 9)
    gap = np.abs(law.remainder(d, 1.0, "adaptive") - law.remainder(d, 1.0)).max()
    add("pressure_remainder", float(gap), 1e-10)
    return out


def cmd_oracle(cfg: ExperimentConfig):
    checks = oracle_checks(cfg)
    report = {"schema": 1, "passed": all(c["pass"] for c in checks), "checks": checks}
    out = _out(cfg)
    p = out / "oracle.json"
    write_json(report, p)
    write_manifest(out, cfg, [p])
    if not report["passed"]:
        raise OracleFailure("oracle checks failed: " + ", ".join(c["check"] for c in checks if not c["pass"]))
    return report
