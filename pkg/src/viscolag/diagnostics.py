"""Observables: Sobolev norms of the state, energies, decay fits, straightening, drift."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import NonPositiveSamples, WindowTooSmall
from .kinematics import piola_residual
from .spectral import Field, Grid

MIN_FIT_SAMPLES = 10


# ----------------------------------------------------------------- weights
def _order2_weight(g: Grid):
    """sum over |alpha| = 2 of k^(2 alpha)."""
    return g.multi_index_weight(2) - g.multi_index_weight(1)


def _tensor_sq(g: Grid, fh, power):
    """||grad^power f||_0^2 with the full tensor norm, i.e. |k|^(2 power) weighting."""
    return float(g.norm_sq(fh * g.ksq ** (power / 2.0)))


def _h(g, fh, k):
    return g.norm_sq(fh, k)


# ------------------------------------------------------------------- scalars
def i0h(u0: Field, eta0: Field, kappa: float) -> float:
    """||u0||_2^2 + kappa ||grad eta0||_2^2."""
    g = u0.grid
    return _h(g, u0.hat, 2) + kappa * _h(g, g.grad(eta0.hat), 2)


def straightening(eta: Field):
    """(||eta_bar||_0, sup|eta_bar|) with eta_bar = eta - eta(y1, y2, 0)."""
    g = eta.grid
    phys = eta.phys
    bar = phys - phys[..., :, :, 0:1]
    l2 = math.sqrt(g.norm_sq(g.fft(bar)))
    sup = float(np.max(np.sqrt(np.sum(bar**2, axis=0)))) if bar.ndim == 4 else float(np.abs(bar).max())
    return l2, sup


def drift_residual(eta: Field, u0_avg, varpi, t: float) -> float:
    """||eta - u0_avg t - varpi||_3 for constant vectors u0_avg and varpi."""
    g = eta.grid
    h = eta.hat.copy()
    h[:, 0, 0, 0] -= np.asarray(u0_avg, dtype=float) * t + np.asarray(varpi, dtype=float)
    return math.sqrt(g.norm_sq(h, 3))


def volume_average(f: Field):
    return f.grid.mean(f.hat)


@dataclass(frozen=True)
class DecayFit:
    t_a: float
    t_b: float
    rate: float
    intercept: float
    r2: float
    samples: int = 0


def fit_decay_rate(t: Sequence[float], v: Sequence[float], window=None) -> DecayFit:
    """Least-squares line through (t, ln v); rate = -slope.

    The default window is the last half of the series' time span.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    ta, tb = window
    if not ta < tb:
        raise WindowTooSmall(f"empty window [{ta}, {tb}]")
    sel = (t >= ta) & (t <= tb)
    if sel.sum() < MIN_FIT_SAMPLES:
        raise WindowTooSmall(f"{int(sel.sum())} samples in window, need {MIN_FIT_SAMPLES}")
    if np.any(v[sel] <= 0):
        raise NonPositiveSamples("decay fit needs strictly positive samples")
    res = stats.linregress(t[sel], np.log(v[sel]))
    r2 = min(1.0, max(0.0, float(res.rvalue) ** 2))
    return DecayFit(float(ta), float(tb), float(-res.slope), float(res.intercept), r2,
                    int(sel.sum()))


def loglog_slope(x, y) -> float:
    res = stats.linregress(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)))
    return float(res.slope)


# ------------------------------------------------------------- functionals
class Energies(NamedTuple):
    E: float
    D: float
    E1: float
    E2: float


def _pack(state):
    hist = getattr(state, "_hist", None)
    if hist is not None:
        return hist.pack
    from .kinematics import build_pack
    return build_pack(state.eta, unit_jacobian=not hasattr(state.params, "rho_bar"))


def energy_functionals(state, c4: float = 1.0, c5: float = 1.0) -> Energies:
    """(E, D, E1, E2) for an incompressible state, (energy, dissipation, nan, E2P) else."""
    if hasattr(state.params, "rho_bar"):
        return compressible_functionals(state, c4, c5)
    g = state.grid
    p = state.params
    eh, uh = state.eta.hat, state.u.hat
    pack = _pack(state)
    basic = p.rho * g.norm_sq(uh) + p.kappa * g.norm_sq(g.grad(eh))
    E = 0.5 * basic
    D = p.mu * g.norm_sq(pack.grad_hat(uh))
    d3eta = _tensor_sq(g, eh, 3)
    cross = g.inner(eh * _order2_weight(g), uh)
    E1 = c4 * (p.rho * _tensor_sq(g, uh, 2) + p.kappa * d3eta) + p.rho * cross + 0.5 * p.mu * d3eta
    return Energies(E, D, E1, E1 + c5 * basic)


def compressible_functionals(state, c4p: float = 1.0, c5p: float = 1.0) -> Energies:
    from .compressible import compressible_dissipation, compressible_energy, state_pack
    g = state.grid
    p = state.params
    pack = state_pack(state)
    eh, uh = state.eta.hat, state.u.hat
    energy = compressible_energy(state, pack)
    diss = compressible_dissipation(state, pack)
    d3eta = _tensor_sq(g, eh, 3)
    d2div = _tensor_sq(g, g.div(eh), 2)
    cross = g.inner(eh * _order2_weight(g), uh)
    e2p = (c4p * (p.rho_bar * _tensor_sq(g, uh, 2) + p.sound * d2div + p.kappa * d3eta)
           + p.rho_bar * cross + 0.5 * p.mu * d3eta + 0.5 * p.lambda_ * d2div + c5p * energy)
    return Energies(energy, diss, float("nan"), e2p)


def deviation_norms(state, linear_state, kappa: float):
    """(||u^d||_2^2, kappa ||eta^d||_3^2, their sum)."""
    eta1, u1 = (linear_state.eta, linear_state.u) if hasattr(linear_state, "eta") else linear_state
    g = state.eta.grid
    a = g.norm_sq(state.u.hat - u1.hat, 2)
    b = kappa * g.norm_sq(state.eta.hat - eta1.hat, 3)
    return a, b, a + b


# ------------------------------------------------------------------ records
@dataclass
class DiagnosticsRecord:
    t: float
    u_h2: float
    grad_eta_h2: float
    ubar_h2: float
    stab: float
    E: float
    D: float
    E1: float
    E2: float
    div_eta_h2: float
    etabar_l2: float
    etabar_sup: float
    drift: float
    iterations: int
    min_jac: float
    max_jac: float
    piola: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return [getattr(self, c) for c in self.columns()]


def make_record(state, u0_avg, varpi, c4=1.0, c5=1.0, kappa=None,
                with_piola=True) -> DiagnosticsRecord:
    g = state.grid
    eh, uh = state.eta.hat, state.u.hat
    kappa = state.params.kappa if kappa is None else kappa
    ubar = uh.copy()
    ubar[:, 0, 0, 0] -= np.asarray(u0_avg, dtype=float)
    gradeta = g.norm_sq(g.grad(eh), 2)
    ubar_sq = g.norm_sq(ubar, 2)
    en = energy_functionals(state, c4, c5)
    l2, sup = straightening(state.eta)
    pack = _pack(state)
    return DiagnosticsRecord(
        t=float(state.t),
        u_h2=math.sqrt(g.norm_sq(uh, 2)),
        grad_eta_h2=math.sqrt(gradeta),
        ubar_h2=math.sqrt(ubar_sq),
        stab=math.sqrt(ubar_sq + kappa * gradeta),
        E=en.E, D=en.D, E1=en.E1, E2=en.E2,
        div_eta_h2=math.sqrt(g.norm_sq(g.div(eh), 2)),
        etabar_l2=l2, etabar_sup=sup,
        drift=drift_residual(state.eta, u0_avg, varpi, state.t),
        iterations=int(getattr(state, "iterations", 0)),
        min_jac=pack.min_jac, max_jac=pack.max_jac,
        piola=piola_residual(pack) if with_piola else float("nan"),
    )


def write_csv(records: Sequence[DiagnosticsRecord], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DiagnosticsRecord.columns())
        for r in records:
            w.writerow([repr(float(x)) if isinstance(x, float) else x for x in r.row()])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]} if rows else {}


SUMMARY_SCHEMA = 1


def summarize(records: Sequence[DiagnosticsRecord], fits: Optional[dict] = None) -> dict:
    cols = {c: np.array([getattr(r, c) for r in records], dtype=float)
            for c in DiagnosticsRecord.columns()}
    out = {
        "schema": SUMMARY_SCHEMA,
        "samples": len(records),
        "final": {k: float(v[-1]) for k, v in cols.items()} if records else {},
        "extrema": {k: [float(np.nanmin(v)), float(np.nanmax(v))]
                    for k, v in cols.items() if np.isfinite(v).any()},
        "fits": {k: asdict(v) for k, v in (fits or {}).items()},
    }
    if len(records) > 1:
        e2 = cols["E2"]
        out["E2_monotone"] = bool(np.all(np.diff(e2[np.isfinite(e2)]) <= 1e-12 * np.nanmax(np.abs(e2))))
    return out


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
